//! Monotone cubic Hermite interpolation of lattice fields.

use crate::field::FieldState;

/// Fritsch-Carlson limiting: clamp slopes so every cell interpolant is
/// monotone whenever its end values are.
pub fn limit_slopes(values: &[f64], slopes: &mut [f64], h: f64) {
    for k in 0..values.len().saturating_sub(1) {
        let delta = (values[k + 1] - values[k]) / h;
        if delta == 0.0 {
            slopes[k] = 0.0;
            slopes[k + 1] = 0.0;
            continue;
        }
        let a = slopes[k] / delta;
        let b = slopes[k + 1] / delta;
        if a < 0.0 {
            slopes[k] = 0.0;
        }
        if b < 0.0 {
            slopes[k + 1] = 0.0;
        }
        let (a, b) = (a.max(0.0), b.max(0.0));
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            slopes[k] = tau * a * delta;
            slopes[k + 1] = tau * b * delta;
        }
    }
}

/// PCHIP slopes (weighted harmonic mean of neighbouring secants).
pub fn pchip_slopes(values: &[f64], h: f64, left: f64, right: f64) -> Vec<f64> {
    let n = values.len();
    let at = |j: i64| -> f64 {
        if j < 0 {
            left
        } else if j as usize >= n {
            right
        } else {
            values[j as usize]
        }
    };
    (0..n as i64)
        .map(|i| {
            let d0 = (at(i) - at(i - 1)) / h;
            let d1 = (at(i + 1) - at(i)) / h;
            if d0 * d1 <= 0.0 {
                0.0
            } else {
                2.0 * d0 * d1 / (d0 + d1)
            }
        })
        .collect()
}

/// Interpolant of a [`FieldState`], using its co-evolved derivative when
/// present and PCHIP slopes otherwise. Constant far field outside.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    offset: i64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
    left: f64,
    right: f64,
}

impl MonotoneCubic {
    pub fn new(field: &FieldState) -> Self {
        let h = field.grid.h;
        let mut slopes = match &field.w {
            Some(w) => w.clone(),
            None => pchip_slopes(&field.u, h, field.left, field.right),
        };
        limit_slopes(&field.u, &mut slopes, h);
        MonotoneCubic {
            offset: field.grid.offset,
            h,
            values: field.u.clone(),
            slopes,
            left: field.left,
            right: field.right,
        }
    }

    /// Cell `j` spans nodes `j, j+1`; `j = -1` and `j = n-1` join the far field.
    #[inline]
    fn cell(&self, j: i64) -> (f64, f64, f64, f64) {
        let n = self.values.len() as i64;
        let node = |k: i64| -> (f64, f64) {
            if k < 0 {
                (self.left, 0.0)
            } else if k >= n {
                (self.right, 0.0)
            } else {
                (self.values[k as usize], self.slopes[k as usize])
            }
        };
        let (y0, m0) = node(j);
        let (y1, m1) = node(j + 1);
        (y0, y1, m0, m1)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let s = x / self.h - self.offset as f64;
        let j = s.floor();
        let t = s - j;
        let (y0, y1, m0, m1) = self.cell(j as i64);
        let h = self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * m1
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let s = x / self.h - self.offset as f64;
        let j = s.floor();
        let t = s - j;
        let (y0, y1, m0, m1) = self.cell(j as i64);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * (y0 - y1)) / self.h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1
    }

    /// Samples `u(x_i - shift)` on `grid` nodes.
    pub fn shifted_samples(&self, grid: &crate::field::Grid, shift: f64) -> Vec<f64> {
        (0..grid.n).map(|i| self.value(grid.x(i) - shift)).collect()
    }
}

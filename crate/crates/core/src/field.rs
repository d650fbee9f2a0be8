//! Uniform grids on a moving window and sampled field states.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FrontError, Result};

/// A uniform window `x_i = (offset + i) * h`, `i = 0..n`.
///
/// Windows always sit on the lattice `h * Z`, so relocating by whole nodes
/// never requires interpolation and `x = 0` is a node whenever it lies inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub offset: i64,
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least two nodes"));
        }
        if !(x_max > x_min) {
            return Err(invalid("x_max", "must exceed x_min"));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        let offset = (x_min / h).round();
        if (offset * h - x_min).abs() > 1e-9 * h.max(x_min.abs()) {
            return Err(invalid(
                "x_min",
                format!("{x_min} is not a multiple of the spacing {h}"),
            ));
        }
        Ok(Grid {
            offset: offset as i64,
            n,
            h,
        })
    }

    /// Symmetric window `[-half_width, half_width]` with spacing `h`.
    pub fn symmetric(half_width: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(invalid("h", "spacing must be positive"));
        }
        let k = (half_width / h).round() as i64;
        if k < 1 {
            return Err(invalid("half_width", "window narrower than one cell"));
        }
        Ok(Grid {
            offset: -k,
            n: (2 * k + 1) as usize,
            h,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.h
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn length(&self) -> f64 {
        (self.n - 1) as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Index of the node at lattice position `k * h`, if inside the window.
    pub fn index_of_lattice(&self, k: i64) -> Option<usize> {
        let i = k - self.offset;
        (0..self.n as i64).contains(&i).then_some(i as usize)
    }

    /// Fractional index of position `x` (may lie outside `[0, n-1]`).
    #[inline]
    pub fn fractional_index(&self, x: f64) -> f64 {
        x / self.h - self.offset as f64
    }

    pub fn shifted(&self, nodes: i64) -> Grid {
        Grid {
            offset: self.offset + nodes,
            ..*self
        }
    }
}

/// A sampled profile at time `t` with constant far-field extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub grid: Grid,
    pub u: Vec<f64>,
    pub left: f64,
    pub right: f64,
    /// Co-evolved spatial derivative, if tracked. Its far field is zero.
    pub w: Option<Vec<f64>>,
}

impl FieldState {
    pub fn new(t: f64, grid: Grid, u: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        if u.len() != grid.n {
            return Err(invalid(
                "u",
                format!("{} samples for {} nodes", u.len(), grid.n),
            ));
        }
        Ok(FieldState {
            t,
            grid,
            u,
            left,
            right,
            w: None,
        })
    }

    pub fn from_fn(t: f64, grid: Grid, left: f64, right: f64, f: impl Fn(f64) -> f64) -> Self {
        let u = (0..grid.n).map(|i| f(grid.x(i))).collect();
        FieldState {
            t,
            grid,
            u,
            left,
            right,
            w: None,
        }
    }

    pub fn constant(t: f64, grid: Grid, value: f64) -> Self {
        Self::from_fn(t, grid, value, value, |_| value)
    }

    pub fn with_derivative(mut self, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), self.grid.n);
        self.w = Some(w);
        self
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Value at node index `j`, which may lie outside the window.
    #[inline]
    pub fn extended(&self, j: i64) -> f64 {
        if j < 0 {
            self.left
        } else if j as usize >= self.u.len() {
            self.right
        } else {
            self.u[j as usize]
        }
    }

    /// Piecewise-linear value at an arbitrary position, far field outside.
    pub fn value_at(&self, x: f64) -> f64 {
        let s = self.grid.fractional_index(x);
        let j = s.floor();
        let frac = s - j;
        let j = j as i64;
        let a = self.extended(j);
        let b = self.extended(j + 1);
        a + frac * (b - a)
    }

    /// Relocate the window by `nodes` (positive moves right), filling new
    /// nodes from the far field.
    pub fn shift_window(&mut self, nodes: i64) {
        if nodes == 0 {
            return;
        }
        shift_slice(&mut self.u, nodes, self.left, self.right);
        if let Some(w) = self.w.as_mut() {
            shift_slice(w, nodes, 0.0, 0.0);
        }
        self.grid = self.grid.shifted(nodes);
    }

    /// Largest rise `u_{i+1} - u_i` (including the far-field joins) and its index.
    pub fn max_rise(&self) -> (usize, f64) {
        let mut worst = (0, self.u[0] - self.left);
        for i in 0..self.u.len() - 1 {
            let d = self.u[i + 1] - self.u[i];
            if d > worst.1 {
                worst = (i, d);
            }
        }
        let last = self.right - self.u[self.u.len() - 1];
        if last > worst.1 {
            worst = (self.u.len() - 1, last);
        }
        worst
    }

    pub fn check_monotone(&self, tol: f64) -> Result<()> {
        let (index, rise) = self.max_rise();
        if rise > tol {
            return Err(FrontError::NotMonotone { index, rise });
        }
        Ok(())
    }

    /// Range of the samples.
    pub fn min_max(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn shift_slice(v: &mut [f64], nodes: i64, left: f64, right: f64) {
    let n = v.len();
    let k = nodes.unsigned_abs() as usize;
    if nodes > 0 {
        if k >= n {
            v.fill(right);
            return;
        }
        v.copy_within(k.., 0);
        v[n - k..].fill(right);
    } else {
        if k >= n {
            v.fill(left);
            return;
        }
        v.copy_within(..n - k, k);
        v[..k].fill(left);
    }
}

//! Interface tracking, width, steepness and tail diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FrontError, Result};
use crate::field::FieldState;
use crate::interp::MonotoneCubic;
use crate::kernels::{iterated_kernel_with_cap, Kernel, DEFAULT_ORDER_CAP};
use crate::reactions::IgnitionNonlinearity;

/// Monotonicity tolerance for level location.
pub const MONOTONE_TOL: f64 = 1e-10;
/// Smallest `|u_x|` accepted when converting `u_t` into an interface speed.
pub const STEEPNESS_FLOOR: f64 = 1e-6;

/// Fractional index `s` of the first downward crossing of `level`, scanning
/// from the left far field. The crossing sits at `x(0) + s h`; `s` lies in
/// `(-1, n-1]`.
pub fn first_crossing(u: &[f64], left: f64, level: f64) -> Option<f64> {
    if left < level {
        return None;
    }
    let mut prev = left;
    for (i, &v) in u.iter().enumerate() {
        if v < level {
            let frac = (prev - level) / (prev - v);
            return Some(i as f64 - 1.0 + frac);
        }
        prev = v;
    }
    None
}

/// Position where a monotone nonincreasing field crosses `level`.
pub fn locate_level(field: &FieldState, level: f64) -> Result<f64> {
    if !(field.left > level && level > field.right) {
        return Err(FrontError::NotBracketed { level });
    }
    field.check_monotone(MONOTONE_TOL)?;
    locate_level_unchecked(field, level)
}

/// First crossing from the left without the monotonicity check.
pub fn locate_level_unchecked(field: &FieldState, level: f64) -> Result<f64> {
    let s = first_crossing(&field.u, field.left, level)
        .or_else(|| {
            (field.right < level && field.left >= level).then_some((field.len() - 1) as f64 + 1.0)
        })
        .ok_or(FrontError::NotBracketed { level })?;
    if s > (field.len() - 1) as f64 {
        // Crossing between the last node and the right far field lies outside.
        return Err(FrontError::NotBracketed { level });
    }
    Ok(field.grid.x(0) + s * field.grid.h)
}

/// First crossing refined by safeguarded Newton on the monotone Hermite
/// interpolant. Smooth in time along a run, unlike the linear crossing.
pub fn locate_level_refined(field: &FieldState, level: f64) -> Option<f64> {
    let s = first_crossing(&field.u, field.left, level)?;
    let h = field.grid.h;
    let x0 = field.grid.x(0) + s * h;
    let p = MonotoneCubic::new(field);
    let (mut lo, mut hi) = (x0 - h, x0 + h);
    let mut x = x0;
    for _ in 0..60 {
        let g = p.value(x) - level;
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = p.derivative(x);
        let mut next = if d < 0.0 { x - g / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() < 1e-14 {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

/// `X_eps - X_{1-eps}`.
pub fn interface_width(field: &FieldState, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid("eps", "must lie in (0, 1/2)"));
    }
    Ok(locate_level(field, eps)? - locate_level(field, 1.0 - eps)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrack {
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
    /// `positions[k][j]` is `X_{levels[j]}(times[k])`.
    pub positions: Vec<Vec<f64>>,
    /// Centred difference quotients of the positions (one-sided at the ends).
    pub speeds: Vec<Vec<f64>>,
}

impl FrontTrack {
    pub fn from_snapshots(snapshots: &[FieldState], levels: &[f64]) -> Result<Self> {
        let mut times = Vec::with_capacity(snapshots.len());
        let mut positions = Vec::with_capacity(snapshots.len());
        for s in snapshots {
            times.push(s.t);
            positions.push(
                levels
                    .iter()
                    .map(|&l| locate_level(s, l))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let m = times.len();
        let speeds = (0..m)
            .map(|k| {
                let (a, b) = match m {
                    0 | 1 => (k, k),
                    _ if k == 0 => (0, 1),
                    _ if k == m - 1 => (m - 2, m - 1),
                    _ => (k - 1, k + 1),
                };
                (0..levels.len())
                    .map(|j| {
                        if a == b {
                            0.0
                        } else {
                            (positions[b][j] - positions[a][j]) / (times[b] - times[a])
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(FrontTrack {
            levels: levels.to_vec(),
            times,
            positions,
            speeds,
        })
    }

    /// Rows `(t, lambda, X, speed)`.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        let mut out = Vec::new();
        for (k, t) in self.times.iter().enumerate() {
            for (j, l) in self.levels.iter().enumerate() {
                out.push([*t, *l, self.positions[k][j], self.speeds[k][j]]);
            }
        }
        out
    }
}

/// `u_t = J*u - u + f(t,u)` at every node.
pub fn time_derivative(
    field: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
) -> Result<Vec<f64>> {
    let ju = crate::kernels::convolve(kernel, field)?;
    let a = f.modulation.value(field.t);
    Ok(ju
        .iter()
        .zip(&field.u)
        .map(|(c, u)| c - u + a * f.base.value(*u))
        .collect())
}

fn linear_at(field: &FieldState, values: &[f64], x: f64) -> f64 {
    let s = field.grid.fractional_index(x);
    let j = (s.floor().max(0.0) as usize).min(values.len() - 2);
    let frac = (s - j as f64).clamp(0.0, 1.0);
    values[j] + frac * (values[j + 1] - values[j])
}

/// `-u_t / u_x` at `X_level`, with `u_t` from the right-hand side and `u_x`
/// from the co-evolved derivative (or the bracketing secant).
pub fn interface_speed(
    field: &FieldState,
    level: f64,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
) -> Result<f64> {
    let x = locate_level(field, level)?;
    let ut = time_derivative(field, kernel, f)?;
    let ux = match &field.w {
        Some(w) => linear_at(field, w, x),
        None => {
            let s = field.grid.fractional_index(x);
            let j = (s.floor().max(0.0) as usize).min(field.len() - 2);
            (field.u[j + 1] - field.u[j]) / field.grid.h
        }
    };
    if !(ux.abs() >= STEEPNESS_FLOOR) {
        return Err(FrontError::SteepnessFloor {
            value: ux,
            floor: STEEPNESS_FLOOR,
        });
    }
    Ok(-linear_at(field, &ut, x) / ux)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub side: Side,
    /// Positive decay rate into the far field.
    pub rate: f64,
    /// `|v| ~ amplitude * exp(-rate |x|)` in the fitted direction.
    pub amplitude: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub points: usize,
}

/// Magnitude band accepted by the tail fit.
pub const TAIL_BAND: (f64, f64) = (1e-12, 1e-2);

/// Least-squares line through `ln |v|` against `x` over `window`.
pub fn fit_exponential_tail(
    x: &[f64],
    v: &[f64],
    side: Side,
    window: (f64, f64),
) -> Result<TailFit> {
    let mut sign = 0.0;
    let mut pts = Vec::new();
    for (&xi, &vi) in x.iter().zip(v) {
        if xi < window.0 || xi > window.1 {
            continue;
        }
        let m = vi.abs();
        if !(TAIL_BAND.0..=TAIL_BAND.1).contains(&m) {
            continue;
        }
        let s = vi.signum();
        if sign == 0.0 {
            sign = s;
        } else if s != sign {
            return Err(FrontError::TailFit(format!("sign change at x = {xi}")));
        }
        pts.push((xi, m.ln()));
    }
    if pts.len() < 8 {
        return Err(FrontError::TailFit(format!(
            "{} usable points in [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, r2) = least_squares(&pts);
    let rate = match side {
        Side::Right => -slope,
        Side::Left => slope,
    };
    Ok(TailFit {
        side,
        rate,
        amplitude: intercept.exp(),
        window,
        r2,
        points: pts.len(),
    })
}

/// `(slope, intercept, R^2)` of an ordinary least-squares line.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, intercept, r2)
}

/// Maximum of `w` over `[x_c - m, x_c + m]`, endpoints interpolated.
pub fn steepness(field: &FieldState, w: &[f64], x_c: f64, m: f64) -> Result<f64> {
    let (lo, hi) = (x_c - m, x_c + m);
    let (x_min, x_max) = (field.grid.x_min(), field.grid.x_max());
    if lo < x_min || hi > x_max {
        return Err(FrontError::OutsideWindow {
            lo,
            hi,
            x_min,
            x_max,
        });
    }
    let mut best = linear_at(field, w, lo).max(linear_at(field, w, hi));
    let first = field.grid.fractional_index(lo).ceil() as usize;
    let last = field.grid.fractional_index(hi).floor() as usize;
    for v in &w[first..=last.min(w.len() - 1)] {
        best = best.max(*v);
    }
    Ok(best)
}

/// `max |v_{i+1} - v_i| / h`.
pub fn lipschitz_estimate(samples: &[f64], h: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(invalid("samples", "need at least two"));
    }
    Ok(samples
        .windows(2)
        .map(|p| (p[1] - p[0]).abs() / h)
        .fold(0.0, f64::max))
}

/// Constant of the steepness-propagation inequality
/// `u_x(t0 + dt, x) <= C * int_{z-h}^{z+h} u_x(t0, y) dy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteepnessBoundConstant {
    pub k: f64,
    pub n: usize,
    pub dt: f64,
    pub t_sub: f64,
    pub c_tilde: f64,
    pub c: f64,
    pub offset: f64,
    pub h_int: f64,
}

pub fn steepness_bound_constant(
    kernel: &Kernel,
    c_fu: f64,
    dt: f64,
    offset: f64,
    h_int: f64,
) -> Result<SteepnessBoundConstant> {
    steepness_bound_constant_with_cap(kernel, c_fu, dt, offset, h_int, DEFAULT_ORDER_CAP)
}

pub fn steepness_bound_constant_with_cap(
    kernel: &Kernel,
    c_fu: f64,
    dt: f64,
    offset: f64,
    h_int: f64,
    cap: usize,
) -> Result<SteepnessBoundConstant> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(h_int > 0.0) {
        return Err(invalid("h_int", "must be positive"));
    }
    let (lo, hi) = (offset.abs() - h_int, offset.abs() + h_int);
    let base = iterated_kernel_with_cap(kernel, 1, cap.max(1))?;
    let mut power = base.clone();
    for n in 1..=cap {
        if n > 1 {
            power = power.compose(&base);
        }
        let c_tilde = power.inf_on(lo, hi);
        if c_tilde > 0.0 {
            let t_sub = dt / n as f64;
            let c = c_tilde * (-(1.0 + c_fu) * dt).exp() * t_sub.powi(n as i32);
            return Ok(SteepnessBoundConstant {
                k: c_fu,
                n,
                dt,
                t_sub,
                c_tilde,
                c,
                offset,
                h_int,
            });
        }
    }
    Err(FrontError::NoPositiveOrder { cap })
}

/// Trapezoid integral of `w` over `[a, b]`, endpoints interpolated.
pub fn integrate_window(field: &FieldState, w: &[f64], a: f64, b: f64) -> f64 {
    let h = field.grid.h;
    let sa = field.grid.fractional_index(a);
    let sb = field.grid.fractional_index(b);
    let first = sa.ceil() as usize;
    let last = sb.floor() as usize;
    let wa = linear_at(field, w, a);
    let wb = linear_at(field, w, b);
    if first > last {
        return 0.5 * (wa + wb) * (b - a);
    }
    let mut total = 0.5 * (wa + w[first]) * (field.grid.x(first) - a);
    for i in first..last {
        total += 0.5 * (w[i] + w[i + 1]) * h;
    }
    total + 0.5 * (w[last] + wb) * (b - field.grid.x(last))
}

/// One evaluated instance of the steepness-propagation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteepnessCheck {
    pub t0: f64,
    pub dt: f64,
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; the inequality holds when this is nonnegative.
    pub margin: f64,
}

/// Evaluate `w(t1, x) <= C int_{z-h}^{z+h} w(t0, y) dy` for `z = X(t0)` and
/// each `x` in `offsets` relative to `z`.
pub fn check_steepness_inequality(
    kernel: &Kernel,
    c_fu: f64,
    before: &FieldState,
    after: &FieldState,
    z: f64,
    h_int: f64,
    offsets: &[f64],
) -> Result<Vec<SteepnessCheck>> {
    let w0 = before
        .w
        .as_ref()
        .ok_or_else(|| FrontError::Precondition("snapshot lacks a derivative".into()))?;
    let w1 = after
        .w
        .as_ref()
        .ok_or_else(|| FrontError::Precondition("snapshot lacks a derivative".into()))?;
    let dt = after.t - before.t;
    let integral = integrate_window(before, w0, z - h_int, z + h_int);
    offsets
        .iter()
        .map(|&d| {
            let x = z + d;
            let c = steepness_bound_constant(kernel, c_fu, dt, d, h_int)?;
            let lhs = linear_at(after, w1, x);
            let rhs = c.c * integral;
            Ok(SteepnessCheck {
                t0: before.t,
                dt,
                x,
                lhs,
                rhs,
                margin: rhs - lhs,
            })
        })
        .collect()
}

//! Explicit RK4 integration of `u_t = J*u - u + f(t,u)` on a moving window,
//! with optional co-evolution of `w = u_x` and construction of the
//! approximating fronts `u(t,x;s)`.

use serde::{Deserialize, Serialize};

use crate::conv::{ConvolutionMethod, ConvolutionPlan};
use crate::error::{invalid, FrontError, Result};
use crate::field::{FieldState, Grid};
use crate::fronts::first_crossing;
use crate::interp::MonotoneCubic;
use crate::kernels::Kernel;
use crate::reactions::{IgnitionNonlinearity, GUARD_RANGE};
use crate::waves::TravelingWave;

/// Smallest window accepted for a kernel: `2R/h + 64` nodes.
pub fn min_window_nodes(kernel: &Kernel) -> usize {
    2 * kernel.half + 64
}

/// Right-hand side workspace for one window size.
#[derive(Debug, Clone)]
pub struct Integrator {
    f: IgnitionNonlinearity,
    h: f64,
    n: usize,
    min_nodes: usize,
    dt: f64,
    dt_max: f64,
    plan: ConvolutionPlan,
    with_w: bool,
    ju: Vec<f64>,
    jpu: Vec<f64>,
    ku: [Vec<f64>; 4],
    kw: [Vec<f64>; 4],
    kfar: [(f64, f64); 4],
    su: Vec<f64>,
    sw: Vec<f64>,
}

impl Integrator {
    pub fn new(
        kernel: &Kernel,
        f: &IgnitionNonlinearity,
        n: usize,
        dt: f64,
        with_w: bool,
        method: ConvolutionMethod,
    ) -> Result<Self> {
        let dt_max = f.dt_max();
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if dt > dt_max {
            return Err(FrontError::StepTooLarge { dt, dt_max });
        }
        if n < min_window_nodes(kernel) {
            return Err(FrontError::WindowTooNarrow {
                nodes: n,
                stencil: kernel.stencil_len(),
            });
        }
        let zeros = || vec![0.0; n];
        Ok(Integrator {
            f: f.clone(),
            h: kernel.h,
            n,
            min_nodes: kernel.stencil_len(),
            dt,
            dt_max,
            plan: kernel.plan(n, with_w, method),
            with_w,
            ju: zeros(),
            jpu: zeros(),
            ku: [zeros(), zeros(), zeros(), zeros()],
            kw: [zeros(), zeros(), zeros(), zeros()],
            kfar: [(0.0, 0.0); 4],
            su: zeros(),
            sw: zeros(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn nonlinearity(&self) -> &IgnitionNonlinearity {
        &self.f
    }

    pub fn convolution_method(&self) -> ConvolutionMethod {
        self.plan.method()
    }

    fn check(&self, state: &FieldState) -> Result<()> {
        if state.len() != self.n {
            return Err(invalid(
                "state",
                format!("{} nodes, plan has {}", state.len(), self.n),
            ));
        }
        if (state.grid.h - self.h).abs() > 1e-12 * self.h {
            return Err(FrontError::SpacingMismatch {
                field: state.grid.h,
                kernel: self.h,
            });
        }
        if self.with_w && state.w.is_none() {
            return Err(invalid(
                "state",
                "integrator expects a co-evolved derivative",
            ));
        }
        debug_assert!(self.n >= self.min_nodes);
        Ok(())
    }

    /// `J*u - u + f(t,u)` at every node.
    pub fn rhs(&mut self, t: f64, state: &FieldState, out: &mut [f64]) -> Result<()> {
        self.check(state)?;
        self.plan
            .apply(&state.u, state.left, state.right, &mut self.ju);
        let a = self.f.modulation.value(t);
        for ((o, &c), &u) in out.iter_mut().zip(&self.ju).zip(&state.u) {
            *o = c - u + a * self.f.base.value(u);
        }
        Ok(())
    }

    /// Evaluates one stage into slot `k`.
    fn stage(&mut self, k: usize, t: f64, u: &[f64], w: Option<&[f64]>, far: (f64, f64)) {
        let a = self.f.modulation.value(t);
        let base = &self.f.base;
        if let Some(w) = w {
            self.plan
                .apply_both(u, far.0, far.1, &mut self.ju, &mut self.jpu);
            let (ku, kw) = (&mut self.ku[k], &mut self.kw[k]);
            for i in 0..u.len() {
                let ui = u[i];
                ku[i] = self.ju[i] - ui + a * base.value(ui);
                kw[i] = self.jpu[i] - w[i] + a * base.du(ui) * w[i];
            }
        } else {
            self.plan.apply(u, far.0, far.1, &mut self.ju);
            let ku = &mut self.ku[k];
            for i in 0..u.len() {
                let ui = u[i];
                ku[i] = self.ju[i] - ui + a * base.value(ui);
            }
        }
        // Far fields follow the scalar ODE; J*c - c vanishes for constants.
        self.kfar[k] = (a * base.value(far.0), a * base.value(far.1));
    }

    /// One classical RK4 step of length `dt`, in place.
    pub fn step(&mut self, state: &mut FieldState) -> Result<()> {
        self.check(state)?;
        let dt = self.dt;
        let t = state.t;
        let far0 = (state.left, state.right);
        let has_w = self.with_w;

        let u0 = std::mem::take(&mut state.u);
        let w0 = state.w.take();
        let mut su = std::mem::take(&mut self.su);
        let mut sw = std::mem::take(&mut self.sw);

        self.stage(0, t, &u0, w0.as_deref(), far0);
        let offsets = [0.5 * dt, 0.5 * dt, dt];
        for s in 1..4 {
            let c = offsets[s - 1];
            for i in 0..u0.len() {
                su[i] = u0[i] + c * self.ku[s - 1][i];
            }
            if let Some(w) = &w0 {
                for i in 0..w.len() {
                    sw[i] = w[i] + c * self.kw[s - 1][i];
                }
            }
            let far = (
                far0.0 + c * self.kfar[s - 1].0,
                far0.1 + c * self.kfar[s - 1].1,
            );
            let ts = t + c;
            self.stage(s, ts, &su, has_w.then_some(&sw[..]), far);
        }

        let sixth = dt / 6.0;
        let mut u1 = u0;
        for (i, v) in u1.iter_mut().enumerate() {
            *v +=
                sixth * (self.ku[0][i] + 2.0 * self.ku[1][i] + 2.0 * self.ku[2][i] + self.ku[3][i]);
        }
        let w1 = w0.map(|mut w| {
            for (i, v) in w.iter_mut().enumerate() {
                *v += sixth
                    * (self.kw[0][i] + 2.0 * self.kw[1][i] + 2.0 * self.kw[2][i] + self.kw[3][i]);
            }
            w
        });
        let kf = &self.kfar;
        state.left = far0.0 + sixth * (kf[0].0 + 2.0 * kf[1].0 + 2.0 * kf[2].0 + kf[3].0);
        state.right = far0.1 + sixth * (kf[0].1 + 2.0 * kf[1].1 + 2.0 * kf[2].1 + kf[3].1);
        state.u = u1;
        state.w = w1;
        state.t = t + dt;
        self.su = su;
        self.sw = sw;

        for &v in state.u.iter().chain([state.left, state.right].iter()) {
            if !v.is_finite() {
                return Err(FrontError::NonFinite { t: state.t });
            }
            if !(GUARD_RANGE.0..=GUARD_RANGE.1).contains(&v) {
                return Err(FrontError::GuardRange { u: v });
            }
        }
        if let Some(w) = &state.w {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(FrontError::NonFinite { t: state.t });
            }
        }
        Ok(())
    }
}

/// Advance `state` by a single RK4 step.
pub fn step(
    state: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    dt: f64,
) -> Result<FieldState> {
    let mut integ = Integrator::new(
        kernel,
        f,
        state.len(),
        dt,
        state.w.is_some(),
        ConvolutionMethod::Auto,
    )?;
    let mut next = state.clone();
    integ.step(&mut next)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowPolicy {
    Fixed,
    /// Re-centre by whole nodes whenever the first `level` crossing leaves
    /// the middle third of the window.
    MiddleThird {
        level: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relocation {
    pub t: f64,
    pub nodes: i64,
    /// Grid offset after the shift.
    pub offset: i64,
}

impl WindowPolicy {
    /// Nodes to shift by, if any. Errors if the front has come within a
    /// stencil of either edge.
    pub fn relocation(&self, state: &FieldState, margin: usize) -> Result<Option<i64>> {
        match *self {
            WindowPolicy::Fixed => Ok(None),
            WindowPolicy::MiddleThird { level } => {
                let n = state.len();
                let s = first_crossing(&state.u, state.left, level)
                    .ok_or(FrontError::FrontLost { t: state.t })?;
                if s < margin as f64 || s > (n - 1 - margin) as f64 {
                    return Err(FrontError::FrontLost { t: state.t });
                }
                if s < n as f64 / 3.0 || s > 2.0 * n as f64 / 3.0 {
                    let shift = (s - (n - 1) as f64 / 2.0).round() as i64;
                    Ok((shift != 0).then_some(shift))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Snapshot spacing in time units (rounded to whole steps).
    pub cadence: f64,
    pub window: WindowPolicy,
    pub method: ConvolutionMethod,
}

/// Step count and effective step for `[t0, t_end]` with steps at most `dt`.
pub fn step_plan(t0: f64, t_end: f64, dt: f64) -> (usize, f64) {
    let span = t_end - t0;
    if span <= 0.0 {
        return (0, dt);
    }
    let ratio = span / dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    (steps, span / steps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<FieldState>,
    pub relocations: Vec<Relocation>,
}

/// Evolve to `opts.t_end`, calling `observe` on the initial state, every
/// `cadence` and at the end. Returns the final state and relocation log.
pub fn evolve_with<F>(
    mut state: FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    opts: &EvolveOptions,
    mut observe: F,
) -> Result<(FieldState, Vec<Relocation>)>
where
    F: FnMut(&FieldState) -> Result<()>,
{
    let (steps, dt) = step_plan(state.t, opts.t_end, opts.dt);
    let mut integ = Integrator::new(kernel, f, state.len(), dt, state.w.is_some(), opts.method)?;
    let every = ((opts.cadence / dt).round() as usize).max(1);
    let t0 = state.t;
    let mut relocations = Vec::new();
    observe(&state)?;
    for k in 1..=steps {
        integ.step(&mut state)?;
        state.t = t0 + k as f64 * dt;
        if let Some(nodes) = opts.window.relocation(&state, kernel.half)? {
            state.shift_window(nodes);
            relocations.push(Relocation {
                t: state.t,
                nodes,
                offset: state.grid.offset,
            });
        }
        if k % every == 0 || k == steps {
            observe(&state)?;
        }
    }
    Ok((state, relocations))
}

pub fn evolve(
    state: FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    let (_, relocations) = evolve_with(state, kernel, f, opts, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        snapshots,
        relocations,
    })
}

/// Evolve a reference state and any number of followers with identical
/// steppers and a shared window. Relocation is driven by the reference.
/// `observe` sees every step; `k` counts steps from the start.
pub fn evolve_lockstep<F>(
    mut reference: FieldState,
    mut followers: Vec<FieldState>,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    opts: &EvolveOptions,
    mut observe: F,
) -> Result<(FieldState, Vec<FieldState>, Vec<Relocation>)>
where
    F: FnMut(usize, &FieldState, &[FieldState]) -> Result<()>,
{
    for fo in &followers {
        if fo.grid != reference.grid || (fo.t - reference.t).abs() > 1e-12 {
            return Err(FrontError::Precondition(
                "lockstep followers must share the reference grid and time".into(),
            ));
        }
    }
    let (steps, dt) = step_plan(reference.t, opts.t_end, opts.dt);
    let mut integ_ref = Integrator::new(
        kernel,
        f,
        reference.len(),
        dt,
        reference.w.is_some(),
        opts.method,
    )?;
    let mut integ_fol = Vec::with_capacity(followers.len());
    for fo in &followers {
        integ_fol.push(Integrator::new(
            kernel,
            f,
            fo.len(),
            dt,
            fo.w.is_some(),
            opts.method,
        )?);
    }
    let t0 = reference.t;
    let mut relocations = Vec::new();
    observe(0, &reference, &followers)?;
    for k in 1..=steps {
        let t = t0 + k as f64 * dt;
        integ_ref.step(&mut reference)?;
        reference.t = t;
        for (fo, integ) in followers.iter_mut().zip(integ_fol.iter_mut()) {
            integ.step(fo)?;
            fo.t = t;
        }
        if let Some(nodes) = opts.window.relocation(&reference, kernel.half)? {
            reference.shift_window(nodes);
            for fo in followers.iter_mut() {
                fo.shift_window(nodes);
            }
            relocations.push(Relocation {
                t,
                nodes,
                offset: reference.grid.offset,
            });
        }
        observe(k, &reference, &followers)?;
    }
    Ok((reference, followers, relocations))
}

/// A run `u(t,x;s)` seeded by the traveling wave at time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxFrontRun {
    pub s: f64,
    pub y_s: f64,
    /// `u(0,0;s) - theta`.
    pub normalization_error: f64,
    pub snapshots: Vec<FieldState>,
    /// `(t, X_theta(t))` at every snapshot.
    pub track: Vec<(f64, f64)>,
    pub relocations: Vec<Relocation>,
    /// Outer iterations spent locating `y_s`.
    pub shift_iterations: usize,
}

impl ApproxFrontRun {
    /// Snapshot closest to time `t`.
    pub fn snapshot_at(&self, t: f64) -> Option<&FieldState> {
        self.snapshots.iter().min_by(|a, b| {
            (a.t - t)
                .abs()
                .partial_cmp(&(b.t - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontRunOptions {
    pub s: f64,
    pub t_end: f64,
    pub dt: f64,
    pub cadence: f64,
    /// Window half-width in length units.
    pub half_width: f64,
    pub method: ConvolutionMethod,
    /// Tolerance on `|u(0,0;s) - theta|`.
    pub normalization_tol: f64,
}

impl Default for FrontRunOptions {
    fn default() -> Self {
        FrontRunOptions {
            s: -30.0,
            t_end: 60.0,
            dt: 0.0625,
            cadence: 0.5,
            half_width: 100.0,
            method: ConvolutionMethod::Auto,
            normalization_tol: 1e-6,
        }
    }
}

/// Seed `phi(x - y)` with derivative on a window centred near `y`.
pub fn seed_from_wave(wave: &TravelingWave, y: f64, t: f64, half_width: f64) -> Result<FieldState> {
    let h = wave.grid.h;
    let centre = (y / h).round() as i64;
    let grid = Grid::symmetric(half_width, h)?.shifted(centre);
    let profile = MonotoneCubic::new(&wave.as_field());
    let u = (0..grid.n).map(|i| profile.value(grid.x(i) - y)).collect();
    let w = (0..grid.n)
        .map(|i| profile.derivative(grid.x(i) - y))
        .collect();
    Ok(FieldState::new(t, grid, u, 1.0, 0.0)?.with_derivative(w))
}

/// Builds `u(t,x;s)` with `y_s` chosen so that `u(0,0;s) = theta`.
///
/// `y_s` is first predicted from translation invariance (one unshifted run)
/// and then refined by a bracketed Illinois iteration on `u(0,0;s)`, which
/// is increasing in `y`.
pub fn build_approx_front(
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    wave: &TravelingWave,
    opts: &FrontRunOptions,
) -> Result<ApproxFrontRun> {
    if !(opts.s < 0.0) {
        return Err(invalid("s", "must be negative"));
    }
    if opts.t_end < 0.0 {
        return Err(invalid("t_end", "must be at least 0"));
    }
    let theta = f.theta;
    let policy = WindowPolicy::MiddleThird { level: theta };
    let to_zero = EvolveOptions {
        t_end: 0.0,
        dt: opts.dt,
        cadence: f64::INFINITY,
        window: policy,
        method: opts.method,
    };
    let run_to_zero = |y: f64| -> Result<FieldState> {
        let seed = seed_from_wave(wave, y, opts.s, opts.half_width)?;
        let (end, _) = evolve_with(seed, kernel, f, &to_zero, |_| Ok(()))?;
        Ok(end)
    };
    let hit = |y: f64| -> Result<f64> {
        let end = run_to_zero(y)?;
        let i = end
            .grid
            .index_of_lattice(0)
            .ok_or_else(|| FrontError::Bracket(format!("x = 0 left the window for y = {y}")))?;
        Ok(end.u[i] - theta)
    };

    let base = run_to_zero(0.0)?;
    let x0 = first_crossing(&base.u, base.left, theta)
        .map(|s| base.grid.x(0) + s * base.grid.h)
        .ok_or(FrontError::FrontLost { t: 0.0 })?;
    let mut iterations = 1;

    let mut y_a = -x0;
    let mut g_a = hit(y_a)?;
    iterations += 1;
    let mut best = (y_a, g_a);
    if g_a.abs() > opts.normalization_tol * 1e-3 {
        // Expand geometrically until the sign changes.
        let dir = if g_a < 0.0 { 1.0 } else { -1.0 };
        let mut delta = 0.25 * kernel.h;
        let (mut y_b, mut g_b);
        loop {
            y_b = y_a + dir * delta;
            g_b = hit(y_b)?;
            iterations += 1;
            if g_b.signum() != g_a.signum() || g_b == 0.0 {
                break;
            }
            y_a = y_b;
            g_a = g_b;
            delta *= 2.0;
            if delta > opts.half_width {
                return Err(FrontError::Bracket(
                    "no sign change of u(0,0;s) - theta within the window".into(),
                ));
            }
        }
        if g_b.abs() < best.1.abs() {
            best = (y_b, g_b);
        }
        if g_a.abs() < best.1.abs() {
            best = (y_a, g_a);
        }
        // Illinois iteration on [y_a, y_b].
        let mut side = 0i8;
        for _ in 0..60 {
            if best.1.abs() <= opts.normalization_tol * 1e-3 || (y_b - y_a).abs() < 1e-13 {
                break;
            }
            let y = (y_a * g_b - y_b * g_a) / (g_b - g_a);
            let g = hit(y)?;
            iterations += 1;
            if g.abs() < best.1.abs() {
                best = (y, g);
            }
            if g.signum() == g_b.signum() {
                y_b = y;
                g_b = g;
                if side == -1 {
                    g_a *= 0.5;
                }
                side = -1;
            } else {
                y_a = y;
                g_a = g;
                if side == 1 {
                    g_b *= 0.5;
                }
                side = 1;
            }
        }
    }
    let y_s = best.0;

    let seed = seed_from_wave(wave, y_s, opts.s, opts.half_width)?;
    let mut snapshots = Vec::new();
    let mut first = EvolveOptions {
        t_end: 0.0,
        dt: opts.dt,
        cadence: opts.cadence,
        window: policy,
        method: opts.method,
    };
    let (at_zero, mut relocations) = evolve_with(seed, kernel, f, &first, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    let i0 = at_zero
        .grid
        .index_of_lattice(0)
        .ok_or(FrontError::FrontLost { t: 0.0 })?;
    let normalization_error = at_zero.u[i0] - theta;
    if normalization_error.abs() > opts.normalization_tol {
        return Err(FrontError::NoConvergence {
            iterations,
            residual: normalization_error.abs(),
        });
    }
    if opts.t_end > 0.0 {
        first.t_end = opts.t_end;
        snapshots.pop();
        let (_, more) = evolve_with(at_zero, kernel, f, &first, |s| {
            snapshots.push(s.clone());
            Ok(())
        })?;
        relocations.extend(more);
    }
    let track = snapshots
        .iter()
        .filter_map(|s| {
            first_crossing(&s.u, s.left, theta).map(|p| (s.t, s.grid.x(0) + p * s.grid.h))
        })
        .collect();
    Ok(ApproxFrontRun {
        s: opts.s,
        y_s,
        normalization_error,
        snapshots,
        track,
        relocations,
        shift_iterations: iterations,
    })
}

//! Homogeneous traveling waves `J*phi - phi + c phi' + f(phi) = 0`,
//! `phi(-inf) = 1`, `phi(inf) = 0`, `phi(0) = theta`.

use serde::{Deserialize, Serialize};

use crate::conv::{ConvolutionMethod, ConvolutionPlan};
use crate::error::{invalid, FrontError, Result};
use crate::evolve::{Integrator, WindowPolicy};
use crate::field::{FieldState, Grid};
use crate::fronts::{least_squares, locate_level_refined};
use crate::interp::MonotoneCubic;
use crate::kernels::Kernel;
use crate::reactions::{IgnitionNonlinearity, Modulation};

/// Required closeness of the window-end values to the far fields.
pub const WINDOW_END_TOL: f64 = 1e-6;
/// Smallest half-width used by the evolution stage.
pub const EVOLUTION_HALF_WIDTH: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSpec {
    /// Window `[-half_width, half_width]`.
    pub half_width: f64,
    /// Sup-norm target for the discrete wave residual.
    pub tol: f64,
    pub dt: f64,
    /// Centre of the initial smoothed step.
    pub initial_shift: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Interval between alignment checks.
    pub check_every: f64,
    /// Sup-norm change of the aligned profile that counts as settled.
    pub align_tol: f64,
    pub max_polish_iterations: usize,
    pub method: ConvolutionMethod,
}

impl Default for WaveSpec {
    fn default() -> Self {
        WaveSpec {
            half_width: 80.0,
            tol: 1e-9,
            dt: 0.0625,
            initial_shift: 0.0,
            t_min: 50.0,
            t_max: 1000.0,
            check_every: 10.0,
            align_tol: 1e-5,
            max_polish_iterations: 400_000,
            method: ConvolutionMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelingWave {
    pub c: f64,
    pub theta: f64,
    pub grid: Grid,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Sup norm of the discrete wave operator at `(c, phi)`.
    pub residual: f64,
    pub window_end_ok: bool,
    /// Speed read from the evolution stage (zero when seeded from a wave).
    pub evolution_speed: f64,
    pub evolution_time: f64,
    pub polish_iterations: usize,
}

impl TravelingWave {
    /// The profile as a front-like field with derivative, far fields 1 and 0.
    pub fn as_field(&self) -> FieldState {
        FieldState {
            t: 0.0,
            grid: self.grid,
            u: self.phi.clone(),
            left: 1.0,
            right: 0.0,
            w: Some(self.dphi.clone()),
        }
    }

    pub fn phi_at_zero(&self) -> f64 {
        self.grid
            .index_of_lattice(0)
            .map(|i| self.phi[i])
            .unwrap_or(f64::NAN)
    }

    /// Largest consecutive difference; negative for a strictly decreasing profile.
    pub fn max_increment(&self) -> f64 {
        self.phi
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn left_end(&self) -> f64 {
        self.phi[0]
    }

    pub fn right_end(&self) -> f64 {
        self.phi[self.phi.len() - 1]
    }

    /// `x phi phi'` rows.
    pub fn to_text(&self) -> String {
        let mut s = String::from("x phi dphi\n");
        for i in 0..self.phi.len() {
            s.push_str(&format!(
                "{:.6} {:.17e} {:.17e}\n",
                self.grid.x(i),
                self.phi[i],
                self.dphi[i]
            ));
        }
        s
    }
}

fn check_autonomous(f: &IgnitionNonlinearity) -> Result<()> {
    match f.modulation {
        Modulation::Constant { value } if value > 0.0 => Ok(()),
        _ => Err(invalid(
            "f_hom",
            "traveling waves need an autonomous slice a f0 with a > 0",
        )),
    }
}

fn check_spec(kernel: &Kernel, spec: &WaveSpec) -> Result<Grid> {
    if spec.half_width < 40.0 {
        return Err(invalid(
            "half_width",
            "wave window must span at least 80 length units",
        ));
    }
    if !(1e-10..=1e-4).contains(&spec.tol) {
        return Err(invalid("tol", "must lie in [1e-10, 1e-4]"));
    }
    if !(spec.check_every > 0.0 && spec.t_max >= spec.t_min) {
        return Err(invalid("t_max", "need check_every > 0 and t_max >= t_min"));
    }
    Grid::symmetric(spec.half_width, kernel.h)
}

/// Profile `u(x + X)` sampled on `grid`.
fn aligned(state: &FieldState, x: f64, grid: &Grid) -> Vec<f64> {
    let p = MonotoneCubic::new(state);
    (0..grid.n).map(|i| p.value(grid.x(i) + x)).collect()
}

struct Evolved {
    phi: Vec<f64>,
    speed: f64,
    time: f64,
}

fn evolve_and_align(
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    grid: Grid,
    spec: &WaveSpec,
) -> Result<Evolved> {
    let theta = f.theta;
    let shift = spec.initial_shift;
    let mut state = FieldState::from_fn(0.0, grid, 1.0, 0.0, |x| {
        0.5 * (1.0 - ((x - shift) / 2.0).tanh())
    })
    .with_derivative(
        grid.nodes()
            .iter()
            .map(|x| -0.25 / ((x - shift) / 2.0).cosh().powi(2))
            .collect(),
    );
    let mut integ = Integrator::new(kernel, f, grid.n, spec.dt, true, spec.method)?;
    let policy = WindowPolicy::MiddleThird { level: theta };
    let record_every = ((0.5 / spec.dt).round() as usize).max(1);
    let check_every = ((spec.check_every / spec.dt).round() as usize).max(1);
    let mut track: Vec<(f64, f64)> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut k = 0usize;
    loop {
        integ.step(&mut state)?;
        k += 1;
        state.t = k as f64 * spec.dt;
        let (_, hi) = state.min_max();
        if hi < theta && state.left < theta {
            return Err(FrontError::Quenching { t: state.t });
        }
        if let Some(nodes) = policy.relocation(&state, kernel.half)? {
            state.shift_window(nodes);
        }
        if k.is_multiple_of(record_every) {
            let x =
                locate_level_refined(&state, theta).ok_or(FrontError::Quenching { t: state.t })?;
            track.push((state.t, x));
        }
        if k.is_multiple_of(check_every) {
            let x =
                locate_level_refined(&state, theta).ok_or(FrontError::Quenching { t: state.t })?;
            let u = aligned(&state, x, &grid);
            let settled = previous
                .as_ref()
                .map(|p| {
                    p.iter()
                        .zip(&u)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .is_some_and(|d| d <= spec.align_tol);
            if (settled && state.t >= spec.t_min) || state.t >= spec.t_max {
                if !settled {
                    let d = previous
                        .as_ref()
                        .map(|p| {
                            p.iter()
                                .zip(&u)
                                .map(|(a, b)| (a - b).abs())
                                .fold(0.0, f64::max)
                        })
                        .unwrap_or(f64::INFINITY);
                    return Err(FrontError::NoConvergence {
                        iterations: k,
                        residual: d,
                    });
                }
                let half: Vec<(f64, f64)> = track[track.len() / 2..].to_vec();
                let (speed, _, _) = least_squares(&half);
                return Ok(Evolved {
                    phi: u,
                    speed,
                    time: state.t,
                });
            }
            previous = Some(u);
        }
    }
}

/// Wave operator in the co-moving frame with the speed pinned by `phi(0) = theta`.
struct Polisher {
    plan: ConvolutionPlan,
    f: IgnitionNonlinearity,
    h: f64,
    i0: usize,
    ju: Vec<f64>,
}

impl Polisher {
    /// Writes `F(phi)` into `out` and returns the pinned speed.
    fn eval(&mut self, phi: &[f64], out: &mut [f64]) -> f64 {
        let n = phi.len();
        self.plan.apply(phi, 1.0, 0.0, &mut self.ju);
        let a = self.f.modulation.value(0.0);
        let d = |i: usize| -> f64 {
            let l = if i == 0 { 1.0 } else { phi[i - 1] };
            let r = if i + 1 == n { 0.0 } else { phi[i + 1] };
            (r - l) / (2.0 * self.h)
        };
        for i in 0..n {
            out[i] = self.ju[i] - phi[i] + a * self.f.base.value(phi[i]);
        }
        let c = -out[self.i0] / d(self.i0);
        for (i, o) in out.iter_mut().enumerate() {
            *o += c * d(i);
        }
        c
    }
}

/// Pseudo-time RK4 on `phi_tau = F(phi)` until `sup |F| <= tol`.
fn polish(
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    grid: Grid,
    mut phi: Vec<f64>,
    c_guess: f64,
    spec: &WaveSpec,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = grid.n;
    let i0 = grid
        .index_of_lattice(0)
        .ok_or_else(|| invalid("grid", "x = 0 must be a node"))?;
    phi[i0] = f.theta;
    let mut pol = Polisher {
        plan: kernel.plan(n, false, spec.method),
        f: f.clone(),
        h: grid.h,
        i0,
        ju: vec![0.0; n],
    };
    let tau = 0.5_f64
        .min(2.0 * grid.h / c_guess.abs().max(1e-3))
        .min(2.0 / (1.0 + f.c_fu()));
    let mut k: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut c = pol.eval(&phi, &mut k[0]);
    let mut residual = sup(&k[0]);
    let mut iterations = 0;
    while residual > spec.tol {
        if iterations >= spec.max_polish_iterations || !residual.is_finite() {
            return Err(FrontError::NoConvergence {
                iterations,
                residual,
            });
        }
        for s in 1..4 {
            let w = if s == 3 { tau } else { 0.5 * tau };
            for i in 0..n {
                stage[i] = phi[i] + w * k[s - 1][i];
            }
            pol.eval(&stage, &mut k[s]);
        }
        for i in 0..n {
            phi[i] += tau / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        iterations += 1;
        c = pol.eval(&phi, &mut k[0]);
        residual = sup(&k[0]);
    }
    Ok((c, phi, residual, iterations))
}

fn sup(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    grid: Grid,
    c: f64,
    phi: Vec<f64>,
    residual: f64,
    evolution: (f64, f64),
    iterations: usize,
) -> Result<TravelingWave> {
    if !(c > 0.0) {
        return Err(FrontError::NoConvergence {
            iterations,
            residual,
        });
    }
    let mut wave = TravelingWave {
        c,
        theta: f.theta,
        grid,
        window_end_ok: phi[0] >= 1.0 - WINDOW_END_TOL && phi[phi.len() - 1] <= WINDOW_END_TOL,
        phi,
        dphi: Vec::new(),
        residual,
        evolution_speed: evolution.0,
        evolution_time: evolution.1,
        polish_iterations: iterations,
    };
    wave.dphi = wave_profile_derivative(&wave, kernel, f)?;
    Ok(wave)
}

/// Solve for `(c*, phi)` by evolve-and-align followed by a pseudo-time polish.
pub fn solve_traveling_wave(
    kernel: &Kernel,
    f_hom: &IgnitionNonlinearity,
    spec: &WaveSpec,
) -> Result<TravelingWave> {
    check_autonomous(f_hom)?;
    let grid = check_spec(kernel, spec)?;
    // Narrow windows keep refilling a visible tail on relocation, so the
    // evolution stage always runs on at least [-80, 80].
    let wide = Grid::symmetric(spec.half_width.max(EVOLUTION_HALF_WIDTH), kernel.h)?;
    let ev = evolve_and_align(kernel, f_hom, wide, spec)?;
    let skip = (grid.offset - wide.offset) as usize;
    let phi = ev.phi[skip..skip + grid.n].to_vec();
    let (c, phi, residual, iterations) = polish(kernel, f_hom, grid, phi, ev.speed, spec)?;
    finish(
        kernel,
        f_hom,
        grid,
        c,
        phi,
        residual,
        (ev.speed, ev.time),
        iterations,
    )
}

/// Polish only, starting from an existing wave resampled onto this kernel's
/// spacing (for refinement studies).
pub fn solve_traveling_wave_from(
    kernel: &Kernel,
    f_hom: &IgnitionNonlinearity,
    spec: &WaveSpec,
    start: &TravelingWave,
) -> Result<TravelingWave> {
    check_autonomous(f_hom)?;
    let grid = check_spec(kernel, spec)?;
    let p = MonotoneCubic::new(&start.as_field());
    let phi = (0..grid.n).map(|i| p.value(grid.x(i))).collect();
    let (c, phi, residual, iterations) = polish(kernel, f_hom, grid, phi, start.c, spec)?;
    finish(
        kernel,
        f_hom,
        grid,
        c,
        phi,
        residual,
        (0.0, 0.0),
        iterations,
    )
}

/// `phi' = -(J*phi - phi + f(phi)) / c`.
pub fn wave_profile_derivative(
    wave: &TravelingWave,
    kernel: &Kernel,
    f_hom: &IgnitionNonlinearity,
) -> Result<Vec<f64>> {
    if !(wave.c.abs() >= 1e-12) {
        return Err(FrontError::DegenerateSteepness { value: wave.c });
    }
    let field = FieldState::new(0.0, wave.grid, wave.phi.clone(), 1.0, 0.0)?;
    let ju = crate::kernels::convolve(kernel, &field)?;
    let a = f_hom.modulation.value(0.0);
    Ok(ju
        .iter()
        .zip(&wave.phi)
        .map(|(j, p)| -(j - p + a * f_hom.base.value(*p)) / wave.c)
        .collect())
}

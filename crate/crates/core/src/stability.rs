//! Exponential stability of transition fronts: the `Gamma` envelope, the
//! stability constants, sub/super-solution residuals, perturbation runs and
//! comparison checks.

use serde::{Deserialize, Serialize};

use crate::conv::{ConvolutionMethod, ConvolutionPlan};
use crate::error::{invalid, FrontError, Result};
use crate::evolve::{evolve_lockstep, ApproxFrontRun, EvolveOptions, WindowPolicy};
use crate::field::FieldState;
use crate::fronts::{
    first_crossing, least_squares, locate_level, locate_level_refined, steepness, FrontTrack,
};
use crate::interp::MonotoneCubic;
use crate::kernels::Kernel;
use crate::par::map_jobs;
use crate::reactions::IgnitionNonlinearity;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Gamma(x) = 1` left of `M1 - 1`, `exp(-alpha (x - M1))` right of `M1 + 1`,
/// and `exp(-alpha tau^2)` with `tau = (x - M1 + 1) / 2` in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFunction {
    pub alpha: f64,
    pub m1: f64,
}

pub fn make_gamma(alpha: f64, m1: f64) -> Result<GammaFunction> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(invalid("alpha", "must lie in (0, 2]"));
    }
    if !(m1 > 0.0) {
        return Err(invalid("M1", "must be positive"));
    }
    Ok(GammaFunction { alpha, m1 })
}

impl GammaFunction {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.m1 - 1.0 {
            1.0
        } else if x >= self.m1 + 1.0 {
            (-self.alpha * (x - self.m1)).exp()
        } else {
            let tau = 0.5 * (x - self.m1 + 1.0);
            (-self.alpha * tau * tau).exp()
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.m1 - 1.0 {
            0.0
        } else if x >= self.m1 + 1.0 {
            -self.alpha * (-self.alpha * (x - self.m1)).exp()
        } else {
            let tau = 0.5 * (x - self.m1 + 1.0);
            -self.alpha * tau * (-self.alpha * tau * tau).exp()
        }
    }

    /// `(J*Gamma)(x)` by stencil quadrature of the analytic `Gamma`.
    pub fn convolved(&self, kernel: &Kernel, x: f64) -> f64 {
        let half = kernel.half as i64;
        kernel
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| w * self.value(x - (j as i64 - half) as f64 * kernel.h))
            .sum()
    }

    /// `(J*Gamma)(y0 + j h)` for `j = 0..n`, using the closed forms where
    /// the stencil sees only one branch.
    pub fn convolved_on(&self, kernel: &Kernel, y0: f64, n: usize) -> Vec<f64> {
        let h = kernel.h;
        let r = kernel.radius();
        let mass = kernel.mass();
        let moment: f64 = {
            let half = kernel.half as i64;
            kernel
                .weights()
                .iter()
                .enumerate()
                .map(|(j, w)| w * (self.alpha * (j as i64 - half) as f64 * h).exp())
                .sum()
        };
        (0..n)
            .map(|j| {
                let y = y0 + j as f64 * h;
                if y + r <= self.m1 - 1.0 {
                    mass
                } else if y - r >= self.m1 + 1.0 {
                    moment * (-self.alpha * (y - self.m1)).exp()
                } else {
                    self.convolved(kernel, y)
                }
            })
            .collect()
    }

    /// `|e^{alpha (x - M1)} (J*Gamma)(x) - 1|`.
    pub fn tail_defect(&self, kernel: &Kernel, x: f64) -> f64 {
        ((self.alpha * (x - self.m1)).exp() * self.convolved(kernel, x) - 1.0).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityParameters {
    pub alpha: f64,
    pub m1: f64,
    pub m2: f64,
    pub c_steep: f64,
    pub c_fu: f64,
    pub beta_tilde: f64,
    pub theta: f64,
    pub theta_tilde: f64,
    pub c_min: f64,
    pub a: f64,
    pub eps0: f64,
    pub omega: f64,
}

impl StabilityParameters {
    /// `A = (2 C_fu + 1) / C_steep`, `eps0` and `omega` from the given constants.
    #[allow(clippy::too_many_arguments)]
    pub fn from_constants(
        alpha: f64,
        m1: f64,
        m2: f64,
        c_steep: f64,
        c_fu: f64,
        beta_tilde: f64,
        theta: f64,
        theta_tilde: f64,
        c_min: f64,
    ) -> Result<Self> {
        if !(c_steep > 0.0) {
            return Err(FrontError::DegenerateSteepness { value: c_steep });
        }
        if !(c_min > 0.0) {
            return Err(invalid("c_min", "must be positive"));
        }
        let a = (2.0 * c_fu + 1.0) / c_steep;
        let mut p = StabilityParameters {
            alpha,
            m1,
            m2,
            c_steep,
            c_fu,
            beta_tilde,
            theta,
            theta_tilde,
            c_min,
            a,
            eps0: 0.0,
            omega: beta_tilde.min(alpha * c_min / 4.0),
        };
        p.eps0 = p.eps0_for(a);
        Ok(p)
    }

    fn eps0_for(&self, a: f64) -> f64 {
        ((1.0 - self.theta_tilde) / 2.0)
            .min(self.theta / 2.0)
            .min(1.0 / (4.0 * a))
            .min(self.c_min / (4.0 * a))
    }

    /// The same constants with `A` overridden (and `eps0` recomputed).
    pub fn with_a(&self, a: f64) -> Self {
        StabilityParameters {
            a,
            eps0: self.eps0_for(a),
            ..*self
        }
    }

    pub fn gamma(&self) -> Result<GammaFunction> {
        make_gamma(self.alpha, self.m1)
    }

    pub fn to_text(&self) -> String {
        format!(
            "alpha {}\nM1 {}\nM2 {}\nC_steep {:e}\nC_fu {}\nbeta_tilde {}\nc_min {}\nA {:e}\neps0 {:e}\nomega {:e}\n",
            self.alpha,
            self.m1,
            self.m2,
            self.c_steep,
            self.c_fu,
            self.beta_tilde,
            self.c_min,
            self.a,
            self.eps0,
            self.omega
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterOptions {
    /// Snapshots with `t < s + transient` are ignored.
    pub transient: f64,
    pub c_min_safety: f64,
}

impl Default for ParameterOptions {
    fn default() -> Self {
        ParameterOptions {
            transient: 20.0,
            c_min_safety: 0.98,
        }
    }
}

/// Post-transient snapshots of a run.
pub fn settled_snapshots(run: &ApproxFrontRun, transient: f64) -> Vec<&FieldState> {
    run.snapshots
        .iter()
        .filter(|s| s.t >= run.s + transient - 1e-9)
        .collect()
}

/// `0.98 * min X_theta'` over the settled part of a run, from centred
/// difference quotients of the level track.
pub fn measured_c_min(run: &ApproxFrontRun, theta: f64, opts: &ParameterOptions) -> Result<f64> {
    let snaps: Vec<FieldState> = settled_snapshots(run, opts.transient)
        .into_iter()
        .cloned()
        .collect();
    let track = FrontTrack::from_snapshots(&snaps, &[theta])?;
    let min = track
        .speeds
        .iter()
        .map(|s| s[0])
        .fold(f64::INFINITY, f64::min);
    Ok(opts.c_min_safety * min)
}

/// Smallest `M1` with `u >= (1 + theta_tilde)/2` left of `X - M1` and
/// `u <= theta/2` right of `X + M1` on every settled snapshot.
pub fn measure_m1(snapshots: &[&FieldState], f: &IgnitionNonlinearity) -> Result<f64> {
    let hi = 0.5 * (1.0 + f.theta_tilde);
    let lo = 0.5 * f.theta;
    let mut m1: f64 = 0.0;
    for s in snapshots {
        let x = locate_level(s, f.theta)?;
        m1 = m1
            .max(x - locate_level(s, hi)?)
            .max(locate_level(s, lo)? - x);
    }
    Ok(m1)
}

/// Smallest sampled `M2 > M1 + 1` beyond which the tail defect of `J*Gamma`
/// stays below `alpha c_min / 4`.
pub fn measure_m2(gamma: &GammaFunction, kernel: &Kernel, c_min: f64) -> Result<f64> {
    let tol = gamma.alpha * c_min / 4.0;
    let step = kernel.h / 4.0;
    let start = gamma.m1 + 1.0;
    let count = ((kernel.radius() + 2.0) / step).ceil() as usize;
    let far = gamma.tail_defect(kernel, start + kernel.radius() + 2.0);
    if far > tol {
        return Err(FrontError::InadmissibleAlpha {
            alpha: gamma.alpha,
            reason: format!(
                "tail defect I(alpha) - 1 = {far:.3e} exceeds alpha c_min / 4 = {tol:.3e}"
            ),
        });
    }
    let mut m2 = start + step;
    for k in 1..=count {
        let x = start + k as f64 * step;
        if gamma.tail_defect(kernel, x) > tol {
            m2 = x + step;
        }
    }
    Ok(m2)
}

pub fn compute_stability_parameters(
    run: &ApproxFrontRun,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    alpha: f64,
    opts: &ParameterOptions,
) -> Result<StabilityParameters> {
    let snaps = settled_snapshots(run, opts.transient);
    if snaps.len() < 3 {
        return Err(FrontError::Precondition(
            "run too short for tail statistics".into(),
        ));
    }
    let c_min = measured_c_min(run, f.theta, opts)?;
    let m1 = measure_m1(&snaps, f)?;
    let gamma = make_gamma(alpha, m1)?;
    let m2 = measure_m2(&gamma, kernel, c_min)?;
    let mut sup: f64 = f64::NEG_INFINITY;
    for s in &snaps {
        let w = s.w.as_ref().ok_or_else(|| {
            FrontError::Precondition("front run lacks a co-evolved derivative".into())
        })?;
        let x = locate_level(s, f.theta)?;
        sup = sup.max(steepness(s, w, x, m2)?);
    }
    StabilityParameters::from_constants(
        alpha,
        m1,
        m2,
        -sup,
        f.c_fu(),
        f.beta_tilde,
        f.theta,
        f.theta_tilde,
        c_min,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    pub admissible: bool,
    pub reason: String,
}

/// Candidate rates `0.4 / 2^k`.
pub fn alpha_ladder(len: usize) -> Vec<f64> {
    (0..len).map(|k| 0.4 / (1u64 << k) as f64).collect()
}

/// Walk the ladder downward and return the first admissible `alpha` that
/// also respects the derivative tail rate.
pub fn select_alpha(
    run: &ApproxFrontRun,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    tail_rate: f64,
    opts: &ParameterOptions,
) -> Result<(StabilityParameters, Vec<AlphaTrial>)> {
    select_alpha_from(&alpha_ladder(10), run, kernel, f, tail_rate, opts)
}

/// [`select_alpha`] over an explicit list of candidates, tried in order.
pub fn select_alpha_from(
    ladder: &[f64],
    run: &ApproxFrontRun,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    tail_rate: f64,
    opts: &ParameterOptions,
) -> Result<(StabilityParameters, Vec<AlphaTrial>)> {
    if ladder.is_empty() {
        return Err(invalid("alpha", "candidate list is empty"));
    }
    let outcomes = map_jobs(ladder, |&alpha| {
        if alpha > tail_rate {
            return Err(FrontError::InadmissibleAlpha {
                alpha,
                reason: format!("exceeds the derivative tail rate {tail_rate:.4}"),
            });
        }
        compute_stability_parameters(run, kernel, f, alpha, opts)
    });
    let mut trials = Vec::new();
    for (alpha, out) in ladder.iter().zip(outcomes) {
        match out {
            Ok(p) => {
                trials.push(AlphaTrial {
                    alpha: *alpha,
                    admissible: true,
                    reason: String::new(),
                });
                return Ok((p, trials));
            }
            Err(FrontError::InadmissibleAlpha { reason, .. }) => trials.push(AlphaTrial {
                alpha: *alpha,
                admissible: false,
                reason,
            }),
            Err(e) => return Err(e),
        }
    }
    Err(FrontError::InadmissibleAlpha {
        alpha: *ladder.last().unwrap(),
        reason: "no admissible alpha among the candidates".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEnvelope {
    pub t0: f64,
    pub zeta0_minus: f64,
    pub zeta0_plus: f64,
    pub epsilon: f64,
    pub a: f64,
    pub omega: f64,
}

impl PerturbationEnvelope {
    pub fn new(
        params: &StabilityParameters,
        t0: f64,
        epsilon: f64,
        zeta0: (f64, f64),
    ) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(invalid("epsilon", "must be nonnegative"));
        }
        if epsilon > params.eps0 * (1.0 + 1e-12) {
            return Err(invalid(
                "epsilon",
                format!("{epsilon:e} exceeds eps0 = {:e}", params.eps0),
            ));
        }
        Ok(PerturbationEnvelope {
            t0,
            zeta0_minus: zeta0.0,
            zeta0_plus: zeta0.1,
            epsilon,
            a: params.a,
            omega: params.omega,
        })
    }

    /// `|zeta(inf) - zeta0| = A eps / omega`.
    pub fn drift(&self) -> f64 {
        self.a * self.epsilon / self.omega
    }

    /// `(zeta-(t), zeta+(t), q(t))`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64, f64)> {
        if t < self.t0 - 1e-12 {
            return Err(invalid("t", "must not precede t0"));
        }
        let decay = (-self.omega * (t - self.t0)).exp();
        let d = self.drift() * (1.0 - decay);
        Ok((
            self.zeta0_minus - d,
            self.zeta0_plus + d,
            self.epsilon * decay,
        ))
    }
}

pub fn perturbation_envelope_eval(env: &PerturbationEnvelope, t: f64) -> Result<(f64, f64, f64)> {
    env.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    Sub,
    Super,
}

impl Candidate {
    fn sign(self) -> f64 {
        match self {
            Candidate::Sub => -1.0,
            Candidate::Super => 1.0,
        }
    }

    fn zeta(self, env: &PerturbationEnvelope, t: f64) -> Result<(f64, f64)> {
        let (lo, hi, q) = env.eval(t)?;
        Ok(match self {
            Candidate::Sub => (lo, q),
            Candidate::Super => (hi, q),
        })
    }
}

/// Signed residual `v_t - (J*v - v) - f(t, v)` at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualField {
    pub t: f64,
    /// `x - zeta(t) - X(t)` at each evaluated node.
    pub y: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Workspace for residuals on one window size.
pub struct ResidualChecker {
    kernel: Kernel,
    plan: ConvolutionPlan,
    shifted: Vec<f64>,
    conv: Vec<f64>,
}

impl ResidualChecker {
    pub fn new(kernel: &Kernel, n: usize, method: ConvolutionMethod) -> Self {
        ResidualChecker {
            kernel: kernel.clone(),
            plan: kernel.plan(n, false, method),
            shifted: vec![0.0; n],
            conv: vec![0.0; n],
        }
    }

    /// Residual of `v = u(t, x - zeta) -/+ q Gamma(x - zeta - X(t))` from the
    /// front at `t - dt, t, t + dt` (`interfaces` are the matching `X`).
    /// `v_t` is the centred difference over the triplet.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &mut self,
        triplet: [&FieldState; 3],
        interfaces: [f64; 3],
        env: &PerturbationEnvelope,
        candidate: Candidate,
        gamma: &GammaFunction,
        f: &IgnitionNonlinearity,
    ) -> Result<ResidualField> {
        let [prev, cur, next] = triplet;
        if prev.grid != cur.grid || next.grid != cur.grid {
            return Err(FrontError::Precondition(
                "residual triplet straddles a window relocation".into(),
            ));
        }
        let n = cur.len();
        if n != self.shifted.len() {
            return Err(invalid("triplet", "window size differs from the checker"));
        }
        let dt = 0.5 * (next.t - prev.t);
        let h = cur.grid.h;
        let sigma = candidate.sign();
        let (zeta, q) = candidate.zeta(env, cur.t)?;
        let (zeta_m, q_m) = candidate.zeta(env, prev.t)?;
        let (zeta_p, q_p) = candidate.zeta(env, next.t)?;

        // x_j = x^U_j + m h, so x_j - zeta = x^U_j - r.
        let m = (zeta / h).round();
        let r = zeta - m * h;
        let p_cur = MonotoneCubic::new(cur);
        for (j, v) in self.shifted.iter_mut().enumerate() {
            *v = p_cur.value(cur.grid.x(j) - r);
        }
        self.plan
            .apply(&self.shifted, cur.left, cur.right, &mut self.conv);
        let y0 = cur.grid.x(0) - r - interfaces[1];
        let jgamma = gamma.convolved_on(&self.kernel, y0, n);

        let p_prev = MonotoneCubic::new(prev);
        let p_next = MonotoneCubic::new(next);
        let margin = self.kernel.half + 2;
        let mut y = Vec::with_capacity(n);
        let mut res = Vec::with_capacity(n);
        #[allow(clippy::needless_range_loop)]
        for j in margin..n.saturating_sub(margin) {
            let x = cur.grid.x(j) + m * h;
            let yj = y0 + j as f64 * h;
            let g = gamma.value(yj);
            let v0 = self.shifted[j] + sigma * q * g;
            let jv = self.conv[j] + sigma * q * jgamma[j];
            let vm =
                p_prev.value(x - zeta_m) + sigma * q_m * gamma.value(x - zeta_m - interfaces[0]);
            let vp =
                p_next.value(x - zeta_p) + sigma * q_p * gamma.value(x - zeta_p - interfaces[2]);
            let vt = (vp - vm) / (2.0 * dt);
            y.push(yj);
            res.push(vt - (jv - v0) - f.value(cur.t, v0));
        }
        Ok(ResidualField {
            t: cur.t,
            y,
            residual: res,
        })
    }
}

/// Extreme residual per spatial band (`y <= -M2`, middle, `y >= M2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandExtremes {
    pub left: Option<f64>,
    pub middle: Option<f64>,
    pub right: Option<f64>,
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub candidate: Candidate,
    pub epsilon: f64,
    pub a: f64,
    /// Largest residual for a sub-solution, smallest for a super-solution.
    pub worst: f64,
    pub worst_t: f64,
    pub worst_y: f64,
    pub bands: BandExtremes,
    pub samples: usize,
}

impl ResidualSummary {
    fn new(candidate: Candidate, epsilon: f64, a: f64) -> Self {
        let worst = match candidate {
            Candidate::Sub => f64::NEG_INFINITY,
            Candidate::Super => f64::INFINITY,
        };
        ResidualSummary {
            candidate,
            epsilon,
            a,
            worst,
            worst_t: f64::NAN,
            worst_y: f64::NAN,
            bands: BandExtremes {
                left: None,
                middle: None,
                right: None,
                counts: [0; 3],
            },
            samples: 0,
        }
    }

    fn absorb(&mut self, field: &ResidualField, m2: f64) {
        let pick = |a: f64, b: f64| match self.candidate {
            Candidate::Sub => a.max(b),
            Candidate::Super => a.min(b),
        };
        for (&y, &r) in field.y.iter().zip(&field.residual) {
            let band = if y <= -m2 {
                0
            } else if y >= m2 {
                2
            } else {
                1
            };
            let slot = match band {
                0 => &mut self.bands.left,
                1 => &mut self.bands.middle,
                _ => &mut self.bands.right,
            };
            *slot = Some(slot.map_or(r, |s| pick(s, r)));
            self.bands.counts[band] += 1;
            if pick(self.worst, r) != self.worst {
                self.worst = r;
                self.worst_t = field.t;
                self.worst_y = y;
            }
        }
        self.samples += 1;
    }

    /// Sub: residual <= tol; super: residual >= -tol.
    pub fn passes(&self, tol: f64) -> bool {
        match self.candidate {
            Candidate::Sub => self.worst <= tol,
            Candidate::Super => self.worst >= -tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRequest {
    pub candidate: Candidate,
    pub epsilon: f64,
    /// Overrides `A` (and hence `eps0`) when set.
    pub a_override: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Run length; `None` means `5 / omega`.
    pub duration: Option<f64>,
    pub dt: f64,
    pub sample_every: f64,
    pub method: ConvolutionMethod,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            duration: None,
            dt: 0.0625,
            sample_every: 1.0,
            method: ConvolutionMethod::Auto,
        }
    }
}

impl RunOptions {
    fn lockstep(&self, t0: f64, duration: f64, theta: f64) -> EvolveOptions {
        EvolveOptions {
            t_end: t0 + duration,
            dt: self.dt,
            cadence: self.sample_every,
            window: WindowPolicy::MiddleThird { level: theta },
            method: self.method,
        }
    }

    fn every(&self) -> usize {
        ((self.sample_every / self.dt).round() as usize).max(1)
    }
}

fn interface(state: &FieldState, theta: f64) -> Result<f64> {
    locate_level_refined(state, theta).ok_or(FrontError::FrontLost { t: state.t })
}

/// Evolve the front from `reference` and evaluate the residual of every
/// requested candidate at each sample time, with `zeta0 = 0`.
pub fn residual_scan(
    reference: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    params: &StabilityParameters,
    requests: &[ResidualRequest],
    opts: &RunOptions,
) -> Result<Vec<ResidualSummary>> {
    if reference.w.is_none() {
        return Err(FrontError::Precondition(
            "reference front lacks a derivative".into(),
        ));
    }
    let t0 = reference.t;
    let duration = opts.duration.unwrap_or(5.0 / params.omega);
    let gamma = params.gamma()?;
    let mut setups = Vec::new();
    for req in requests {
        let p = match req.a_override {
            Some(a) => params.with_a(a),
            None => *params,
        };
        let env = PerturbationEnvelope::new(&p, t0, req.epsilon, (0.0, 0.0))?;
        setups.push((env, ResidualSummary::new(req.candidate, req.epsilon, p.a)));
    }
    let mut checker = ResidualChecker::new(kernel, reference.len(), opts.method);
    let every = opts.every();
    let mut history: Vec<FieldState> = Vec::with_capacity(3);
    let mut pending = false;
    evolve_lockstep(
        reference.clone(),
        Vec::new(),
        kernel,
        f,
        &opts.lockstep(t0, duration, f.theta),
        |k, s, _| {
            if history.len() == 3 {
                history.remove(0);
            }
            history.push(s.clone());
            if k % every == 1 || every == 1 {
                pending = true;
            }
            if pending && history.len() == 3 && history[0].grid == history[2].grid {
                pending = false;
                let x = [
                    interface(&history[0], f.theta)?,
                    interface(&history[1], f.theta)?,
                    interface(&history[2], f.theta)?,
                ];
                for (env, summary) in setups.iter_mut() {
                    let field = checker.evaluate(
                        [&history[0], &history[1], &history[2]],
                        x,
                        env,
                        summary.candidate,
                        &gamma,
                        f,
                    )?;
                    summary.absorb(&field, params.m2);
                }
            }
            Ok(())
        },
    )?;
    Ok(setups.into_iter().map(|(_, s)| s).collect())
}

/// Sup distance between `field` and the front shifted by `zeta`, far fields included.
pub fn shift_distance(
    field: &FieldState,
    front: &MonotoneCubic,
    front_far: (f64, f64),
    zeta: f64,
) -> f64 {
    let mut d = (field.left - front_far.0)
        .abs()
        .max((field.right - front_far.1).abs());
    for (i, u) in field.u.iter().enumerate() {
        d = d.max((u - front.value(field.grid.x(i) - zeta)).abs());
    }
    d
}

/// Golden-section tolerance on the shift.
pub const SHIFT_TOL: f64 = 1e-10;

/// Minimise the sup distance to `front(x - zeta)` over `zeta in bracket`:
/// a 41-point scan locates the basin, golden section refines it.
pub fn best_shift(
    field: &FieldState,
    front: &FieldState,
    bracket: (f64, f64),
) -> Result<(f64, f64)> {
    let p = MonotoneCubic::new(front);
    let far = (front.left, front.right);
    let dist = |z: f64| shift_distance(field, &p, far, z);
    let (lo, hi) = bracket;
    if !(hi > lo) {
        return Err(invalid("bracket", "need lo < hi"));
    }
    let m = 40;
    let zs: Vec<f64> = (0..=m)
        .map(|k| lo + (hi - lo) * k as f64 / m as f64)
        .collect();
    let ds: Vec<f64> = zs.iter().map(|&z| dist(z)).collect();
    // Ties (a far-field gap can make the distance flat) go to the scan point
    // nearest the centre.
    let dmin = ds.iter().copied().fold(f64::INFINITY, f64::min);
    let tie = 1e-14 * dmin.max(1e-300);
    let i = (0..=m)
        .filter(|&k| ds[k] - dmin <= tie)
        .min_by_key(|&k| k.abs_diff(m / 2))
        .unwrap();
    if i == 0 || i == m {
        return Err(FrontError::Bracket(format!(
            "shift distance decreasing toward an end of [{lo}, {hi}]"
        )));
    }
    let (mut a, mut b) = (zs[i - 1], zs[i + 1]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dist(c), dist(d));
    while b - a > SHIFT_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dist(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dist(d);
        }
    }
    let z = 0.5 * (a + b);
    let best = [(z, dist(z)), (zs[i], ds[i])]
        .into_iter()
        .fold(
            (z, f64::INFINITY),
            |acc, p| if p.1 < acc.1 { p } else { acc },
        );
    Ok(best)
}

/// Bracket centred on the difference of the theta crossings.
fn shift_guess(field: &FieldState, front: &FieldState, theta: f64) -> f64 {
    let x =
        |s: &FieldState| first_crossing(&s.u, s.left, theta).map(|p| s.grid.x(0) + p * s.grid.h);
    match (x(field), x(front)) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub t: f64,
    pub sup_distance: f64,
    pub zeta_star: f64,
    pub q: Option<f64>,
    pub zeta_minus: Option<f64>,
    pub zeta_plus: Option<f64>,
    pub violation_margin: Option<f64>,
}

/// `d(t) ~ C exp(-r (t - t0))` fitted on the band of `d` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub r: f64,
    pub c: f64,
    pub r2: f64,
    pub points: usize,
    pub window: (f64, f64),
    pub band: (f64, f64),
}

/// Fits `ln d` on the first contiguous run of samples with `d` in `band`,
/// so that the later round-off floor is excluded.
pub fn fit_decay(rows: &[StabilityRow], t0: f64, band: (f64, f64)) -> Option<DecayFit> {
    let inside = |r: &StabilityRow| r.sup_distance >= band.0 && r.sup_distance <= band.1;
    let start = rows.iter().position(inside)?;
    let len = rows[start..]
        .iter()
        .position(|r| !inside(r))
        .unwrap_or(rows.len() - start);
    let pts: Vec<(f64, f64)> = rows[start..start + len]
        .iter()
        .map(|r| (r.t - t0, r.sup_distance.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (slope, intercept, r2) = least_squares(&pts);
    Some(DecayFit {
        r: -slope,
        c: intercept.exp(),
        r2,
        points: pts.len(),
        window: (pts[0].0 + t0, pts[pts.len() - 1].0 + t0),
        band,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub params: StabilityParameters,
    pub t0: f64,
    pub epsilon: Option<f64>,
    pub rows: Vec<StabilityRow>,
    pub violations: usize,
    pub worst_margin: Option<f64>,
    pub tolerance: f64,
    /// `d(t)` at the sample nearest `t0 + 3 / omega`.
    pub distance_at_three_over_omega: Option<f64>,
    pub fit: Option<DecayFit>,
    pub zeta_star: f64,
    /// Spread of `zeta*` over the final quarter of the samples.
    pub zeta_drift: f64,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s =
            String::from("t,sup_distance,q,zeta_minus,zeta_plus,violation_margin,zeta_star\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{},{},{},{},{:e}\n",
                r.t,
                r.sup_distance,
                opt(r.q),
                opt(r.zeta_minus),
                opt(r.zeta_plus),
                opt(r.violation_margin),
                r.zeta_star
            ));
        }
        s
    }

    pub fn summary_text(&self) -> String {
        let p = &self.params;
        let (r, c, r2) =
            self.fit
                .map(|f| (f.r, f.c, f.r2))
                .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        format!(
            "A {:e}\neps0 {:e}\nomega {:e}\nM1 {}\nM2 {}\nr {:e}\nC {:e}\nzeta_star {}\nR2 {}\nviolations {}\n",
            p.a, p.eps0, p.omega, p.m1, p.m2, r, c, self.zeta_star, r2, self.violations
        )
    }
}

fn zeta_summary(rows: &[StabilityRow]) -> (f64, f64) {
    let tail = &rows[rows.len() - rows.len().div_ceil(4)..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.zeta_star), b.max(r.zeta_star))
        });
    (rows[rows.len() - 1].zeta_star, hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Constant { value: f64 },
    Cosine { amplitude: f64, wavenumber: f64 },
}

impl Shape {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Shape::Constant { value } => value,
            Shape::Cosine {
                amplitude,
                wavenumber,
            } => amplitude * (wavenumber * x).cos(),
        }
    }

    /// Far-left value of `rho`; the cosine is taken to average out.
    fn far_left(&self) -> f64 {
        match *self {
            Shape::Constant { value } => value,
            Shape::Cosine { .. } => 0.0,
        }
    }

    fn bound(&self) -> f64 {
        match *self {
            Shape::Constant { value } => value.abs(),
            Shape::Cosine { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Sandwich tolerance: `1e-6` plus the interpolation budget.
pub const SANDWICH_TOL: f64 = 1e-6 + 1e-8;

/// Smallest `min(u - lower, upper - u)` over nodes and the left far field.
/// Both bounds vanish on the right, where any nonzero far field counts
/// fully against the margin.
pub fn sandwich_margin(
    u: &FieldState,
    front: &MonotoneCubic,
    x_front: f64,
    gamma: &GammaFunction,
    zeta: (f64, f64),
    q: f64,
) -> f64 {
    let mut m = (u.left - (1.0 - q)).min(1.0 + q - u.left);
    if u.right != 0.0 {
        m = m.min(-u.right.abs());
    }
    for (i, &v) in u.u.iter().enumerate() {
        let x = u.grid.x(i);
        let lower = front.value(x - zeta.0) - q * gamma.value(x - zeta.0 - x_front);
        let upper = front.value(x - zeta.1) + q * gamma.value(x - zeta.1 - x_front);
        m = m.min(v - lower).min(upper - v);
    }
    m
}

/// Perturb the front at `t0` by `eps Gamma(x - X) rho(x)` (clamped to
/// `[0, 1]`), evolve in lockstep and check the sandwich at every sample.
pub fn run_stability_experiment(
    reference: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    params: &StabilityParameters,
    epsilon: f64,
    shape: Shape,
    opts: &RunOptions,
) -> Result<StabilityReport> {
    if reference.w.is_none() {
        return Err(FrontError::Precondition(
            "reference front lacks a derivative".into(),
        ));
    }
    if shape.bound() > 1.0 {
        return Err(invalid("shape", "|rho| must not exceed 1"));
    }
    let t0 = reference.t;
    let env = PerturbationEnvelope::new(params, t0, epsilon, (0.0, 0.0))?;
    let gamma = params.gamma()?;
    let x0 = interface(reference, f.theta)?;
    let p0 = MonotoneCubic::new(reference);
    let u = reference
        .u
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = reference.grid.x(i);
            (v + epsilon * gamma.value(x - x0) * shape.value(x)).clamp(0.0, 1.0)
        })
        .collect();
    let start = FieldState::new(
        t0,
        reference.grid,
        u,
        (1.0 + epsilon * shape.far_left()).clamp(0.0, 1.0),
        0.0,
    )?;
    let initial = sandwich_margin(&start, &p0, x0, &gamma, (0.0, 0.0), epsilon);
    if initial < -SANDWICH_TOL {
        return Err(FrontError::Precondition(format!(
            "initial data leaves the sandwich by {:e}",
            -initial
        )));
    }
    let duration = opts.duration.unwrap_or(5.0 / params.omega);
    let every = opts.every();
    let mut rows = Vec::new();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let bracket = (4.0 * env.drift()).max(2.0);
    evolve_lockstep(
        reference.clone(),
        vec![start],
        kernel,
        f,
        &opts.lockstep(t0, duration, f.theta),
        |k, front, fol| {
            if k % every != 0 {
                return Ok(());
            }
            let u = &fol[0];
            let (zm, zp, q) = env.eval(front.t)?;
            let p = MonotoneCubic::new(front);
            let x = interface(front, f.theta)?;
            let margin = sandwich_margin(u, &p, x, &gamma, (zm, zp), q);
            if margin < -SANDWICH_TOL {
                violations += 1;
            }
            worst = worst.min(margin);
            let guess = shift_guess(u, front, f.theta);
            let (zeta, d) = best_shift(u, front, (guess - bracket, guess + bracket))?;
            rows.push(StabilityRow {
                t: front.t,
                sup_distance: d,
                zeta_star: zeta,
                q: Some(q),
                zeta_minus: Some(zm),
                zeta_plus: Some(zp),
                violation_margin: Some(margin),
            });
            Ok(())
        },
    )?;
    let target = t0 + 3.0 / params.omega;
    let at3 = rows
        .iter()
        .filter(|r| (r.t - target).abs() <= opts.sample_every)
        .min_by(|a, b| (a.t - target).abs().total_cmp(&(b.t - target).abs()))
        .map(|r| r.sup_distance);
    let fit = fit_decay(&rows, t0, (epsilon * 1e-3, epsilon));
    let (zeta_star, zeta_drift) = zeta_summary(&rows);
    Ok(StabilityReport {
        params: *params,
        t0,
        epsilon: Some(epsilon),
        rows,
        violations,
        worst_margin: Some(worst),
        tolerance: SANDWICH_TOL,
        distance_at_three_over_omega: at3,
        fit,
        zeta_star,
        zeta_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `0.5 (1 - tanh((x - X(t0)) / width))`.
    MollifiedStep { width: f64 },
    /// The front itself shifted by `shift`.
    Shifted { shift: f64 },
    /// `level * 0.5 (1 - tanh((x - X(t0)) / width))` with left far field `level`.
    Lifted { level: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticOptions {
    pub run: RunOptions,
    pub duration: f64,
    /// Rate in the tail bound `|u0 - u(t0)| <= C exp(-beta0 (x - X(t0)))`.
    pub beta0: f64,
    pub fit_band: (f64, f64),
}

impl Default for AsymptoticOptions {
    fn default() -> Self {
        AsymptoticOptions {
            run: RunOptions::default(),
            duration: 2000.0,
            beta0: 0.1,
            fit_band: (1e-8, 1e-2),
        }
    }
}

pub fn initial_profile(reference: &FieldState, x0: f64, init: InitialData) -> Result<FieldState> {
    let g = reference.grid;
    match init {
        InitialData::MollifiedStep { width } => {
            Ok(FieldState::from_fn(reference.t, g, 1.0, 0.0, |x| {
                0.5 * (1.0 - ((x - x0) / width).tanh())
            }))
        }
        InitialData::Lifted { level, width } => {
            if !(level > 0.0 && level <= 1.0) {
                return Err(invalid("level", "must lie in (0, 1]"));
            }
            Ok(FieldState::from_fn(reference.t, g, level, 0.0, |x| {
                level * 0.5 * (1.0 - ((x - x0) / width).tanh())
            }))
        }
        InitialData::Shifted { shift } => {
            let p = MonotoneCubic::new(reference);
            Ok(FieldState::from_fn(reference.t, g, 1.0, 0.0, |x| {
                p.value(x - shift)
            }))
        }
    }
}

/// `sup_{x >= X} |u0 - u(t0)| e^{beta0 (x - X)}` on the window.
pub fn tail_bound_constant(u0: &FieldState, reference: &FieldState, x0: f64, beta0: f64) -> f64 {
    u0.u.iter()
        .zip(&reference.u)
        .enumerate()
        .filter(|(i, _)| u0.grid.x(*i) >= x0)
        .map(|(i, (a, b))| (a - b).abs() * (beta0 * (u0.grid.x(i) - x0)).exp())
        .fold(0.0, f64::max)
}

/// Evolve `u0` alongside the front and fit the decay of the best-shift distance.
pub fn run_asymptotic_experiment(
    reference: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    params: &StabilityParameters,
    init: InitialData,
    opts: &AsymptoticOptions,
) -> Result<StabilityReport> {
    if reference.w.is_none() {
        return Err(FrontError::Precondition(
            "reference front lacks a derivative".into(),
        ));
    }
    let t0 = reference.t;
    let x0 = interface(reference, f.theta)?;
    let start = initial_profile(reference, x0, init)?;
    let (lo, hi) = start.min_max();
    if lo < 0.0 || hi > 1.0 {
        return Err(invalid("u0", "must take values in [0, 1]"));
    }
    let tail = tail_bound_constant(&start, reference, x0, opts.beta0);
    if !tail.is_finite() {
        return Err(invalid("u0", "tail bound is not finite"));
    }
    let every = opts.run.every();
    let mut rows = Vec::new();
    let mut centre = match init {
        InitialData::Shifted { shift } => shift,
        _ => 0.0,
    };
    evolve_lockstep(
        reference.clone(),
        vec![start],
        kernel,
        f,
        &opts.run.lockstep(t0, opts.duration, f.theta),
        |k, front, fol| {
            if k % every != 0 {
                return Ok(());
            }
            let u = &fol[0];
            if k == 0 || rows.is_empty() {
                centre = shift_guess(u, front, f.theta);
            }
            let (zeta, d) = best_shift(u, front, (centre - 2.0, centre + 2.0))?;
            centre = zeta;
            rows.push(StabilityRow {
                t: front.t,
                sup_distance: d,
                zeta_star: zeta,
                q: None,
                zeta_minus: None,
                zeta_plus: None,
                violation_margin: None,
            });
            Ok(())
        },
    )?;
    let fit = fit_decay(&rows, t0, opts.fit_band);
    let (zeta_star, zeta_drift) = zeta_summary(&rows);
    Ok(StabilityReport {
        params: *params,
        t0,
        epsilon: None,
        rows,
        violations: 0,
        worst_margin: None,
        tolerance: SANDWICH_TOL,
        distance_at_three_over_omega: None,
        fit,
        zeta_star,
        zeta_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub min_margin: f64,
    pub steps: usize,
    pub passed: bool,
}

/// Ordering tolerance for the comparison principle.
pub const ORDER_TOL: f64 = 1e-8;

/// Rounding-level slack on `u0 <= v0`: interpolated shifts of a profile that
/// is flat at 1 can dip below it by a few ulps.
pub const PRECONDITION_SLACK: f64 = 1e-12;

/// Evolve `u0 <= v0` with identical steppers and report `min (v - u)`.
pub fn comparison_test(
    u0: &FieldState,
    v0: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    opts: &EvolveOptions,
) -> Result<ComparisonReport> {
    if u0.grid != v0.grid {
        return Err(FrontError::Precondition("pair must share a grid".into()));
    }
    let margin = |u: &FieldState, v: &FieldState| {
        v.u.iter()
            .zip(&u.u)
            .map(|(a, b)| a - b)
            .fold((v.left - u.left).min(v.right - u.right), f64::min)
    };
    if margin(u0, v0) < -PRECONDITION_SLACK {
        return Err(FrontError::Precondition("u0 <= v0 does not hold".into()));
    }
    let mut min_margin = f64::INFINITY;
    let mut steps = 0;
    evolve_lockstep(u0.clone(), vec![v0.clone()], kernel, f, opts, |k, u, v| {
        min_margin = min_margin.min(margin(u, &v[0]));
        steps = k;
        Ok(())
    })?;
    Ok(ComparisonReport {
        min_margin,
        steps,
        passed: min_margin >= -ORDER_TOL,
    })
}

/// `clamp(front - a1 b1, 0, 1) <= clamp(front + a2 b2, 0, 1)` with random
/// nonnegative Gaussian bumps near the interface.
pub fn random_ordered_pair(
    front: &FieldState,
    x_front: f64,
    rng: &mut impl Rng,
) -> (FieldState, FieldState) {
    let mut bump = || {
        let centre = x_front + rng.gen_range(-10.0..10.0);
        let width = rng.gen_range(0.5..3.0);
        let amp = rng.gen_range(0.0..0.2);
        move |x: f64| amp * (-((x - centre) / width).powi(2)).exp()
    };
    let (lo, hi) = (bump(), bump());
    let build = |sign: f64, b: &dyn Fn(f64) -> f64| {
        let u = front
            .u
            .iter()
            .enumerate()
            .map(|(i, v)| (v + sign * b(front.grid.x(i))).clamp(0.0, 1.0))
            .collect();
        FieldState::new(front.t, front.grid, u, front.left, front.right).expect("same grid")
    };
    (build(-1.0, &lo), build(1.0, &hi))
}

/// Runs `count` random ordered pairs drawn from `seed`, in parallel.
pub fn comparison_sweep(
    front: &FieldState,
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    count: usize,
    seed: u64,
    opts: &EvolveOptions,
) -> Result<Vec<ComparisonReport>> {
    let x = interface(front, f.theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..count)
        .map(|_| random_ordered_pair(front, x, &mut rng))
        .collect();
    map_jobs(&pairs, |(u, v)| comparison_test(u, v, kernel, f, opts))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_formulas() {
        let p = StabilityParameters::from_constants(0.1, 5.0, 8.0, 0.2, 2.5, 0.108, 0.3, 0.9, 1.2)
            .unwrap();
        assert!((p.a - 30.0).abs() < 1e-12);
        assert!((p.eps0 - 1.0 / 120.0).abs() < 1e-15);
        assert!((p.omega - 0.03).abs() < 1e-15);
        let sab = p.with_a(0.0);
        assert!((sab.eps0 - 0.05).abs() < 1e-15);
        assert!(matches!(
            StabilityParameters::from_constants(0.1, 5.0, 8.0, 0.0, 2.5, 0.108, 0.3, 0.9, 1.2),
            Err(FrontError::DegenerateSteepness { .. })
        ));
    }

    #[test]
    fn gamma_branches() {
        let g = make_gamma(0.05, 8.0).unwrap();
        assert_eq!(g.value(-9.0), 1.0);
        assert_eq!(g.derivative(-9.0), 0.0);
        assert_eq!(g.value(9.0), (-0.05f64).exp());
        assert_eq!(g.value(20.0), (-0.05f64 * 12.0).exp());
        let eps = 1e-7;
        for x in [7.0, 9.0] {
            let left = (g.value(x) - g.value(x - eps)) / eps;
            let right = (g.value(x + eps) - g.value(x)) / eps;
            assert!((left - right).abs() < 1e-5);
        }
        assert!(make_gamma(2.5, 1.0).is_err());
        assert!(make_gamma(0.1, 0.0).is_err());
    }

    #[test]
    fn envelope_laws() {
        let p = StabilityParameters::from_constants(0.1, 5.0, 8.0, 0.2, 2.5, 0.108, 0.3, 0.9, 1.2)
            .unwrap();
        let env = PerturbationEnvelope::new(&p, 1.0, p.eps0, (-0.5, 0.5)).unwrap();
        assert_eq!(env.eval(1.0).unwrap(), (-0.5, 0.5, p.eps0));
        let (_, _, q) = env.eval(1.0 + 2f64.ln() / p.omega).unwrap();
        assert!((q - p.eps0 / 2.0).abs() < 1e-15);
        let (lo, hi, _) = env.eval(1e6).unwrap();
        assert!((hi - 0.5 - env.drift()).abs() < 1e-12);
        assert!((lo + 0.5 + env.drift()).abs() < 1e-12);
        assert!(env.eval(0.5).is_err());
        assert!(PerturbationEnvelope::new(&p, 0.0, 2.0 * p.eps0, (0.0, 0.0)).is_err());
    }
}

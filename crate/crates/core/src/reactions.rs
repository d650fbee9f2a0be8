//! Time-heterogeneous ignition nonlinearities `f(t,u) = a(t) f0(u)` and the
//! sampled hypothesis validator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, FrontError, Result};
use crate::kernels::{exponential_moment, Kernel};

/// States outside this range are rejected by the checked evaluators.
pub const GUARD_RANGE: (f64, f64) = (-1.0, 3.0);

/// `f0(u) = sum_k c_k (u - theta)^k` for `u > theta`, zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseProfile {
    pub theta: f64,
    /// Coefficients `c_0, c_1, ...` of the polynomial in `u - theta`.
    pub coefficients: Vec<f64>,
}

impl BaseProfile {
    /// `(u - theta)^3 (1 - u)`.
    pub fn cubic_ignition(theta: f64) -> Self {
        BaseProfile {
            theta,
            coefficients: vec![0.0, 0.0, 0.0, 1.0 - theta, -1.0],
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        if u <= self.theta {
            return 0.0;
        }
        let s = u - self.theta;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * s + c)
    }

    #[inline]
    pub fn du(&self, u: f64) -> f64 {
        if u <= self.theta {
            return 0.0;
        }
        let s = u - self.theta;
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c)
    }

    pub fn duu(&self, u: f64) -> f64 {
        if u <= self.theta {
            return 0.0;
        }
        let s = u - self.theta;
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + (k * (k - 1)) as f64 * c)
    }
}

/// Bounded time modulation `a(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modulation {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * sin(frequency * t + phase)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Modulation {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Modulation::Constant { value } => value,
            Modulation::Sinusoid {
                mean,
                amplitude,
                frequency,
                phase,
            } => mean + amplitude * (frequency * t + phase).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Modulation::Constant { .. } => 0.0,
            Modulation::Sinusoid {
                amplitude,
                frequency,
                phase,
                ..
            } => amplitude * frequency * (frequency * t + phase).cos(),
        }
    }

    /// `(a_lo, a_hi)`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Modulation::Constant { value } => (value, value),
            Modulation::Sinusoid {
                mean, amplitude, ..
            } => (mean - amplitude.abs(), mean + amplitude.abs()),
        }
    }

    /// One period, or `1` for a constant.
    pub fn period(&self) -> f64 {
        match *self {
            Modulation::Constant { .. } => 1.0,
            Modulation::Sinusoid { frequency, .. } => 2.0 * PI / frequency.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgnitionNonlinearity {
    pub theta: f64,
    pub theta_tilde: f64,
    pub beta_tilde: f64,
    pub base: BaseProfile,
    pub modulation: Modulation,
    /// Declared envelope factors: `f_min = a_lo f0`, `f_max = a_hi f0`.
    pub a_lo: f64,
    pub a_hi: f64,
}

impl IgnitionNonlinearity {
    /// Envelope taken from the modulation range and `beta_tilde` from dense
    /// sampling of `-a_lo f0'` on `[theta_tilde, 2]`.
    pub fn new(theta_tilde: f64, base: BaseProfile, modulation: Modulation) -> Result<Self> {
        let theta = base.theta;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(invalid("theta", "must lie in (0, 1)"));
        }
        if !(theta_tilde > theta && theta_tilde < 1.0) {
            return Err(invalid("theta_tilde", "must lie in (theta, 1)"));
        }
        let (a_lo, a_hi) = modulation.range();
        if !(a_lo > 0.0) {
            return Err(invalid("modulation", "lower bound must be positive"));
        }
        let m = 20_000;
        let beta_tilde = (0..=m)
            .map(|j| {
                let u = theta_tilde + (2.0 - theta_tilde) * j as f64 / m as f64;
                -a_lo * base.du(u)
            })
            .fold(f64::INFINITY, f64::min);
        Ok(IgnitionNonlinearity {
            theta,
            theta_tilde,
            beta_tilde,
            base,
            modulation,
            a_lo,
            a_hi,
        })
    }

    /// The autonomous slice `a f0`.
    pub fn autonomous(&self, a: f64) -> Self {
        IgnitionNonlinearity {
            modulation: Modulation::Constant { value: a },
            beta_tilde: self.beta_tilde / self.a_lo * a,
            a_lo: a,
            a_hi: a,
            ..self.clone()
        }
    }

    pub fn f_min(&self) -> Self {
        self.autonomous(self.a_lo)
    }

    pub fn f_max(&self) -> Self {
        self.autonomous(self.a_hi)
    }

    /// Unchecked `f(t,u)`; callers validate the state range separately.
    #[inline]
    pub fn value(&self, t: f64, u: f64) -> f64 {
        self.modulation.value(t) * self.base.value(u)
    }

    #[inline]
    pub fn value_du(&self, t: f64, u: f64) -> f64 {
        self.modulation.value(t) * self.base.du(u)
    }

    fn guard(u: f64) -> Result<()> {
        if !(GUARD_RANGE.0..=GUARD_RANGE.1).contains(&u) {
            return Err(FrontError::GuardRange { u });
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, u: f64) -> Result<f64> {
        Self::guard(u)?;
        Ok(self.value(t, u))
    }

    pub fn eval_du(&self, t: f64, u: f64) -> Result<f64> {
        Self::guard(u)?;
        Ok(self.value_du(t, u))
    }

    pub fn eval_dt(&self, t: f64, u: f64) -> Result<f64> {
        Self::guard(u)?;
        Ok(self.modulation.derivative(t) * self.base.value(u))
    }

    pub fn eval_duu(&self, t: f64, u: f64) -> Result<f64> {
        Self::guard(u)?;
        Ok(self.modulation.value(t) * self.base.duu(u))
    }

    pub fn f_min_value(&self, u: f64) -> f64 {
        self.a_lo * self.base.value(u)
    }

    pub fn f_max_value(&self, u: f64) -> f64 {
        self.a_hi * self.base.value(u)
    }

    /// `sup |f_u|` over one period and `u` in `[0, 2]`.
    pub fn c_fu(&self) -> f64 {
        let (a_lo, a_hi) = self.modulation.range();
        let a = a_lo.abs().max(a_hi.abs()).max(self.a_hi);
        let m = 20_000;
        (0..=m)
            .map(|j| (self.base.du(2.0 * j as f64 / m as f64)).abs())
            .fold(0.0, f64::max)
            * a
    }

    /// Explicit RK4 step budget `0.9 * 2 / (1 + C_fu)`.
    pub fn dt_max(&self) -> f64 {
        1.8 / (1.0 + self.c_fu())
    }
}

/// `theta = 0.3`, `f0 = (u - theta)^3 (1 - u)`, `a(t) = 1.5 + 0.5 sin t`, `theta_tilde = 0.9`.
pub fn make_default_ignition() -> IgnitionNonlinearity {
    IgnitionNonlinearity::new(
        0.9,
        BaseProfile::cubic_ignition(0.3),
        Modulation::Sinusoid {
            mean: 1.5,
            amplitude: 0.5,
            frequency: 1.0,
            phase: 0.0,
        },
    )
    .expect("default family is admissible")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    /// Samples across one modulation period.
    pub n_t: usize,
    /// Samples of `u` on `[u_lo, u_hi]`.
    pub n_u: usize,
    pub u_lo: f64,
    pub u_hi: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec {
            n_t: 64,
            n_u: 2001,
            u_lo: -0.5,
            u_hi: 2.0,
        }
    }
}

impl SamplingSpec {
    pub fn doubled(&self) -> Self {
        SamplingSpec {
            n_t: 2 * self.n_t,
            n_u: 2 * self.n_u - 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub hypothesis: String,
    pub t: f64,
    /// State `u`, or the stencil position for kernel checks.
    pub at: f64,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub h4: bool,
    pub c_fu: f64,
    pub sup_ft: f64,
    pub sup_fuu: f64,
    pub beta_tilde_declared: f64,
    pub beta_tilde_realized: f64,
    pub kernel_mass: f64,
    pub kernel_derivative_l1: f64,
    /// Verdicts and constants agree with a run at doubled resolution.
    pub resolution_consistent: bool,
    pub violations: Vec<Violation>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h1 && self.h2 && self.h3 && self.h4
    }

    /// Key/value block followed by the violation table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("H1", self.h1),
            ("H2", self.h2),
            ("H3", self.h3),
            ("H4", self.h4),
            ("resolution_consistent", self.resolution_consistent),
        ] {
            let _ = writeln!(s, "{k} = {}", if v { "pass" } else { "fail" });
        }
        for (k, v) in [
            ("C_fu", self.c_fu),
            ("sup_ft", self.sup_ft),
            ("sup_fuu", self.sup_fuu),
            ("beta_tilde_declared", self.beta_tilde_declared),
            ("beta_tilde_realized", self.beta_tilde_realized),
            ("kernel_mass", self.kernel_mass),
            ("kernel_derivative_l1", self.kernel_derivative_l1),
        ] {
            let _ = writeln!(s, "{k} = {v:.12e}");
        }
        let _ = writeln!(s, "violations = {}", self.violations.len());
        if !self.violations.is_empty() {
            let _ = writeln!(s, "hypothesis,t,at,value,detail");
            for v in &self.violations {
                let _ = writeln!(
                    s,
                    "{},{:.6e},{:.6e},{:.6e},{}",
                    v.hypothesis, v.t, v.at, v.value, v.detail
                );
            }
        }
        s
    }
}

/// Cap on recorded violations per check, so a wholesale failure stays readable.
const MAX_RECORDED: usize = 16;

struct Recorder {
    violations: Vec<Violation>,
    counts: [usize; 4],
}

impl Recorder {
    fn push(&mut self, h: usize, t: f64, at: f64, value: f64, detail: &str) {
        self.counts[h] += 1;
        if self.counts[h] <= MAX_RECORDED {
            self.violations.push(Violation {
                hypothesis: format!("H{}", h + 1),
                t,
                at,
                value,
                detail: detail.to_string(),
            });
        }
    }
}

fn sample_once(kernel: &Kernel, f: &IgnitionNonlinearity, spec: &SamplingSpec) -> HypothesisReport {
    let mut rec = Recorder {
        violations: Vec::new(),
        counts: [0; 4],
    };
    let tol = 1e-12;

    // H1: symmetric, nonnegative, unit mass, C^1 with odd derivative,
    // finite exponential moments.
    let k = kernel.half;
    for j in 0..=k {
        let (a, b) = (kernel.samples[k + j], kernel.samples[k - j]);
        if a != b {
            rec.push(0, 0.0, j as f64 * kernel.h, a - b, "J(x) != J(-x)");
        }
        let (da, db) = (
            kernel.derivative_samples[k + j],
            kernel.derivative_samples[k - j],
        );
        if da != -db {
            rec.push(0, 0.0, j as f64 * kernel.h, da + db, "J'(x) != -J'(-x)");
        }
    }
    for (x, v) in kernel.positions().iter().zip(&kernel.samples) {
        if *v < 0.0 || !v.is_finite() {
            rec.push(0, 0.0, *x, *v, "J(x) < 0");
        }
    }
    let mass = kernel.mass();
    if (mass - 1.0).abs() > 1e-12 {
        rec.push(0, 0.0, 0.0, mass, "quadrature mass != 1");
    }
    if kernel.r_max > 0.0 {
        match exponential_moment(kernel, 0.5 * kernel.r_max) {
            Ok(v) if v.is_finite() => {}
            _ => rec.push(
                0,
                0.0,
                0.5 * kernel.r_max,
                f64::NAN,
                "exponential moment infinite",
            ),
        }
    }
    if !kernel.derivative_l1().is_finite() {
        rec.push(0, 0.0, 0.0, f64::NAN, "int |J'| infinite");
    }

    let theta = f.theta;
    if !(f.a_lo > 0.0 && f.a_lo <= f.a_hi) {
        rec.push(1, 0.0, 0.0, f.a_lo, "envelope factors not 0 < a_lo <= a_hi");
    }
    if !(theta < f.theta_tilde && f.theta_tilde < 1.0) {
        rec.push(
            3,
            0.0,
            f.theta_tilde,
            f.theta_tilde,
            "theta_tilde outside (theta, 1)",
        );
    }
    if !(f.beta_tilde > 0.0) {
        rec.push(
            3,
            0.0,
            f.theta_tilde,
            f.beta_tilde,
            "beta_tilde not positive",
        );
    }

    let period = f.modulation.period();
    let mut c_fu = 0.0f64;
    let mut sup_ft = 0.0f64;
    let mut sup_fuu = 0.0f64;
    let mut beta_realized = f64::INFINITY;
    for it in 0..spec.n_t {
        let t = period * it as f64 / spec.n_t as f64;
        for iu in 0..spec.n_u {
            let u = spec.u_lo + (spec.u_hi - spec.u_lo) * iu as f64 / (spec.n_u - 1) as f64;
            let v = f.value(t, u);
            let du = f.value_du(t, u);
            let dt = f.modulation.derivative(t) * f.base.value(u);
            let duu = f.modulation.value(t) * f.base.duu(u);
            if !(v.is_finite() && du.is_finite() && dt.is_finite() && duu.is_finite()) {
                rec.push(2, t, u, v, "non-finite derivative");
                continue;
            }
            if u >= 0.0 {
                c_fu = c_fu.max(du.abs());
            }
            if (0.0..=1.0).contains(&u) {
                sup_ft = sup_ft.max(dt.abs());
                sup_fuu = sup_fuu.max(duu.abs());
                let (lo, hi) = (f.f_min_value(u), f.f_max_value(u));
                if v < lo - tol || v > hi + tol {
                    rec.push(1, t, u, v, "f outside [f_min, f_max]");
                }
            }
            if u < 0.0 && v != 0.0 {
                rec.push(3, t, u, v, "f != 0 for u < 0");
            }
            if (0.0..=theta).contains(&u) && v.abs() > tol {
                rec.push(1, t, u, v, "f != 0 on [0, theta]");
            }
            if u > theta && u < 1.0 && !(f.f_min_value(u) > 0.0) {
                rec.push(
                    1,
                    t,
                    u,
                    f.f_min_value(u),
                    "f_min not positive on (theta, 1)",
                );
            }
            if u > 1.0 && u <= 2.0 && !(v < 0.0) {
                rec.push(3, t, u, v, "f >= 0 on (1, 2]");
            }
            if u >= f.theta_tilde && u <= 2.0 {
                beta_realized = beta_realized.min(-du);
                if du > -f.beta_tilde + tol {
                    rec.push(3, t, u, du, "f_u > -beta_tilde on [theta_tilde, 2]");
                }
            }
        }
        let one = f.value(t, 1.0);
        if one.abs() > tol {
            rec.push(1, t, 1.0, one, "f(t, 1) != 0");
        }
    }

    HypothesisReport {
        h1: rec.counts[0] == 0,
        h2: rec.counts[1] == 0,
        h3: rec.counts[2] == 0,
        h4: rec.counts[3] == 0,
        c_fu,
        sup_ft,
        sup_fuu,
        beta_tilde_declared: f.beta_tilde,
        beta_tilde_realized: beta_realized,
        kernel_mass: mass,
        kernel_derivative_l1: kernel.derivative_l1(),
        resolution_consistent: true,
        violations: rec.violations,
    }
}

/// Check (H1)-(H4) by dense sampling, repeated at doubled resolution.
pub fn validate_hypotheses(
    kernel: &Kernel,
    f: &IgnitionNonlinearity,
    spec: &SamplingSpec,
) -> HypothesisReport {
    let mut coarse = sample_once(kernel, f, spec);
    let fine = sample_once(kernel, f, &spec.doubled());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-2 * a.abs().max(b.abs()).max(1e-12);
    coarse.resolution_consistent = coarse.h1 == fine.h1
        && coarse.h2 == fine.h2
        && coarse.h3 == fine.h3
        && coarse.h4 == fine.h4
        && close(coarse.c_fu, fine.c_fu)
        && close(coarse.sup_fuu, fine.sup_fuu);
    coarse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_kernel, KernelFamily};

    fn kernel() -> Kernel {
        build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, 0.05, 1e-12).unwrap()
    }

    #[test]
    fn default_family_values() {
        let f = make_default_ignition();
        for t in [0.0, 0.7, 2.0, -3.0] {
            assert_eq!(f.eval(t, 0.2).unwrap(), 0.0);
            assert_eq!(f.eval(t, 1.0).unwrap(), 0.0);
            assert_eq!(f.eval(t, -0.4).unwrap(), 0.0);
        }
        // a(0) = 1.5
        let v = f.eval(0.0, 0.65).unwrap();
        let oracle = 1.5 * 0.35f64.powi(3) * 0.35;
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.02251).abs() < 1e-5);
        assert_eq!(f.eval_du(1.0, 0.3).unwrap(), 0.0);
        assert!(f.eval_du(1.0, 0.3 + 1e-9).unwrap().abs() < 1e-15);
        assert!(matches!(
            f.eval(0.0, 3.5),
            Err(FrontError::GuardRange { .. })
        ));
    }

    #[test]
    fn beta_tilde_from_calculus() {
        // -f0'(u) = (u - theta)^2 (4u - 3 - theta) is increasing on [0.9, 2].
        let f = make_default_ignition();
        let oracle = 0.6f64.powi(2) * (4.0 * 0.9 - 3.3);
        assert!((oracle - 0.108).abs() < 1e-12);
        assert!((f.beta_tilde - oracle).abs() < 1e-12);
        assert_eq!((f.a_lo, f.a_hi), (1.0, 2.0));
    }

    #[test]
    fn derivative_ratio_test() {
        let f = make_default_ignition();
        for (t, u) in [(0.3, 0.5), (1.1, 0.8), (2.5, 1.4)] {
            let exact = f.eval_du(t, u).unwrap();
            let fd = |e: f64| (f.eval(t, u + e).unwrap() - f.eval(t, u - e).unwrap()) / (2.0 * e);
            let (e1, e2) = ((fd(1e-2) - exact).abs(), (fd(5e-3) - exact).abs());
            assert!(e2 < e1 / 3.0, "{e1} {e2}");
            let fdt = (f.eval(t + 1e-5, u).unwrap() - f.eval(t - 1e-5, u).unwrap()) / 2e-5;
            assert!((fdt - f.eval_dt(t, u).unwrap()).abs() < 1e-8);
            let fduu = (f.eval_du(t, u + 1e-5).unwrap() - f.eval_du(t, u - 1e-5).unwrap()) / 2e-5;
            assert!((fduu - f.eval_duu(t, u).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn default_passes_validation() {
        let r = validate_hypotheses(
            &kernel(),
            &make_default_ignition(),
            &SamplingSpec::default(),
        );
        assert!(r.all_pass(), "{}", r.to_text());
        assert!(r.violations.is_empty());
        assert!(r.resolution_consistent);
        assert!(r.c_fu > 20.0 && r.c_fu < 30.0);
        assert!(
            r.beta_tilde_realized >= 0.108 - 1e-12 && r.beta_tilde_realized < 0.111,
            "{}",
            r.beta_tilde_realized
        );
    }

    #[test]
    fn low_theta_tilde_fails_h4() {
        let mut f = make_default_ignition();
        f.theta_tilde = 0.5;
        let r = validate_hypotheses(&kernel(), &f, &SamplingSpec::default());
        assert!(!r.h4);
        let worst = r
            .violations
            .iter()
            .find(|v| v.hypothesis == "H4")
            .expect("localized violation");
        assert!(worst.at >= 0.5 && worst.at < 0.95);
        // f0' changes sign at (3 + theta)/4 = 0.825.
        assert!(f.base.du(0.82) > 0.0 && f.base.du(0.83) < 0.0);
    }

    #[test]
    fn asymmetric_kernel_fails_h1() {
        let k = kernel();
        let mut samples = k.samples.clone();
        samples[k.half + 3] *= 1.01;
        let bad = Kernel::from_samples(k.h, samples, k.derivative_samples.clone()).unwrap();
        let r = validate_hypotheses(&bad, &make_default_ignition(), &SamplingSpec::default());
        assert!(!r.h1);
        assert!(r.violations.iter().any(|v| v.hypothesis == "H1"));
    }

    #[test]
    fn envelope_violation_fails_h2() {
        let mut f = make_default_ignition();
        f.a_hi = 1.8;
        let r = validate_hypotheses(&kernel(), &f, &SamplingSpec::default());
        assert!(!r.h2);
        let v = r.violations.iter().find(|v| v.hypothesis == "H2").unwrap();
        assert!(f.modulation.value(v.t) > 1.8);
    }
}

//! Dispersal kernels, discrete convolution operators, exponential moments
//! and iterated kernels.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::conv::{ConvolutionMethod, ConvolutionPlan};
use crate::error::{invalid, FrontError, Result};
use crate::field::FieldState;

/// Hard cap on the stencil radius, in length units.
pub const MAX_STENCIL_RADIUS: f64 = 400.0;
/// Default cap on the order of iterated kernels.
pub const DEFAULT_ORDER_CAP: usize = 32;

/// Named analytic kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelFamily {
    /// Centred normal density with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// `C exp(-1 / (1 - (x/a)^2))` on `|x| < a`.
    Bump { a: f64 },
    /// Cauchy density. Heavy-tailed: has no exponential moments.
    Cauchy { gamma: f64 },
    /// Samples supplied directly; cannot be built from a descriptor.
    Tabulated,
}

/// Normalising integral of `exp(-1/(1-s^2))` over `(-1, 1)`.
fn bump_integral() -> f64 {
    // The integrand is flat to all orders at the endpoints, so the
    // trapezoid rule converges spectrally.
    let m = 4000;
    let ds = 2.0 / m as f64;
    (1..m)
        .map(|j| {
            let s = -1.0 + j as f64 * ds;
            (-1.0 / (1.0 - s * s)).exp()
        })
        .sum::<f64>()
        * ds
}

/// Upper tail of the standard normal, `P(Z > z)`.
pub(crate) fn normal_q(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

impl KernelFamily {
    fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::Gaussian { sigma } if !(sigma > 0.0) => {
                Err(invalid("sigma", "must be positive"))
            }
            KernelFamily::Bump { a } if !(a > 0.0) => Err(invalid("a", "must be positive")),
            KernelFamily::Cauchy { gamma } if !(gamma > 0.0) => {
                Err(invalid("gamma", "must be positive"))
            }
            KernelFamily::Tabulated => Err(FrontError::UnsupportedFamily(
                "tabulated kernels have no closed form".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            KernelFamily::Bump { a } => {
                let s = x / a;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - s * s)).exp() / (a * bump_integral())
                }
            }
            KernelFamily::Cauchy { gamma } => gamma / (PI * (x * x + gamma * gamma)),
            KernelFamily::Tabulated => f64::NAN,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian { sigma } => -x / (sigma * sigma) * self.density(x),
            KernelFamily::Bump { a } => {
                let s = x / a;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let d = 1.0 - s * s;
                    self.density(x) * (-2.0 * s / (a * d * d))
                }
            }
            KernelFamily::Cauchy { gamma } => {
                let d = x * x + gamma * gamma;
                -2.0 * gamma * x / (PI * d * d)
            }
            KernelFamily::Tabulated => f64::NAN,
        }
    }

    /// Mass outside `[-r, r]`.
    pub fn tail_mass(&self, r: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian { sigma } => 2.0 * normal_q(r / sigma),
            KernelFamily::Bump { a } => {
                if r >= a {
                    0.0
                } else {
                    // Only reached while searching for the radius.
                    1.0
                }
            }
            KernelFamily::Cauchy { gamma } => 1.0 - 2.0 / PI * (r / gamma).atan(),
            KernelFamily::Tabulated => 0.0,
        }
    }

    /// `int_{|x|>r} J(x) e^{-rate x} dx`.
    fn moment_tail(&self, radius: f64, rate: f64) -> f64 {
        match *self {
            KernelFamily::Gaussian { sigma } => {
                let s2r = sigma * sigma * rate;
                (0.5 * s2r * rate).exp()
                    * (normal_q((radius + s2r) / sigma) + normal_q((radius - s2r) / sigma))
            }
            _ => 0.0,
        }
    }

    /// Largest |r| for which the stencil quadrature of `J e^{-rx}` is trusted.
    fn moment_range(&self, radius: f64) -> f64 {
        match *self {
            // The tilted density peaks at sigma^2 r; keep it 5 sigma inside the stencil.
            KernelFamily::Gaussian { sigma } => ((radius - 5.0 * sigma) / (sigma * sigma)).max(0.0),
            KernelFamily::Bump { a } => 50.0 / a,
            KernelFamily::Cauchy { .. } | KernelFamily::Tabulated => 0.0,
        }
    }
}

/// A dispersal kernel sampled on the stencil `k h`, `|k| <= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub family: KernelFamily,
    pub h: f64,
    /// Stencil half-width in nodes.
    pub half: usize,
    /// `J(kh)` for `k = -K..=K`.
    pub samples: Vec<f64>,
    /// `J'(kh)` for `k = -K..=K`.
    pub derivative_samples: Vec<f64>,
    /// Analytic mass outside the stencil before renormalisation.
    pub tail_mass_bound: f64,
    /// Trapezoid mass of the raw samples.
    pub raw_mass: f64,
    pub r_max: f64,
    weights: Vec<f64>,
    derivative_weights: Vec<f64>,
}

fn trapezoid_weights(samples: &[f64], h: f64) -> Vec<f64> {
    let last = samples.len() - 1;
    samples
        .iter()
        .enumerate()
        .map(|(j, v)| {
            if j == 0 || j == last {
                0.5 * h * v
            } else {
                h * v
            }
        })
        .collect()
}

/// Build a kernel whose stencil radius is the smallest grid-aligned `R`
/// with analytic tail mass at most `tail_tolerance`.
pub fn build_kernel(family: KernelFamily, spacing: f64, tail_tolerance: f64) -> Result<Kernel> {
    family.validate()?;
    if !(spacing > 0.0) {
        return Err(invalid("spacing", "must be positive"));
    }
    if !(tail_tolerance > 0.0 && tail_tolerance <= 1e-6) {
        return Err(invalid("tail_tolerance", "must lie in (0, 1e-6]"));
    }
    let k_cap = (MAX_STENCIL_RADIUS / spacing).floor() as usize;
    let tail = |k: usize| family.tail_mass(k as f64 * spacing);
    if tail(k_cap) > tail_tolerance {
        return Err(FrontError::HeavyTail {
            tail: tail(k_cap),
            cap: MAX_STENCIL_RADIUS,
        });
    }
    // Smallest k with tail(k) <= tol; the tail is nonincreasing in k.
    let (mut lo, mut hi) = (0usize, k_cap);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid) <= tail_tolerance {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let half = hi.max(1);

    let mut samples = vec![0.0; 2 * half + 1];
    let mut derivative_samples = vec![0.0; 2 * half + 1];
    for k in 0..=half {
        let x = k as f64 * spacing;
        let v = family.density(x);
        let d = family.derivative(x);
        samples[half + k] = v;
        samples[half - k] = v;
        derivative_samples[half + k] = d;
        derivative_samples[half - k] = -d;
    }
    derivative_samples[half] = 0.0;

    let raw_mass: f64 = trapezoid_weights(&samples, spacing).iter().sum();
    samples.iter_mut().for_each(|v| *v /= raw_mass);
    derivative_samples.iter_mut().for_each(|v| *v /= raw_mass);

    let radius = half as f64 * spacing;
    let mut kernel = Kernel {
        family,
        h: spacing,
        half,
        tail_mass_bound: family.tail_mass(radius),
        raw_mass,
        r_max: family.moment_range(radius),
        weights: Vec::new(),
        derivative_weights: Vec::new(),
        samples,
        derivative_samples,
    };
    kernel.refresh_weights();
    Ok(kernel)
}

impl Kernel {
    /// A kernel from explicit samples (no renormalisation, no symmetry
    /// enforcement). Used for user-supplied tables and crafted counterexamples.
    pub fn from_samples(h: f64, samples: Vec<f64>, derivative_samples: Vec<f64>) -> Result<Self> {
        if samples.len() % 2 != 1 || samples.len() != derivative_samples.len() {
            return Err(invalid("samples", "need matching odd-length stencils"));
        }
        if !(h > 0.0) {
            return Err(invalid("h", "must be positive"));
        }
        let raw_mass = trapezoid_weights(&samples, h).iter().sum();
        let mut kernel = Kernel {
            family: KernelFamily::Tabulated,
            h,
            half: samples.len() / 2,
            samples,
            derivative_samples,
            tail_mass_bound: 0.0,
            raw_mass,
            r_max: 0.0,
            weights: Vec::new(),
            derivative_weights: Vec::new(),
        };
        kernel.refresh_weights();
        Ok(kernel)
    }

    fn refresh_weights(&mut self) {
        self.weights = trapezoid_weights(&self.samples, self.h);
        self.derivative_weights = trapezoid_weights(&self.derivative_samples, self.h);
    }

    pub fn radius(&self) -> f64 {
        self.half as f64 * self.h
    }

    pub fn stencil_len(&self) -> usize {
        self.samples.len()
    }

    /// Quadrature weights `w_k` such that `(J*u)_i = sum_k w_k u_{i-k}`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn derivative_weights(&self) -> &[f64] {
        &self.derivative_weights
    }

    /// Sum-form quadrature mass of the samples.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Stencil positions `k h`.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|j| (j as f64 - self.half as f64) * self.h)
            .collect()
    }

    /// Kernel value at an arbitrary point: closed form when known, linear
    /// interpolation of the samples otherwise.
    pub fn value_at(&self, x: f64) -> f64 {
        match self.family {
            KernelFamily::Tabulated => interpolate_stencil(&self.samples, self.h, x),
            family => {
                if x.abs() > self.radius() {
                    0.0
                } else {
                    family.density(x) / self.raw_mass
                }
            }
        }
    }

    /// `int |J'|` by quadrature; reported as a diagnostic only.
    pub fn derivative_l1(&self) -> f64 {
        self.derivative_weights.iter().map(|w| w.abs()).sum()
    }

    /// A reusable plan for fields with `n` nodes.
    pub fn plan(
        &self,
        n: usize,
        with_derivative: bool,
        method: ConvolutionMethod,
    ) -> ConvolutionPlan {
        ConvolutionPlan::new(
            n,
            self.weights.clone(),
            with_derivative.then(|| self.derivative_weights.clone()),
            method,
        )
    }

    fn check_field(&self, field: &FieldState) -> Result<()> {
        if (field.grid.h - self.h).abs() > 1e-12 * self.h {
            return Err(FrontError::SpacingMismatch {
                field: field.grid.h,
                kernel: self.h,
            });
        }
        if field.grid.n < self.stencil_len() {
            return Err(FrontError::WindowTooNarrow {
                nodes: field.grid.n,
                stencil: self.stencil_len(),
            });
        }
        Ok(())
    }

    /// Two-column `x J(x)` dump.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# x J(x)\n");
        for (x, v) in self.positions().iter().zip(&self.samples) {
            out.push_str(&format!("{x:.10e} {v:.17e}\n"));
        }
        out
    }
}

fn interpolate_stencil(samples: &[f64], h: f64, x: f64) -> f64 {
    let half = (samples.len() / 2) as f64;
    let s = x / h + half;
    if s < 0.0 || s > (samples.len() - 1) as f64 {
        return 0.0;
    }
    let j = (s.floor() as usize).min(samples.len() - 2);
    let frac = s - j as f64;
    samples[j] + frac * (samples[j + 1] - samples[j])
}

/// `(J*u)` at every node of the window, with far-field extension.
pub fn convolve(kernel: &Kernel, field: &FieldState) -> Result<Vec<f64>> {
    kernel.check_field(field)?;
    let mut plan = kernel.plan(field.len(), false, ConvolutionMethod::Auto);
    let mut out = vec![0.0; field.len()];
    plan.apply(&field.u, field.left, field.right, &mut out);
    Ok(out)
}

/// `(J'*u)` at every node of the window, with far-field extension.
pub fn convolve_derivative(kernel: &Kernel, field: &FieldState) -> Result<Vec<f64>> {
    kernel.check_field(field)?;
    let mut plan = ConvolutionPlan::new(
        field.len(),
        kernel.derivative_weights.clone(),
        None,
        ConvolutionMethod::Auto,
    );
    let mut out = vec![0.0; field.len()];
    plan.apply(&field.u, field.left, field.right, &mut out);
    Ok(out)
}

/// `I(r) = int J(x) e^{-r x} dx`: stencil quadrature plus the family's
/// analytic tail correction.
pub fn exponential_moment(kernel: &Kernel, r: f64) -> Result<f64> {
    if r.abs() > kernel.r_max {
        return Err(FrontError::MomentOutOfRange {
            r,
            r_max: kernel.r_max,
        });
    }
    let quad: f64 = kernel
        .weights
        .iter()
        .enumerate()
        .map(|(j, w)| w * (-r * (j as f64 - kernel.half as f64) * kernel.h).exp())
        .sum();
    Ok(quad + kernel.family.moment_tail(kernel.radius(), r))
}

/// Positive decay rate for derivative tails: half the nonzero root of
/// `g(c) = c c_min - I(-c) + 1`.
pub fn positive_decay_rate(kernel: &Kernel, c_min: f64) -> Result<f64> {
    if !(c_min > 0.0) {
        return Err(invalid("c_min", "must be positive"));
    }
    let g = |c: f64| -> Result<f64> { Ok(c * c_min - exponential_moment(kernel, -c)? + 1.0) };
    let r_max = kernel.r_max;
    let steps = 400;
    let mut prev = 0.0;
    let mut bracket = None;
    for j in 1..=steps {
        let c = r_max * j as f64 / steps as f64;
        if g(c)? < 0.0 {
            bracket = Some((prev, c));
            break;
        }
        prev = c;
    }
    let (mut lo, mut hi) = bracket.ok_or(FrontError::NoDecayRoot { c_min, r_max })?;
    if lo == 0.0 {
        // g > 0 just above zero since g'(0) = c_min.
        lo = hi * 1e-6;
        if g(lo)? <= 0.0 {
            return Err(FrontError::NoDecayRoot { c_min, r_max });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * 0.5 * (lo + hi))
}

/// The `N`-fold self-convolution `J^N` on a stencil of radius `N R`.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedKernel {
    pub order: usize,
    pub h: f64,
    pub half: usize,
    pub samples: Vec<f64>,
    weights: Vec<f64>,
}

fn full_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

impl IteratedKernel {
    fn from_weights(order: usize, h: f64, weights: Vec<f64>) -> Self {
        let last = weights.len() - 1;
        let samples = weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                if j == 0 || j == last {
                    2.0 * w / h
                } else {
                    w / h
                }
            })
            .collect();
        IteratedKernel {
            order,
            h,
            half: weights.len() / 2,
            samples,
            weights,
        }
    }

    /// Fold this kernel with itself `n` times, giving order `n * self.order`.
    pub fn power(&self, n: usize) -> Result<IteratedKernel> {
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let mut acc = self.weights.clone();
        for _ in 1..n {
            acc = full_convolution(&acc, &self.weights);
        }
        Ok(Self::from_weights(self.order * n, self.h, acc))
    }

    /// `self * other`, of order `self.order + other.order`.
    pub fn compose(&self, other: &IteratedKernel) -> IteratedKernel {
        Self::from_weights(
            self.order + other.order,
            self.h,
            full_convolution(&self.weights, &other.weights),
        )
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn radius(&self) -> f64 {
        self.half as f64 * self.h
    }

    pub fn value_at(&self, x: f64) -> f64 {
        interpolate_stencil(&self.samples, self.h, x)
    }

    /// Infimum over `[lo, hi]`, from the samples inside plus the endpoints.
    pub fn inf_on(&self, lo: f64, hi: f64) -> f64 {
        let mut m = self.value_at(lo).min(self.value_at(hi));
        let first = (lo / self.h).ceil() as i64;
        let last = (hi / self.h).floor() as i64;
        for k in first..=last {
            m = m.min(self.value_at(k as f64 * self.h));
        }
        m
    }
}

pub fn iterated_kernel(kernel: &Kernel, n: usize) -> Result<IteratedKernel> {
    iterated_kernel_with_cap(kernel, n, DEFAULT_ORDER_CAP)
}

pub fn iterated_kernel_with_cap(kernel: &Kernel, n: usize, cap: usize) -> Result<IteratedKernel> {
    if n == 0 {
        return Err(invalid("N", "must be at least 1"));
    }
    if n > cap {
        return Err(FrontError::OrderCap { n, cap });
    }
    if n == 1 {
        return Ok(IteratedKernel {
            order: 1,
            h: kernel.h,
            half: kernel.half,
            samples: kernel.samples.clone(),
            weights: kernel.weights.clone(),
        });
    }
    let base = iterated_kernel(kernel, 1)?;
    base.power(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn gaussian() -> Kernel {
        build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, 0.05, 1e-12).unwrap()
    }

    /// Independent oracle: Simpson quadrature of the normal density tail.
    fn gaussian_tail_by_quadrature(r: f64) -> f64 {
        let (a, b, m) = (r, r + 30.0, 60_000);
        let dx = (b - a) / m as f64;
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for j in 1..m {
            s += pdf(a + j as f64 * dx) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        2.0 * s * dx / 3.0
    }

    #[test]
    fn gaussian_radius_matches_tail_oracle() {
        let k = gaussian();
        let h = 0.05;
        let expected = (1..)
            .map(|j| j as f64 * h)
            .find(|r| gaussian_tail_by_quadrature(*r) <= 1e-12)
            .unwrap();
        assert!((k.radius() - expected).abs() < 1e-12);
        assert!((k.radius() - 7.15).abs() < 1e-12);
    }

    #[test]
    fn samples_symmetric_and_unit_mass() {
        for family in [
            KernelFamily::Gaussian { sigma: 1.0 },
            KernelFamily::Gaussian { sigma: 0.7 },
            KernelFamily::Bump { a: 2.0 },
        ] {
            let k = build_kernel(family, 0.05, 1e-12).unwrap();
            for j in 0..=k.half {
                assert_eq!(k.samples[k.half + j], k.samples[k.half - j]);
                assert_eq!(
                    k.derivative_samples[k.half + j],
                    -k.derivative_samples[k.half - j]
                );
            }
            assert!(k.samples.iter().all(|v| *v >= 0.0));
            assert!((k.mass() - 1.0).abs() < 1e-14, "{}", k.mass() - 1.0);
            // The bump's flat endpoints limit the coarse quadrature to about 1e-8.
            let q_tol = 1e-8;
            assert!(
                k.raw_mass >= 1.0 - k.tail_mass_bound - q_tol,
                "{family:?} {}",
                k.raw_mass
            );
            assert!(k.raw_mass <= 1.0 + q_tol);
        }
    }

    #[test]
    fn heavy_tail_and_bad_inputs_rejected() {
        assert!(matches!(
            build_kernel(KernelFamily::Cauchy { gamma: 1.0 }, 0.05, 1e-10),
            Err(FrontError::HeavyTail { .. })
        ));
        assert!(matches!(
            build_kernel(KernelFamily::Tabulated, 0.05, 1e-10),
            Err(FrontError::UnsupportedFamily(_))
        ));
        assert!(build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, 0.05, 1e-3).is_err());
        assert!(build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, 0.0, 1e-9).is_err());
    }

    #[test]
    fn convolve_constant_and_step() {
        let k = gaussian();
        let grid = Grid::symmetric(20.0, 0.05).unwrap();
        let ones = FieldState::constant(0.0, grid, 1.0);
        for v in convolve(&k, &ones).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for v in convolve_derivative(&k, &ones).unwrap() {
            assert!(v.abs() < 1e-12);
        }
        // Step with the midpoint value at the jump, which the trapezoid rule
        // integrates to second order.
        let step = FieldState::from_fn(0.0, grid, 1.0, 0.0, |x| {
            if x < 0.0 {
                1.0
            } else if x == 0.0 {
                0.5
            } else {
                0.0
            }
        });
        let ju = convolve(&k, &step).unwrap();
        let jpu = convolve_derivative(&k, &step).unwrap();
        let i0 = grid.index_of_lattice(0).unwrap();
        assert!((ju[i0] - 0.5).abs() < 1e-12, "{}", ju[i0]);
        for j in [-40i64, -10, 7, 25] {
            let i = grid.index_of_lattice(j).unwrap();
            let x = grid.x(i);
            assert!((ju[i] - normal_q(x)).abs() < 1e-4, "{x}: {}", ju[i]);
        }
        let expected = -1.0 / (2.0 * PI).sqrt();
        assert!((jpu[i0] - expected).abs() < 1e-3, "{}", jpu[i0]);
    }

    #[test]
    fn convolve_errors() {
        let k = gaussian();
        let narrow = FieldState::constant(0.0, Grid::symmetric(2.0, 0.05).unwrap(), 0.5);
        assert!(matches!(
            convolve(&k, &narrow),
            Err(FrontError::WindowTooNarrow { .. })
        ));
        let coarse = FieldState::constant(0.0, Grid::symmetric(40.0, 0.1).unwrap(), 0.5);
        assert!(matches!(
            convolve(&k, &coarse),
            Err(FrontError::SpacingMismatch { .. })
        ));
    }

    #[test]
    fn moments_match_closed_form() {
        let k = gaussian();
        assert!((exponential_moment(&k, 0.0).unwrap() - 1.0).abs() < 1e-12);
        for r in [0.25f64, 0.5, 1.0] {
            let exact = (0.5 * r * r).exp();
            assert!((exponential_moment(&k, r).unwrap() - exact).abs() < 1e-8);
        }
        for r in [0.1, 0.5, 1.0] {
            let a = exponential_moment(&k, r).unwrap();
            let b = exponential_moment(&k, -r).unwrap();
            assert!((a - b).abs() < 1e-10);
            assert!(a >= 1.0);
        }
        assert!(matches!(
            exponential_moment(&k, 50.0),
            Err(FrontError::MomentOutOfRange { .. })
        ));
    }

    #[test]
    fn small_rate_taylor_ratio() {
        let k = gaussian();
        let ratio = |r: f64| (exponential_moment(&k, r).unwrap() - 1.0) / (r * r);
        let (a, b) = (ratio(0.02), ratio(0.01));
        assert!(((a - b) / b).abs() < 0.25);
        // I''(0)/2 = sigma^2/2
        assert!((b - 0.5).abs() < 0.01);
    }

    /// Independent bisection on the closed-form Gaussian moment.
    fn decay_root_oracle(c_min: f64) -> f64 {
        let g = |c: f64| c * c_min + 1.0 - (0.5 * c * c).exp();
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    #[test]
    fn decay_rate_matches_oracle() {
        let k = gaussian();
        let root = decay_root_oracle(1.2);
        assert!((root - 1.41).abs() < 0.01);
        let c = positive_decay_rate(&k, 1.2).unwrap();
        assert!((c - 0.5 * root).abs() < 1e-8, "{c} vs {}", 0.5 * root);
        let g = 1.2 * c - exponential_moment(&k, -c).unwrap() + 1.0;
        assert!(g > 0.0);
        let doubled = positive_decay_rate(&k, 2.4).unwrap();
        assert!(doubled > c);
        assert!((doubled - 0.5 * decay_root_oracle(2.4)).abs() < 1e-6);
    }

    #[test]
    fn iterated_kernels() {
        let k = gaussian();
        let one = iterated_kernel(&k, 1).unwrap();
        assert_eq!(one.samples, k.samples);
        let two = iterated_kernel(&k, 2).unwrap();
        let peak = two.samples[two.half];
        assert!((peak - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-6);
        for n in [2, 3, 5] {
            let kn = iterated_kernel(&k, n).unwrap();
            assert!((kn.mass() - 1.0).abs() < n as f64 * 1e-12);
            assert_eq!(kn.half, n * k.half);
        }
        let four = iterated_kernel(&k, 4).unwrap();
        let two_two = two.power(2).unwrap();
        let sup = four
            .samples
            .iter()
            .zip(&two_two.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-8);
        assert!(matches!(
            iterated_kernel(&k, 33),
            Err(FrontError::OrderCap { n: 33, cap: 32 })
        ));
    }

    #[test]
    fn bump_kernel_derivative_matches_differences() {
        let fam = KernelFamily::Bump { a: 2.0 };
        for x in [-1.5, -0.3, 0.4, 1.2] {
            let e = 1e-5;
            let fd = (fam.density(x + e) - fam.density(x - e)) / (2.0 * e);
            assert!((fd - fam.derivative(x)).abs() < 1e-7);
        }
        let k = build_kernel(fam, 0.05, 1e-9).unwrap();
        assert!((k.radius() - 2.0).abs() < 1e-12);
        assert!(k.derivative_l1().is_finite());
    }
}

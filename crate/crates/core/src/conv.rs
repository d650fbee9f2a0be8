//! Discrete convolution of a windowed field with a fixed stencil.
//!
//! Fields live on a finite window and are extended by constant far-field
//! values on either side. The output at node `i` is
//! `sum_k w_k * u_{i-k}` for `k` in `[-K, K]`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::par;

/// Stencils with at least this many points use the FFT path under `Auto`.
pub const FFT_STENCIL_THRESHOLD: usize = 512;
/// Below the stencil threshold `Auto` still picks the FFT when direct work
/// `n * L` exceeds this multiple of `size * log2(size)`. Calibrated with the
/// `convolution` bench: a 287-point stencil on 3201 nodes runs about 15x
/// faster through the transform.
pub const FFT_COST_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

impl ConvolutionMethod {
    fn resolve(self, n: usize, stencil_len: usize) -> Self {
        match self {
            ConvolutionMethod::Auto => {
                let size = fft_size(n, stencil_len / 2);
                let fft_cost = FFT_COST_FACTOR * size * size.trailing_zeros() as usize;
                if stencil_len >= FFT_STENCIL_THRESHOLD || n * stencil_len >= fft_cost {
                    ConvolutionMethod::Fft
                } else {
                    ConvolutionMethod::Direct
                }
            }
            other => other,
        }
    }
}

fn fft_size(n: usize, half: usize) -> usize {
    (n + 4 * half).next_power_of_two()
}

/// Copy `u` into `padded` with `half` far-field values on each side.
pub fn pad_into(u: &[f64], left: f64, right: f64, half: usize, padded: &mut Vec<f64>) {
    padded.clear();
    padded.reserve(u.len() + 2 * half);
    padded.extend(std::iter::repeat_n(left, half));
    padded.extend_from_slice(u);
    padded.extend(std::iter::repeat_n(right, half));
}

/// Direct summation. `stencil[j]` holds `w_{j-K}`; `padded` has `K` far-field
/// values on each side of the field.
pub fn convolve_direct(stencil: &[f64], padded: &[f64], out: &mut [f64]) {
    let width = stencil.len();
    debug_assert_eq!(padded.len(), out.len() + width - 1);
    par::fill_indexed(out, |i| {
        let window = &padded[i..i + width];
        // out_i = sum_j w_{K-j} padded[i+j]
        stencil
            .iter()
            .rev()
            .zip(window)
            .fold(0.0, |acc, (w, u)| acc + w * u)
    });
}

/// Sequential direct summation, kept for benchmarking the parallel path.
pub fn convolve_direct_sequential(stencil: &[f64], padded: &[f64], out: &mut [f64]) {
    let width = stencil.len();
    for (i, o) in out.iter_mut().enumerate() {
        let window = &padded[i..i + width];
        *o = stencil
            .iter()
            .rev()
            .zip(window)
            .fold(0.0, |acc, (w, u)| acc + w * u);
    }
}

struct FftState {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Transform of `a + i b` for the (up to two) real stencils.
    spectrum: Vec<Complex64>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

/// Reusable convolution plan for a fixed output length and one or two stencils.
///
/// With two stencils a single transform pair produces both outputs: the
/// stencils are packed as the real and imaginary parts of one complex
/// sequence, which is exact because the field is real.
pub struct ConvolutionPlan {
    n: usize,
    half: usize,
    primary: Vec<f64>,
    secondary: Option<Vec<f64>>,
    method: ConvolutionMethod,
    fft: Option<FftState>,
    padded: Vec<f64>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("n", &self.n)
            .field("half", &self.half)
            .field("method", &self.method)
            .finish()
    }
}

impl Clone for ConvolutionPlan {
    fn clone(&self) -> Self {
        ConvolutionPlan::new(
            self.n,
            self.primary.clone(),
            self.secondary.clone(),
            self.method,
        )
    }
}

impl ConvolutionPlan {
    /// `primary` (and `secondary`, if given) hold `w_{-K}..w_{K}`.
    pub fn new(
        n: usize,
        primary: Vec<f64>,
        secondary: Option<Vec<f64>>,
        method: ConvolutionMethod,
    ) -> Self {
        assert!(primary.len() % 2 == 1, "stencil length must be odd");
        if let Some(s) = &secondary {
            assert_eq!(s.len(), primary.len());
        }
        let half = primary.len() / 2;
        let method = method.resolve(n, primary.len());
        let fft = (method == ConvolutionMethod::Fft)
            .then(|| Self::build_fft(n, &primary, secondary.as_deref()));
        ConvolutionPlan {
            n,
            half,
            primary,
            secondary,
            method,
            fft,
            padded: Vec::with_capacity(n + 2 * half),
        }
    }

    fn build_fft(n: usize, primary: &[f64], secondary: Option<&[f64]>) -> FftState {
        let half = primary.len() / 2;
        let size = fft_size(n, half);
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (j, w) in primary.iter().enumerate() {
            spectrum[j].re = *w;
        }
        if let Some(s) = secondary {
            for (j, w) in s.iter().enumerate() {
                spectrum[j].im = *w;
            }
        }
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        forward.process_with_scratch(&mut spectrum, &mut scratch);
        let scale = 1.0 / size as f64;
        spectrum.iter_mut().for_each(|z| *z *= scale);
        FftState {
            size,
            forward,
            inverse,
            spectrum,
            buffer: vec![Complex64::new(0.0, 0.0); size],
            scratch,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    /// Convolve with the primary stencil.
    pub fn apply(&mut self, u: &[f64], left: f64, right: f64, out: &mut [f64]) {
        assert_eq!(u.len(), self.n);
        assert_eq!(out.len(), self.n);
        pad_into(u, left, right, self.half, &mut self.padded);
        match self.fft.as_mut() {
            None => convolve_direct(&self.primary, &self.padded, out),
            Some(state) => {
                Self::transform(state, &self.padded);
                let offset = 2 * self.half;
                for (i, o) in out.iter_mut().enumerate() {
                    *o = state.buffer[i + offset].re;
                }
            }
        }
    }

    /// Convolve with both stencils. Panics if the plan has no secondary stencil.
    pub fn apply_both(
        &mut self,
        u: &[f64],
        left: f64,
        right: f64,
        out_primary: &mut [f64],
        out_secondary: &mut [f64],
    ) {
        assert_eq!(u.len(), self.n);
        let secondary = self
            .secondary
            .as_ref()
            .expect("plan was built without a secondary stencil");
        pad_into(u, left, right, self.half, &mut self.padded);
        match self.fft.as_mut() {
            None => {
                convolve_direct(&self.primary, &self.padded, out_primary);
                convolve_direct(secondary, &self.padded, out_secondary);
            }
            Some(state) => {
                Self::transform(state, &self.padded);
                let offset = 2 * self.half;
                for i in 0..self.n {
                    let z = state.buffer[i + offset];
                    out_primary[i] = z.re;
                    out_secondary[i] = z.im;
                }
            }
        }
    }

    fn transform(state: &mut FftState, padded: &[f64]) {
        debug_assert!(padded.len() <= state.size);
        for (b, p) in state.buffer.iter_mut().zip(padded) {
            *b = Complex64::new(*p, 0.0);
        }
        for b in state.buffer[padded.len()..].iter_mut() {
            *b = Complex64::new(0.0, 0.0);
        }
        state
            .forward
            .process_with_scratch(&mut state.buffer, &mut state.scratch);
        for (b, s) in state.buffer.iter_mut().zip(&state.spectrum) {
            *b *= *s;
        }
        state
            .inverse
            .process_with_scratch(&mut state.buffer, &mut state.scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stencil(half: usize) -> Vec<f64> {
        (0..=2 * half)
            .map(|j| {
                let x = j as f64 - half as f64;
                (-x * x / (half as f64)).exp()
            })
            .collect()
    }

    #[test]
    fn direct_and_fft_agree() {
        let n = 300;
        let stencil = sample_stencil(40);
        let anti: Vec<f64> = stencil
            .iter()
            .enumerate()
            .map(|(j, w)| w * (j as f64 - 40.0))
            .collect();
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin() + 0.3).collect();
        let mut direct = ConvolutionPlan::new(
            n,
            stencil.clone(),
            Some(anti.clone()),
            ConvolutionMethod::Direct,
        );
        let mut fft = ConvolutionPlan::new(n, stencil, Some(anti), ConvolutionMethod::Fft);
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        let (mut c, mut d) = (vec![0.0; n], vec![0.0; n]);
        direct.apply_both(&u, 1.0, -0.5, &mut a, &mut b);
        fft.apply_both(&u, 1.0, -0.5, &mut c, &mut d);
        for i in 0..n {
            assert!((a[i] - c[i]).abs() < 1e-12, "{} vs {}", a[i], c[i]);
            assert!((b[i] - d[i]).abs() < 1e-11, "{} vs {}", b[i], d[i]);
        }
    }

    #[test]
    fn auto_switches_on_stencil_length() {
        let small = ConvolutionPlan::new(64, vec![1.0; 511], None, ConvolutionMethod::Auto);
        assert_eq!(small.method(), ConvolutionMethod::Direct);
        let large = ConvolutionPlan::new(64, vec![1.0; 513], None, ConvolutionMethod::Auto);
        assert_eq!(large.method(), ConvolutionMethod::Fft);
        let long = ConvolutionPlan::new(3201, vec![1.0; 287], None, ConvolutionMethod::Auto);
        assert_eq!(long.method(), ConvolutionMethod::Fft);
        let short = ConvolutionPlan::new(100, vec![1.0; 41], None, ConvolutionMethod::Auto);
        assert_eq!(short.method(), ConvolutionMethod::Direct);
    }

    #[test]
    fn sequential_matches_parallel_bitwise() {
        let stencil = sample_stencil(20);
        let u: Vec<f64> = (0..9000).map(|i| (i as f64 * 0.01).cos()).collect();
        let mut padded = Vec::new();
        pad_into(&u, 0.5, 0.25, 20, &mut padded);
        let mut a = vec![0.0; u.len()];
        let mut b = vec![0.0; u.len()];
        convolve_direct(&stencil, &padded, &mut a);
        convolve_direct_sequential(&stencil, &padded, &mut b);
        assert_eq!(a, b);
    }
}

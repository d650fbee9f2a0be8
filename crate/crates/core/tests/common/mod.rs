#![allow(dead_code)]

use std::sync::OnceLock;

use frontlab_core::evolve::{build_approx_front, ApproxFrontRun, FrontRunOptions};
use frontlab_core::kernels::{build_kernel, Kernel, KernelFamily};
use frontlab_core::reactions::{make_default_ignition, IgnitionNonlinearity};
use frontlab_core::waves::{solve_traveling_wave, TravelingWave, WaveSpec};

pub const H: f64 = 0.05;

pub fn kernel() -> &'static Kernel {
    static K: OnceLock<Kernel> = OnceLock::new();
    K.get_or_init(|| build_kernel(KernelFamily::Gaussian { sigma: 1.0 }, H, 1e-12).unwrap())
}

pub fn ignition() -> IgnitionNonlinearity {
    make_default_ignition()
}

fn solve(f: &IgnitionNonlinearity) -> TravelingWave {
    let spec = WaveSpec {
        tol: 1e-10,
        ..WaveSpec::default()
    };
    solve_traveling_wave(kernel(), f, &spec).unwrap()
}

pub fn wave_min() -> &'static TravelingWave {
    static W: OnceLock<TravelingWave> = OnceLock::new();
    W.get_or_init(|| solve(&ignition().f_min()))
}

pub fn wave_max() -> &'static TravelingWave {
    static W: OnceLock<TravelingWave> = OnceLock::new();
    W.get_or_init(|| solve(&ignition().f_max()))
}

/// Heterogeneous front seeded at `s = -30`, run to `t = 60`.
pub fn front_run() -> &'static ApproxFrontRun {
    static R: OnceLock<ApproxFrontRun> = OnceLock::new();
    R.get_or_init(|| {
        build_approx_front(
            kernel(),
            &ignition(),
            wave_min(),
            &FrontRunOptions::default(),
        )
        .unwrap()
    })
}

/// Slope of the least-squares line through `(t, v)`.
pub fn trend(pts: &[(f64, f64)]) -> f64 {
    frontlab_core::fronts::least_squares(pts).0
}

use std::path::Path;

use frontlab_core::evolve::{
    build_approx_front, seed_from_wave, ApproxFrontRun, EvolveOptions, FrontRunOptions,
    WindowPolicy,
};
use frontlab_core::field::{FieldState, Grid};
use frontlab_core::fronts::*;
use frontlab_core::kernels::{build_kernel, positive_decay_rate, Kernel};
use frontlab_core::par::map_jobs;
use frontlab_core::reactions::{validate_hypotheses, IgnitionNonlinearity, SamplingSpec};
use frontlab_core::stability::*;
use frontlab_core::waves::{solve_traveling_wave, TravelingWave, WaveSpec};

use crate::config::{override_path, ExperimentConfig, Profile};
use crate::error::CliError;
use crate::output::{sha256_hex, write_outcome, Manifest, Outcome, Plot, Table};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub kernel: Kernel,
    pub f: IgnitionNonlinearity,
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, seed: u64, quiet: bool) -> Result<Self, CliError> {
        let f = cfg.nonlinearity()?;
        let kernel = build_kernel(cfg.kernel.family, cfg.spacing(), cfg.kernel.tail_tol)
            .map_err(CliError::config)?;
        Ok(Context {
            cfg,
            kernel,
            f,
            seed,
            quiet,
        })
    }

    fn say(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    fn waves(&self) -> Result<(TravelingWave, TravelingWave), CliError> {
        let spec = WaveSpec {
            half_width: self.cfg.wave.half_width,
            tol: self.cfg.wave.tol,
            dt: self.cfg.time.dt,
            method: self.cfg.method,
            ..WaveSpec::default()
        };
        self.say("solving traveling waves for f_min and f_max");
        let lo = solve_traveling_wave(&self.kernel, &self.f.f_min(), &spec)?;
        let hi = solve_traveling_wave(&self.kernel, &self.f.f_max(), &spec)?;
        Ok((lo, hi))
    }

    fn front_run(&self, wave: &TravelingWave) -> Result<ApproxFrontRun, CliError> {
        let t = &self.cfg.time;
        let opts = FrontRunOptions {
            s: t.s,
            t_end: t.t_end,
            dt: t.dt,
            cadence: t.cadence,
            half_width: self.cfg.half_width(),
            method: self.cfg.method,
            ..FrontRunOptions::default()
        };
        self.say(&format!(
            "evolving the front from s = {} to t = {}",
            t.s, t.t_end
        ));
        Ok(build_approx_front(&self.kernel, &self.f, wave, &opts)?)
    }

    fn run_options(&self, duration: Option<f64>, sample_every: f64) -> RunOptions {
        RunOptions {
            duration,
            dt: self.cfg.time.dt,
            sample_every,
            method: self.cfg.method,
        }
    }
}

pub fn run(name: &str, ctx: &Context, out_dir: &Path) -> Result<Outcome, CliError> {
    match name {
        "validate" => validate(ctx),
        "wave" => wave(ctx),
        "front" => front(ctx),
        "steepness" => steepness_experiment(ctx),
        "tails" => tails(ctx),
        "stability" => stability(ctx),
        "asymptotic" => asymptotic(ctx),
        "comparison" => comparison(ctx),
        "sweep" => sweep(ctx, out_dir),
        other => Err(CliError::Usage(format!("unknown experiment {other:?}"))),
    }
}

fn validate(ctx: &Context) -> Result<Outcome, CliError> {
    let spec = SamplingSpec {
        n_t: ctx.cfg.validate.n_t,
        n_u: ctx.cfg.validate.n_u,
        ..SamplingSpec::default()
    };
    let rep = validate_hypotheses(&ctx.kernel, &ctx.f, &spec);
    let mut out = Outcome::default();
    let mut hyp = Table::new("hypotheses.csv", &["hypothesis", "pass"]);
    for (i, ok) in [rep.h1, rep.h2, rep.h3, rep.h4].into_iter().enumerate() {
        hyp.push(vec![(i + 1) as f64, f64::from(u8::from(ok))]);
        out.flag(&format!("h{}", i + 1), ok);
    }
    let mut vio = Table::new("violations.csv", &["hypothesis", "t", "at", "value"]);
    for v in &rep.violations {
        let index = v
            .hypothesis
            .trim_start_matches('H')
            .parse::<f64>()
            .unwrap_or(f64::NAN);
        vio.push(vec![index, v.t, v.at, v.value]);
    }
    out.tables = vec![hyp, vio];
    out.put("c_fu", rep.c_fu);
    out.put("sup_ft", rep.sup_ft);
    out.put("sup_fuu", rep.sup_fuu);
    out.put("beta_tilde_declared", rep.beta_tilde_declared);
    out.put("beta_tilde_realized", rep.beta_tilde_realized);
    out.put("kernel_mass", rep.kernel_mass);
    out.put("kernel_derivative_l1", rep.kernel_derivative_l1);
    out.flag("resolution_consistent", rep.resolution_consistent);
    out.put("violations", rep.violations.len() as f64);
    out.flag("all_pass", rep.all_pass());
    if let Some(v) = rep.violations.first() {
        out.require(false, || {
            format!(
                "{} violated at t = {}, point {}: {} (value {:e})",
                v.hypothesis, v.t, v.at, v.detail, v.value
            )
        });
    }
    out.require(rep.all_pass(), || "hypothesis report does not pass".into());
    Ok(out)
}

fn wave(ctx: &Context) -> Result<Outcome, CliError> {
    let (lo, hi) = ctx.waves()?;
    let tol = ctx.cfg.wave.tol;
    let mut out = Outcome::default();
    let mut t = Table::new(
        "wave.csv",
        &["x", "phi_min", "dphi_min", "phi_max", "dphi_max"],
    );
    for i in 0..lo.grid.n {
        t.push(vec![
            lo.grid.x(i),
            lo.phi[i],
            lo.dphi[i],
            hi.phi[i],
            hi.dphi[i],
        ]);
    }
    out.tables.push(t);
    out.put("c_star", lo.c);
    out.put("c_star_max", hi.c);
    out.put("residual", lo.residual);
    out.put("residual_max", hi.residual);
    out.put("tol", tol);
    out.put("evolution_speed", lo.evolution_speed);
    out.put("evolution_speed_max", hi.evolution_speed);
    out.flag("window_end_ok", lo.window_end_ok && hi.window_end_ok);
    out.put(
        "polish_iterations",
        (lo.polish_iterations + hi.polish_iterations) as f64,
    );
    out.require(lo.c > 0.0, || {
        format!("c*(f_min) = {} is not positive", lo.c)
    });
    out.require(lo.residual <= tol && hi.residual <= tol, || {
        format!(
            "wave residual {:e} / {:e} exceeds tol {tol:e}",
            lo.residual, hi.residual
        )
    });
    out.require(hi.c > lo.c, || {
        format!("c*(f_max) = {} not above c*(f_min) = {}", hi.c, lo.c)
    });
    let profile = |w: &TravelingWave| (0..w.grid.n).map(|i| (w.grid.x(i), w.phi[i])).collect();
    out.plots.push(
        Plot::new("wave.svg", "Traveling wave profiles", "x", "phi")
            .with("f_min", profile(&lo))
            .with("f_max", profile(&hi)),
    );
    Ok(out)
}

fn track_plots(run: &ApproxFrontRun, widths: &[(f64, f64)]) -> Vec<Plot> {
    vec![
        Plot::new("interface.svg", "Interface location X(t)", "t", "X")
            .with("X_theta", run.track.clone()),
        Plot::new("width.svg", "Interface width", "t", "width").with("width", widths.to_vec()),
    ]
}

fn widths(run: &ApproxFrontRun, eps: f64) -> Result<Vec<(f64, f64)>, CliError> {
    run.snapshots
        .iter()
        .map(|s| Ok((s.t, interface_width(s, eps)?)))
        .collect()
}

fn front(ctx: &Context) -> Result<Outcome, CliError> {
    let (lo, hi) = ctx.waves()?;
    let run = ctx.front_run(&lo)?;
    let fc = &ctx.cfg.front;
    let mut levels = fc.levels.clone();
    if !levels.iter().any(|l| (l - ctx.f.theta).abs() < 1e-12) {
        levels.push(ctx.f.theta);
    }
    let track = FrontTrack::from_snapshots(&run.snapshots, &levels)?;
    let theta_col = levels
        .iter()
        .position(|l| (l - ctx.f.theta).abs() < 1e-12)
        .unwrap();
    let w = widths(&run, fc.width_eps)?;
    let mut header = vec!["t".to_string()];
    header.extend(levels.iter().map(|l| format!("X_{l}")));
    header.extend(["speed".to_string(), "width".to_string()]);
    let mut table = Table {
        file: "front.csv".into(),
        header,
        rows: Vec::new(),
    };
    for (k, t) in track.times.iter().enumerate() {
        let mut row = vec![*t];
        row.extend(&track.positions[k]);
        row.extend([track.speeds[k][theta_col], w[k].1]);
        table.push(row);
    }
    let mut out = Outcome::default();
    out.tables.push(table);

    let from = run.s + fc.transient - 1e-9;
    let (lo_env, hi_env) = (0.98 * lo.c, 1.02 * hi.c);
    let mut vmin = (f64::INFINITY, 0.0);
    let mut vmax = (f64::NEG_INFINITY, 0.0);
    for (k, t) in track.times.iter().enumerate().filter(|(_, t)| **t >= from) {
        let v = track.speeds[k][theta_col];
        if v < vmin.0 {
            vmin = (v, *t);
        }
        if v > vmax.0 {
            vmax = (v, *t);
        }
    }
    let mut settled_w: Vec<f64> = w.iter().filter(|p| p.0 >= from).map(|p| p.1).collect();
    settled_w.sort_by(f64::total_cmp);
    let (median, wmax) = (
        settled_w[settled_w.len() / 2],
        settled_w[settled_w.len() - 1],
    );
    let rise = run
        .snapshots
        .iter()
        .map(|s| (s.max_rise(), s.t))
        .max_by(|a, b| a.0 .1.total_cmp(&b.0 .1))
        .unwrap();

    out.put("c_star_min", lo.c);
    out.put("c_star_max", hi.c);
    out.put("speed_min", vmin.0);
    out.put("speed_max", vmax.0);
    out.put("width_median", median);
    out.put("width_max", wmax);
    out.put("max_rise", rise.0 .1);
    out.put("normalization_error", run.normalization_error);
    out.put("y_s", run.y_s);
    out.put("relocations", run.relocations.len() as f64);
    out.put("shift_iterations", run.shift_iterations as f64);
    out.require(vmin.0 >= lo_env, || {
        format!(
            "speed {} < 0.98 c*(f_min) = {lo_env} at t = {}",
            vmin.0, vmin.1
        )
    });
    out.require(vmax.0 <= hi_env, || {
        format!(
            "speed {} > 1.02 c*(f_max) = {hi_env} at t = {}",
            vmax.0, vmax.1
        )
    });
    out.require(wmax <= 2.0 * median, || {
        format!("max width {wmax} > 2 x median {median}")
    });
    out.require(rise.0 .1 <= 1e-10, || {
        format!(
            "profile rises by {:e} at node {} at t = {}",
            rise.0 .1, rise.0 .0, rise.1
        )
    });
    out.plots = track_plots(&run, &w);
    Ok(out)
}

fn trend_drift(pts: &[(f64, f64)]) -> (f64, f64) {
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let len = pts[pts.len() - 1].0 - pts[0].0;
    (mean, least_squares(pts).0.abs() * len)
}

fn steepness_experiment(ctx: &Context) -> Result<Outcome, CliError> {
    let (lo, _) = ctx.waves()?;
    let run = ctx.front_run(&lo)?;
    let sc = &ctx.cfg.steepness;
    let c_fu = ctx.f.c_fu();
    let mut out = Outcome::default();
    let mut table = Table::new(
        "steepness.csv",
        &["t", "X", "steepness", "sup_ux", "lip_ux"],
    );
    let mut top = (f64::NEG_INFINITY, 0.0);
    for s in &run.snapshots {
        let w = s.w.as_ref().expect("front snapshots carry u_x");
        let x = locate_level(s, ctx.f.theta)?;
        let st = steepness(s, w, x, sc.m)?;
        if st > top.0 {
            top = (st, s.t);
        }
        table.push(vec![
            s.t,
            x,
            st,
            lipschitz_estimate(&s.u, s.grid.h)?,
            lipschitz_estimate(w, s.grid.h)?,
        ]);
    }
    let from = run.s + ctx.cfg.front.transient - 1e-9;
    let settled: Vec<&Vec<f64>> = table.rows.iter().filter(|r| r[0] >= from).collect();
    for (col, name) in [(3, "sup_ux"), (4, "lip_ux")] {
        let pts: Vec<(f64, f64)> = settled.iter().map(|r| (r[0], r[col])).collect();
        let (mean, drift) = trend_drift(&pts);
        out.put(&format!("{name}_mean"), mean);
        out.put(&format!("{name}_drift"), drift);
        out.require(drift <= 0.05 * mean, || {
            format!("{name} trend drift {drift:e} exceeds 5% of its mean {mean:e}")
        });
    }
    out.tables.push(table);

    let mut ineq = Table::new("inequality.csv", &["t0", "dt", "x", "lhs", "rhs", "margin"]);
    let mut worst: Option<SteepnessCheck> = None;
    for (i, before) in run.snapshots.iter().enumerate() {
        for &dt in &sc.dts {
            let Some(after) = run.snapshots[i..]
                .iter()
                .find(|s| (s.t - before.t - dt).abs() < 1e-9)
            else {
                continue;
            };
            let z = locate_level(before, ctx.f.theta)?;
            for c in check_steepness_inequality(
                &ctx.kernel,
                c_fu,
                before,
                after,
                z,
                sc.h_int,
                &sc.offsets,
            )? {
                ineq.push(vec![c.t0, c.dt, c.x, c.lhs, c.rhs, c.margin]);
                if worst.as_ref().is_none_or(|w| c.margin < w.margin) {
                    worst = Some(c);
                }
            }
        }
    }
    out.tables.push(ineq);
    let alpha_m = -top.0;
    out.put("alpha_m", alpha_m);
    out.require(alpha_m > 0.0, || {
        format!("steepness {} >= 0 at t = {}", top.0, top.1)
    });
    if let Some(w) = worst {
        out.put("inequality_min_margin", w.margin);
        out.require(w.margin >= -1e-8, || {
            format!(
                "w(t0 + dt, x) <= C int w(t0) fails by {:e} at t0 = {}, dt = {}, x = {}",
                -w.margin, w.t0, w.dt, w.x
            )
        });
    }
    if let Some(&dt) = sc.dts.first() {
        let k = steepness_bound_constant(
            &ctx.kernel,
            c_fu,
            dt,
            sc.offsets.iter().fold(0.0, |a: f64, b| a.max(b.abs())),
            sc.h_int,
        )?;
        out.put("bound_constant", k.c);
        out.put("bound_order", k.n as f64);
    }
    out.plots = track_plots(&run, &widths(&run, ctx.cfg.front.width_eps)?);
    out.plots.push(
        Plot::new(
            "steepness.svg",
            "Steepness near the interface",
            "t",
            "max u_x on [X-M, X+M]",
        )
        .with(
            "steepness",
            out.tables[0].rows.iter().map(|r| (r[0], r[2])).collect(),
        ),
    );
    Ok(out)
}

fn offsets_from(s: &FieldState, theta: f64) -> Result<Vec<f64>, CliError> {
    let x0 = locate_level(s, theta)?;
    Ok((0..s.len()).map(|i| s.grid.x(i) - x0).collect())
}

fn derivative_tail(ctx: &Context, run: &ApproxFrontRun, side: Side) -> Result<TailFit, CliError> {
    let last = run.snapshots.last().expect("front run has snapshots");
    let d = ctx.cfg.tails.offset;
    let window = match side {
        Side::Right => (d, f64::INFINITY),
        Side::Left => (f64::NEG_INFINITY, -d),
    };
    Ok(fit_exponential_tail(
        &offsets_from(last, ctx.f.theta)?,
        last.w.as_ref().unwrap(),
        side,
        window,
    )?)
}

fn tails(ctx: &Context) -> Result<Outcome, CliError> {
    let (lo, _) = ctx.waves()?;
    let run = ctx.front_run(&lo)?;
    let c_min = measured_c_min(&run, ctx.f.theta, &parameter_options(ctx))?;
    let guaranteed = positive_decay_rate(&ctx.kernel, c_min)?;
    let (right, left) = (
        derivative_tail(ctx, &run, Side::Right)?,
        derivative_tail(ctx, &run, Side::Left)?,
    );
    let last = run.snapshots.last().unwrap();
    let offsets = offsets_from(last, ctx.f.theta)?;
    let w = last.w.as_ref().unwrap();
    let mut table = Table::new("tails.csv", &["offset", "u", "w"]);
    for i in 0..last.len() {
        table.push(vec![offsets[i], last.u[i], w[i]]);
    }
    let mut out = Outcome::default();
    out.put("right_rate", right.rate);
    out.put("right_r2", right.r2);
    out.put("left_rate", left.rate);
    out.put("left_r2", left.r2);
    out.put("c_min", c_min);
    out.put("positive_decay_rate", guaranteed);
    out.require(right.rate >= 0.9 * guaranteed, || {
        format!(
            "right tail rate {} < 0.9 x positive decay rate {guaranteed}",
            right.rate
        )
    });
    out.require(left.rate > 0.0, || {
        format!("left tail rate {} is not positive", left.rate)
    });
    out.plots = track_plots(&run, &widths(&run, ctx.cfg.front.width_eps)?);
    out.plots.push(
        Plot::new("tails.svg", "Derivative tails", "x - X(t)", "|u_x|")
            .log()
            .with(
                "|w|",
                offsets.iter().zip(w).map(|(x, v)| (*x, v.abs())).collect(),
            ),
    );
    out.tables.push(table);
    Ok(out)
}

fn parameter_options(ctx: &Context) -> ParameterOptions {
    ParameterOptions {
        transient: ctx.cfg.front.transient,
        ..ParameterOptions::default()
    }
}

struct Setup {
    run: ApproxFrontRun,
    params: StabilityParameters,
    trials: Vec<AlphaTrial>,
}

fn stability_setup(ctx: &Context) -> Result<Setup, CliError> {
    let (lo, _) = ctx.waves()?;
    let run = ctx.front_run(&lo)?;
    let rate = derivative_tail(ctx, &run, Side::Right)?.rate;
    let ladder = ctx
        .cfg
        .stability
        .alphas
        .clone()
        .unwrap_or_else(|| alpha_ladder(10));
    let (params, trials) = select_alpha_from(
        &ladder,
        &run,
        &ctx.kernel,
        &ctx.f,
        rate,
        &parameter_options(ctx),
    )?;
    ctx.say(&format!(
        "alpha {} M1 {:.3} M2 {:.3} A {:.4e} eps0 {:.4e} omega {:.4e}",
        params.alpha, params.m1, params.m2, params.a, params.eps0, params.omega
    ));
    Ok(Setup {
        run,
        params,
        trials,
    })
}

fn put_params(out: &mut Outcome, p: &StabilityParameters, trials: &[AlphaTrial]) {
    for (k, v) in [
        ("alpha", p.alpha),
        ("m1", p.m1),
        ("m2", p.m2),
        ("c_steep", p.c_steep),
        ("c_min", p.c_min),
        ("a", p.a),
        ("eps0", p.eps0),
        ("omega", p.omega),
    ] {
        out.put(k, v);
    }
    let mut t = Table::new("alpha_trials.csv", &["alpha", "admissible"]);
    for tr in trials {
        t.push(vec![tr.alpha, f64::from(u8::from(tr.admissible))]);
    }
    out.tables.push(t);
}

fn put_report(out: &mut Outcome, rep: &StabilityReport) {
    out.raw_csv.push(("stability.csv".into(), rep.to_csv()));
    out.put("t0", rep.t0);
    out.put("violations", rep.violations as f64);
    if let Some(m) = rep.worst_margin {
        out.put("worst_margin", m);
    }
    if let Some(d) = rep.distance_at_three_over_omega {
        out.put("d_at_3_over_omega", d);
    }
    if let Some(fit) = rep.fit {
        out.put("decay_rate", fit.r);
        out.put("decay_constant", fit.c);
        out.put("decay_r2", fit.r2);
        out.put("fit_points", fit.points as f64);
    }
    out.put("zeta_star", rep.zeta_star);
    out.put("zeta_drift", rep.zeta_drift);
    out.plots.push(
        Plot::new("distance.svg", "Distance to the shifted front", "t", "d(t)")
            .log()
            .with(
                "d",
                rep.rows.iter().map(|r| (r.t, r.sup_distance)).collect(),
            ),
    );
}

fn stability(ctx: &Context) -> Result<Outcome, CliError> {
    let Setup {
        run,
        params,
        trials,
    } = stability_setup(ctx)?;
    let sc = &ctx.cfg.stability;
    let eps = sc.epsilon_fraction * params.eps0;
    let reference = run.snapshots.last().unwrap();
    let rep = run_stability_experiment(
        reference,
        &ctx.kernel,
        &ctx.f,
        &params,
        eps,
        sc.shape,
        &ctx.run_options(sc.duration, sc.sample_every),
    )?;
    let mut out = Outcome::default();
    put_params(&mut out, &params, &trials);
    out.put("epsilon", eps);
    put_report(&mut out, &rep);
    out.require(rep.violations == 0, || {
        let worst = rep
            .rows
            .iter()
            .filter_map(|r| r.violation_margin.map(|m| (m, r.t)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::NAN, f64::NAN));
        format!(
            "sandwich u^- <= u <= u^+ violated {} times; worst margin {:e} at t = {}",
            rep.violations, worst.0, worst.1
        )
    });
    if let Some(d) = rep.distance_at_three_over_omega {
        out.require(d <= 0.06 * eps, || {
            format!("d(3/omega) = {d:e} > 0.06 eps = {:e}", 0.06 * eps)
        });
    }
    let mut plots = track_plots(&run, &widths(&run, ctx.cfg.front.width_eps)?);
    plots.append(&mut out.plots);
    out.plots = plots;
    Ok(out)
}

fn asymptotic(ctx: &Context) -> Result<Outcome, CliError> {
    let Setup {
        run,
        params,
        trials,
    } = stability_setup(ctx)?;
    let ac = &ctx.cfg.asymptotic;
    let opts = AsymptoticOptions {
        run: ctx.run_options(None, ac.sample_every),
        duration: ac.duration,
        beta0: ac.beta0,
        fit_band: ac.fit_band,
    };
    let reference = run.snapshots.last().unwrap();
    let rep =
        run_asymptotic_experiment(reference, &ctx.kernel, &ctx.f, &params, ac.initial, &opts)?;
    let mut out = Outcome::default();
    put_params(&mut out, &params, &trials);
    put_report(&mut out, &rep);
    match rep.fit {
        Some(fit) => {
            out.require(fit.r > 0.0, || {
                format!("decay rate r = {} is not positive", fit.r)
            });
            out.require(fit.r2 >= ac.min_r2, || {
                format!(
                    "log-linear fit R2 = {} < {} on t in [{}, {}]",
                    fit.r2, ac.min_r2, fit.window.0, fit.window.1
                )
            });
        }
        None => out.require(false, || {
            format!(
                "d(t) never spends three samples in the band [{:e}, {:e}]",
                ac.fit_band.0, ac.fit_band.1
            )
        }),
    }
    out.require(rep.zeta_drift <= 1e-2, || {
        format!("zeta* drifts by {:e} > 1e-2", rep.zeta_drift)
    });
    let mut plots = track_plots(&run, &widths(&run, ctx.cfg.front.width_eps)?);
    plots.append(&mut out.plots);
    out.plots = plots;
    Ok(out)
}

fn profile_state(grid: &Grid, p: Profile) -> Result<FieldState, CliError> {
    let (left, right, g): (f64, f64, Box<dyn Fn(f64) -> f64>) = match p {
        Profile::Step { at, high, low } => (
            high,
            low,
            Box::new(move |x| if x < at { high } else { low }),
        ),
        Profile::Tanh { at, width } => (
            1.0,
            0.0,
            Box::new(move |x| 0.5 * (1.0 - ((x - at) / width).tanh())),
        ),
        Profile::Constant { value } => (value, value, Box::new(move |_| value)),
    };
    let u = grid.nodes().into_iter().map(g).collect();
    Ok(FieldState::new(0.0, *grid, u, left, right)?)
}

fn comparison(ctx: &Context) -> Result<Outcome, CliError> {
    let cc = &ctx.cfg.comparison;
    let mut opts = EvolveOptions {
        t_end: cc.duration,
        dt: ctx.cfg.time.dt,
        cadence: ctx.cfg.time.cadence,
        window: WindowPolicy::MiddleThird { level: ctx.f.theta },
        method: ctx.cfg.method,
    };
    let reports = match (cc.lower, cc.upper) {
        (Some(lower), Some(upper)) => {
            let g = &ctx.cfg.grid;
            let grid = Grid::new(g.x_min, g.x_max, g.n)?;
            opts.window = WindowPolicy::Fixed;
            let (u0, v0) = (profile_state(&grid, lower)?, profile_state(&grid, upper)?);
            vec![comparison_test(&u0, &v0, &ctx.kernel, &ctx.f, &opts)?]
        }
        (None, None) => {
            let (lo, _) = ctx.waves()?;
            let front = seed_from_wave(&lo, 0.0, 0.0, ctx.cfg.half_width())?;
            let front = FieldState { w: None, ..front };
            ctx.say(&format!("running {} random ordered pairs", cc.pairs));
            comparison_sweep(&front, &ctx.kernel, &ctx.f, cc.pairs, ctx.seed, &opts)?
        }
        _ => {
            return Err(CliError::Config(
                "comparison needs both lower and upper, or neither".into(),
            ))
        }
    };
    let mut out = Outcome::default();
    let mut t = Table::new("comparison.csv", &["pair", "min_margin", "steps", "passed"]);
    for (i, r) in reports.iter().enumerate() {
        t.push(vec![
            i as f64,
            r.min_margin,
            r.steps as f64,
            f64::from(u8::from(r.passed)),
        ]);
    }
    let (worst_i, worst) = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.min_margin.total_cmp(&b.1.min_margin))
        .expect("at least one pair");
    out.put("pairs", reports.len() as f64);
    out.put("min_margin", worst.min_margin);
    out.put(
        "failures",
        reports.iter().filter(|r| !r.passed).count() as f64,
    );
    out.require(worst.passed, || {
        format!(
            "v - u >= -{ORDER_TOL:e} fails for pair {worst_i}: min margin {:e}",
            worst.min_margin
        )
    });
    out.plots.push(
        Plot::new(
            "comparison.svg",
            "Order margin per pair",
            "pair",
            "min (v - u)",
        )
        .with("margin", t.rows.iter().map(|r| (r[0], r[1])).collect()),
    );
    out.tables.push(t);
    Ok(out)
}

fn sweep(ctx: &Context, out_dir: &Path) -> Result<Outcome, CliError> {
    let sw = ctx
        .cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("sweep experiment needs a [sweep] table".into()))?;
    let mut base = ctx.cfg.raw.clone();
    for key in ["sweep", "out", "experiment"] {
        base.remove(key);
    }
    let mut numeric = Vec::new();
    let mut configs = Vec::new();
    for v in &sw.values {
        let x = v
            .as_float()
            .or_else(|| v.as_integer().map(|i| i as f64))
            .ok_or_else(|| CliError::Config(format!("sweep value {v} is not a number")))?;
        let mut tree = base.clone();
        override_path(&mut tree, &sw.parameter, v.clone())?;
        let text = toml::to_string(&tree).map_err(|e| CliError::Config(e.to_string()))?;
        configs.push((ExperimentConfig::from_toml(&text)?, text));
        numeric.push(x);
    }
    ctx.say(&format!(
        "sweeping {} over {} values",
        sw.parameter,
        configs.len()
    ));
    let jobs: Vec<(usize, &(ExperimentConfig, String))> = configs.iter().enumerate().collect();
    let results = map_jobs(
        &jobs,
        |(i, (cfg, text))| -> Result<(Outcome, Vec<_>), CliError> {
            let sub = Context::new(cfg.clone(), ctx.seed, true)?;
            let dir = out_dir.join(format!("run_{i:03}"));
            let start = std::time::Instant::now();
            let outcome = run(&sw.experiment, &sub, &dir)?;
            let files = write_outcome(&dir, &outcome, true)?;
            Manifest {
                experiment: sw.experiment.clone(),
                config_path: "inline sweep instance".into(),
                config_sha256: sha256_hex(text.as_bytes()),
                seed: ctx.seed,
                versions: crate::output::versions(),
                parallel: frontlab_core::par::is_parallel(),
                wall_time_s: start.elapsed().as_secs_f64(),
                exit_code: if outcome.failure.is_some() { 1 } else { 0 },
                files: files.clone(),
            }
            .write(&dir)?;
            Ok((outcome, files))
        },
    );
    let mut keys = std::collections::BTreeSet::new();
    let mut done = Vec::new();
    for r in results {
        let (o, files) = r?;
        keys.extend(o.summary.keys().cloned());
        done.push((o, files));
    }
    let mut header = vec![
        "index".to_string(),
        "value".to_string(),
        "passed".to_string(),
    ];
    header.extend(keys.iter().cloned());
    let mut table = Table {
        file: "sweep.csv".into(),
        header,
        rows: Vec::new(),
    };
    let mut out = Outcome::default();
    let mut failures = 0;
    for (i, (o, files)) in done.iter().enumerate() {
        let passed = o.failure.is_none();
        failures += usize::from(!passed);
        let mut row = vec![i as f64, numeric[i], f64::from(u8::from(passed))];
        row.extend(
            keys.iter()
                .map(|k| o.summary.get(k).copied().unwrap_or(f64::NAN)),
        );
        table.push(row);
        for f in files {
            let mut f = f.clone();
            f.path = format!("run_{i:03}/{}", f.path);
            out.nested.push(f);
        }
        out.nested.push(crate::output::FileEntry {
            path: format!("run_{i:03}/manifest.json"),
            sha256: sha256_hex(&std::fs::read(
                out_dir.join(format!("run_{i:03}/manifest.json")),
            )?),
            bytes: std::fs::metadata(out_dir.join(format!("run_{i:03}/manifest.json")))?.len(),
        });
        if let Some(msg) = &o.failure {
            out.require(false, || {
                format!("{} = {}: {msg}", sw.parameter, numeric[i])
            });
        }
    }
    out.put("instances", done.len() as f64);
    out.put("failures", failures as f64);
    if let Some(first) = keys.iter().find(|k| {
        ["c_star", "speed_max", "decay_rate", "alpha_m", "min_margin"].contains(&k.as_str())
    }) {
        let col = table.header.iter().position(|h| h == first).unwrap();
        out.plots.push(
            Plot::new(
                "sweep.svg",
                &format!("{first} across the sweep"),
                &sw.parameter,
                first,
            )
            .with(first, table.rows.iter().map(|r| (r[1], r[col])).collect()),
        );
    }
    out.tables.push(table);
    Ok(out)
}

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use spinrelax_core::cluster::{
    sequence_response, spin_lock_decay, sz_autocorrelation, ClusterTemplate,
};
use spinrelax_core::ensemble::density_from_separation;
use spinrelax_core::hopping::{
    collapse_transform, effective_disorder, predict_tz, regime_warning, survival_integral,
    survival_renormalized, t1rho_rate_with, HoppingParams,
};
use spinrelax_core::inference::{
    density_result, extract_density_profile, fit_joint_with, fit_stretched_exp, synthesize_joint,
    DensityOptions, FitResult, JointData, JointParams, LmOptions, PowerSpec,
};
use spinrelax_core::noise::{depth_from_brms_with, NoiseModel};
use spinrelax_core::numerics::{first_crossing, linear_regression, linspace, logspace};
use spinrelax_core::sequence::{chi_numeric, closed_form_decay, DecayCurve, SequenceKind};
use spinrelax_core::{Constants, GAMMA_E, J0};

use crate::config::{
    CollapseConfig, DensityConfig, DepthConfig, FitConfig, FitMode, HoppingConfig, Observable,
    PredictConfig, SimulateConfig, SynthConfig, T1rhoConfig,
};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;

/// Warnings collected during a run plus a failure to report after the
/// outputs and manifest are written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub warnings: Vec<String>,
    pub failure: Option<CliError>,
}

/// Run `command` with a fully resolved configuration and write its manifest.
pub fn execute(command: &str, config: Value, out: &mut OutDir) -> CliResult<Outcome> {
    fn go<C: DeserializeOwned + Serialize>(
        command: &str,
        config: Value,
        out: &mut OutDir,
        f: fn(&C, &mut OutDir) -> CliResult<Outcome>,
    ) -> CliResult<Outcome> {
        let cfg: C = serde_json::from_value(config)
            .map_err(|e| CliError::config(format!("{command}: {e}")))?;
        let outcome = f(&cfg, out)?;
        out.write_manifest(command, &cfg, &outcome.warnings)?;
        Ok(outcome)
    }
    match command {
        "predict" => go(command, config, out, predict),
        "simulate" => go(command, config, out, simulate),
        "hopping" => go(command, config, out, hopping),
        "fit" => go(command, config, out, fit),
        "collapse" => go(command, config, out, collapse),
        "density" => go(command, config, out, density),
        "depth" => go(command, config, out, depth),
        "t1rho" => go(command, config, out, t1rho),
        "synth" => go(command, config, out, synth),
        other => Err(CliError::config(format!("unknown command {other:?}"))),
    }
}

fn require_points(points: usize) -> CliResult<()> {
    if points < 2 {
        return Err(CliError::config("points must be >= 2"));
    }
    Ok(())
}

fn require_positive(name: &str, v: f64) -> CliResult<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(CliError::config(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

fn load_curve(path: &Path) -> CliResult<DecayCurve> {
    if !path.is_file() {
        return Err(CliError::config(format!(
            "input {} does not exist",
            path.display()
        )));
    }
    DecayCurve::load_csv(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn short_name(kind: SequenceKind) -> &'static str {
    match kind {
        SequenceKind::MREV8InEcho => "mrev8",
        k => k.name(),
    }
}

pub fn predict(cfg: &PredictConfig, out: &mut OutDir) -> CliResult<Outcome> {
    if !SequenceKind::FILTERED.contains(&cfg.seq) {
        return Err(CliError::config(format!(
            "predict supports ramsey, echo, xy4, mrev8_in_echo; got {}",
            cfg.seq
        )));
    }
    require_points(cfg.points)?;
    require_positive("tmax", cfg.tmax)?;
    let model = NoiseModel::new(cfg.w, cfg.tau, cfg.omega_l)?;
    let times = linspace(0.0, cfg.tmax, cfg.points);
    let mut closed = Vec::with_capacity(times.len());
    let mut numeric = Vec::with_capacity(times.len());
    for &t in &times {
        let d = closed_form_decay(cfg.seq, t, &model, cfg.t2, cfg.detuning)?;
        closed.push(d.signal);
        if cfg.numeric {
            let chi = chi_numeric(cfg.seq, t, &model)?;
            numeric.push(d.dipolar * d.oscillation * (-chi).exp());
        }
    }
    let name = short_name(cfg.seq);
    let mut outcome = Outcome::default();
    if cfg.tmax > cfg.tau {
        outcome.warnings.push(format!(
            "closed form is valid for t <= tau = {}; tmax = {} extends beyond it",
            cfg.tau, cfg.tmax
        ));
    }
    let closed = DecayCurve::new(times.clone(), closed, None)?;
    out.write_curve(
        &format!("predict_{name}"),
        &closed,
        "time_us",
        &format!("{name} closed form"),
    )?;
    if cfg.numeric {
        let numeric = DecayCurve::new(times, numeric, None)?;
        out.write_curve(
            &format!("predict_{name}_numeric"),
            &numeric,
            "time_us",
            &format!("{name} filter-function integral"),
        )?;
    }
    Ok(outcome)
}

pub fn simulate(cfg: &SimulateConfig, out: &mut OutDir) -> CliResult<Outcome> {
    require_points(cfg.points)?;
    require_positive("tmax", cfg.tmax)?;
    require_positive("separation", cfg.separation)?;
    let noise = NoiseModel::new(cfg.w, cfg.tau, cfg.omega_l)?;
    let tpl = ClusterTemplate {
        n_spins: cfg.n_spins,
        density: density_from_separation(cfg.separation),
        min_radius: cfg.min_radius,
        noise,
        dt: cfg.dt,
        ising_only: cfg.ising_only,
        ..ClusterTemplate::default()
    };
    let times = linspace(0.0, cfg.tmax, cfg.points);
    let result = match cfg.observable {
        Observable::Sz => sz_autocorrelation(&tpl, &times, cfg.realizations, cfg.seed)?,
        Observable::SpinLock => {
            spin_lock_decay(&tpl, cfg.drive, &times, cfg.realizations, cfg.seed)?
        }
        obs => {
            let kind = obs.sequence().expect("sequence observable");
            sequence_response(&tpl, kind, cfg.detuning, &times, cfg.realizations, cfg.seed)?
        }
    };
    let name = format!("simulate_{}", cfg.observable.name());
    let curve = result.to_curve();
    out.write_curve(&name, &curve, "time_us", &name)?;
    let mut outcome = Outcome::default();
    match fit_stretched_exp(&curve, PowerSpec::Free) {
        Ok(fit) => {
            if !fit.converged {
                outcome.warnings.push(
                    "stretched-exponential fit of the simulated curve did not converge".into(),
                );
            }
            out.write_json(&format!("{name}_fit.json"), &fit)?;
        }
        Err(e) => outcome
            .warnings
            .push(format!("no stretched-exponential fit: {e}")),
    }
    Ok(outcome)
}

fn hopping_params(cfg: &HoppingConfig) -> CliResult<HoppingParams> {
    let p = HoppingParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        kappa: cfg.kappa,
        density: cfg.density,
        j0: J0,
        r0: cfg.r0,
    };
    p.validate()?;
    Ok(p)
}

/// Stretched-exponential timescale (power 2/3) of the renormalized survival.
fn survival_timescale(
    w_e: f64,
    tau_e: f64,
    p: &HoppingParams,
    cfg: &HoppingConfig,
) -> CliResult<f64> {
    let f = |t: f64| survival_renormalized(t, w_e, tau_e, p, cfg.form);
    let t1e = first_crossing(f, (-1.0f64).exp(), 0.0, 1e7, 20_000)
        .ok_or_else(|| CliError::numeric("survival does not reach 1/e"))?;
    let times = linspace(0.0, 3.0 * t1e, 60);
    let fit = fit_stretched_exp(&DecayCurve::from_fn(&times, f), PowerSpec::Fixed(2.0 / 3.0))?;
    fit.get("timescale")
        .ok_or_else(|| CliError::numeric("missing timescale"))
}

pub fn hopping(cfg: &HoppingConfig, out: &mut OutDir) -> CliResult<Outcome> {
    require_points(cfg.points)?;
    let p = hopping_params(cfg)?;
    let mut outcome = Outcome::default();
    outcome.warnings.extend(regime_warning(cfg.w, cfg.j));
    let tmax = cfg.tmax.unwrap_or(100.0 * cfg.tau);
    require_positive("tmax", tmax)?;
    let times = linspace(0.0, tmax, cfg.points);
    let closed = DecayCurve::from_fn(&times, |t| {
        survival_renormalized(t, cfg.w, cfg.tau, &p, cfg.form)
    });
    out.write_curve("hopping_closed", &closed, "time_us", "closed-form survival")?;
    let integral = times
        .iter()
        .map(|&t| survival_integral(t, cfg.w, cfg.tau, &p))
        .collect::<Result<Vec<_>, _>>()?;
    let integral = DecayCurve::new(times, integral, None)?;
    out.write_curve(
        "hopping_integral",
        &integral,
        "time_us",
        "integral survival",
    )?;

    let tz = predict_tz(cfg.w, cfg.tau, cfg.j1, cfg.j, cfg.kappa)?;
    let e = effective_disorder(cfg.w, cfg.tau, cfg.j1, tz)?;
    out.write_json(
        "hopping_tz.json",
        &json!({
            "t_z_us": tz,
            "w_e": e.w_e,
            "tau_e_us": e.tau_e,
            "tau_e_w_e": e.scale(),
            "mean_coupling": p.mean_coupling(),
        }),
    )?;
    println!(
        "T_z = {tz:.4} us (W_e = {:.4} rad/us, tau_e = {:.4} us)",
        e.w_e, e.tau_e
    );

    if cfg.scan_wtau {
        if cfg.scan_w.is_empty() || cfg.scan_tau.is_empty() {
            return Err(CliError::config("scan_w and scan_tau must be nonempty"));
        }
        let mut rows = Vec::new();
        for &w in &cfg.scan_w {
            for &tau in &cfg.scan_tau {
                let tz = predict_tz(w, tau, cfg.j1, cfg.j, cfg.kappa)?;
                let e = effective_disorder(w, tau, cfg.j1, tz)?;
                let t_fit = survival_timescale(e.w_e, e.tau_e, &p, cfg)?;
                rows.push(vec![w, tau, w * tau, e.w_e, e.tau_e, e.scale(), tz, t_fit]);
            }
        }
        out.write_table(
            "hopping_scan",
            &[
                "w",
                "tau",
                "w_tau",
                "w_e",
                "tau_e",
                "tau_e_w_e",
                "t_z_predicted",
                "t_z_fit",
            ],
            &rows,
        )?;
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let (intercept, slope, r2) = linear_regression(&col(2), &col(7));
        let (_, slope_e, r2_e) = linear_regression(&col(5), &col(7));
        out.write_json(
            "hopping_scan.json",
            &json!({
                "t_z_fit_vs_w_tau": {"slope": slope, "intercept": intercept, "r2": r2},
                "t_z_fit_vs_tau_e_w_e": {"slope": slope_e, "r2": r2_e},
            }),
        )?;
        out.write_plot(
            "hopping_scan",
            "fitted T_z vs W tau",
            "W tau",
            "T_z fit (us)",
            &[("t_z_fit", &col(2), &col(7))],
        )?;
        println!("scan: T_z fit = {slope:.4} W tau + {intercept:.4} (R^2 = {r2:.5})");
    }
    Ok(outcome)
}

pub const FIXTURE_RAMSEY: &str = include_str!("../fixtures/joint/ramsey.csv");
pub const FIXTURE_ECHO: &str = include_str!("../fixtures/joint/echo.csv");
pub const FIXTURE_XY4: &str = include_str!("../fixtures/joint/xy4.csv");
pub const FIXTURE_MREV8: &str = include_str!("../fixtures/joint/mrev8.csv");
pub const FIXTURE_TRUTH: &str = include_str!("../fixtures/joint/truth.json");

fn fixture_data() -> CliResult<JointData> {
    let parse = |s: &str| DecayCurve::read_csv(s.as_bytes()).map_err(CliError::from);
    Ok(JointData {
        ramsey: parse(FIXTURE_RAMSEY)?,
        echo: parse(FIXTURE_ECHO)?,
        xy4: parse(FIXTURE_XY4)?,
        mrev8: parse(FIXTURE_MREV8)?,
    })
}

fn report_fit(
    name: &str,
    fit: &FitResult,
    out: &mut OutDir,
    outcome: &mut Outcome,
) -> CliResult<()> {
    out.write_json(&format!("{name}.json"), fit)?;
    print!("{}", fit.summary());
    outcome.warnings.extend(fit.warnings.iter().cloned());
    if !fit.converged {
        outcome.failure = Some(CliError::numeric(format!("{name}: fit did not converge")));
    }
    Ok(())
}

pub fn fit(cfg: &FitConfig, out: &mut OutDir) -> CliResult<Outcome> {
    let mut outcome = Outcome::default();
    match cfg.mode {
        FitMode::Joint => {
            let data = if cfg.fixture {
                fixture_data()?
            } else {
                let get = |p: &Option<std::path::PathBuf>, name: &str| match p {
                    Some(p) => load_curve(p),
                    None => Err(CliError::config(format!(
                        "joint fit needs --{name} (or --fixture)"
                    ))),
                };
                JointData {
                    ramsey: get(&cfg.ramsey, "ramsey")?,
                    echo: get(&cfg.echo, "echo")?,
                    xy4: get(&cfg.xy4, "xy4")?,
                    mrev8: get(&cfg.mrev8, "mrev8")?,
                }
            };
            let init = JointParams {
                j1: cfg.j1,
                w: cfg.w,
                tau: cfg.tau,
                delta: cfg.delta,
                omega_l: cfg.omega_l,
            };
            let fit = fit_joint_with(&data, &init, LmOptions::default(), cfg.seed)?;
            report_fit("fit_joint", &fit, out, &mut outcome)?;
            if cfg.fixture {
                let truth: Value = serde_json::from_str(FIXTURE_TRUTH)
                    .map_err(|e| CliError::data(format!("fixture truth: {e}")))?;
                println!("fixture truth: {truth}");
            }
        }
        FitMode::Stretched => {
            let path = cfg
                .input
                .as_ref()
                .ok_or_else(|| CliError::config("stretched fit needs --input"))?;
            let curve = load_curve(path)?;
            let power = cfg.power.map_or(PowerSpec::Free, PowerSpec::Fixed);
            let fit = fit_stretched_exp(&curve, power)?;
            report_fit("fit_stretched", &fit, out, &mut outcome)?;
        }
    }
    Ok(outcome)
}

pub fn collapse(cfg: &CollapseConfig, out: &mut OutDir) -> CliResult<Outcome> {
    let n = cfg.inputs.len();
    if n == 0 {
        return Err(CliError::config("collapse needs at least one --input"));
    }
    let j1 = if cfg.j1.is_empty() {
        vec![0.0; n]
    } else {
        cfg.j1.clone()
    };
    if cfg.w.len() != n
        || cfg.tau.len() != n
        || j1.len() != n
        || !(cfg.tz.is_empty() || cfg.tz.len() == n)
    {
        return Err(CliError::config(format!(
            "collapse needs one w, tau (and optional j1, tz) per input; got {n} inputs"
        )));
    }
    let curves = cfg
        .inputs
        .iter()
        .map(|p| load_curve(p))
        .collect::<CliResult<Vec<_>>>()?;
    let mut disorder = Vec::with_capacity(n);
    let mut summary = Vec::with_capacity(n);
    for (i, &j1) in j1.iter().enumerate() {
        let tz = match cfg.tz.get(i) {
            Some(&tz) => tz,
            None => predict_tz(cfg.w[i], cfg.tau[i], j1, cfg.j, cfg.kappa)?,
        };
        let e = effective_disorder(cfg.w[i], cfg.tau[i], j1, tz)?;
        summary.push(json!({
            "input": cfg.inputs[i],
            "w": cfg.w[i],
            "tau": cfg.tau[i],
            "j1": j1,
            "t_z": tz,
            "w_e": e.w_e,
            "tau_e": e.tau_e,
            "tau_e_w_e": e.scale(),
        }));
        disorder.push(e);
    }
    let collapsed = collapse_transform(&curves, &disorder)?;
    for (i, c) in collapsed.iter().enumerate() {
        let mut buf = Vec::new();
        c.write_csv_with_time(&mut buf, "t_rescaled")?;
        out.write(&format!("collapse_{i}.csv"), &buf)?;
    }
    out.write_json("collapse.json", &summary)?;
    let names: Vec<String> = (0..n).map(|i| format!("curve {i}")).collect();
    let series: Vec<(&str, &[f64], &[f64])> = collapsed
        .iter()
        .zip(&names)
        .map(|(c, n)| (n.as_str(), c.times.as_slice(), c.values.as_slice()))
        .collect();
    out.write_plot(
        "collapse",
        "collapsed survival",
        "t / (tau_e W_e)",
        "signal",
        &series,
    )?;
    Ok(Outcome::default())
}

pub fn density(cfg: &DensityConfig, out: &mut OutDir) -> CliResult<Outcome> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::config("density needs --input (an XY-4 curve)"))?;
    let curve = load_curve(path)?;
    require_positive("sep_step", cfg.sep_step)?;
    if !(cfg.sep_max >= cfg.sep_min) {
        return Err(CliError::config("sep_max must be >= sep_min"));
    }
    let count = ((cfg.sep_max - cfg.sep_min) / cfg.sep_step + 1e-9).floor() as usize + 1;
    let separations: Vec<f64> = (0..count)
        .map(|i| cfg.sep_min + i as f64 * cfg.sep_step)
        .collect();
    let opts = DensityOptions {
        n_neighbors: cfg.neighbors,
        omega_l: cfg.omega_l,
        dt: cfg.dt,
        ..DensityOptions::default()
    };
    let profile = extract_density_profile(
        &curve,
        cfg.w,
        cfg.tau,
        &separations,
        cfg.realizations,
        cfg.seed,
        &opts,
    )?;
    let result = density_result(&profile, curve.len());
    let rows: Vec<Vec<f64>> = profile
        .separations
        .iter()
        .zip(&profile.chi2)
        .map(|(a, c)| vec![*a, *c])
        .collect();
    out.write_table("density_profile", &["separation_nm", "chi2"], &rows)?;
    out.write_plot(
        "density_profile",
        "chi^2 vs separation",
        "separation (nm)",
        "chi^2",
        &[("chi2", &profile.separations, &profile.chi2)],
    )?;
    let mut outcome = Outcome::default();
    report_fit("density", &result, out, &mut outcome)?;
    Ok(outcome)
}

pub fn depth(cfg: &DepthConfig, out: &mut OutDir) -> CliResult<Outcome> {
    let brms = match (cfg.brms, cfg.w) {
        (Some(b), _) => b,
        (None, Some(w)) => w / GAMMA_E,
        (None, None) => return Err(CliError::config("depth needs --brms or --w")),
    };
    let d = depth_from_brms_with(
        &Constants::default(),
        brms,
        cfg.layer,
        cfg.proton_density,
        cfg.component,
        cfg.spin_quantum,
        cfg.max_depth,
    )?;
    out.write_json(
        "depth.json",
        &json!({
            "depth_nm": d,
            "brms_gauss": brms,
            "layer": cfg.layer,
            "component": cfg.component,
            "proton_density": cfg.proton_density,
        }),
    )?;
    println!("depth = {d:.6} nm (B_rms = {brms:.6} G)");
    Ok(Outcome::default())
}

pub fn t1rho(cfg: &T1rhoConfig, out: &mut OutDir) -> CliResult<Outcome> {
    require_points(cfg.points)?;
    let model = NoiseModel::new(cfg.w, cfg.tau, cfg.omega_l)?;
    let grid = if cfg.log {
        require_positive("omega_min", cfg.omega_min)?;
        logspace(cfg.omega_min, cfg.omega_max, cfg.points)
    } else {
        linspace(cfg.omega_min, cfg.omega_max, cfg.points)
    };
    if cfg.omega_min < 0.0 || cfg.omega_max < cfg.omega_min {
        return Err(CliError::config("need 0 <= omega_min <= omega_max"));
    }
    let consts = Constants::default();
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .map(|&om| {
            let r = t1rho_rate_with(om, &model, cfg.prefactor, &consts);
            vec![om, r, 1.0 / r]
        })
        .collect();
    out.write_table(
        "t1rho",
        &["omega_rad_per_us", "rate_per_us", "t1rho_us"],
        &rows,
    )?;
    let rates: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    out.write_plot(
        "t1rho",
        "spin-lock rate",
        "Omega (rad/us)",
        "rate (1/us)",
        &[("rate", &grid, &rates)],
    )?;
    Ok(Outcome::default())
}

pub fn synth(cfg: &SynthConfig, out: &mut OutDir) -> CliResult<Outcome> {
    let truth = JointParams {
        j1: cfg.j1,
        w: cfg.w,
        tau: cfg.tau,
        delta: cfg.delta,
        omega_l: cfg.omega_l,
    };
    let data = synthesize_joint(&truth, cfg.noise, cfg.points, cfg.seed)?;
    for (curve, kind) in data.curves().iter().zip(JointData::KINDS) {
        let name = short_name(kind);
        out.write_curve(name, curve, "time_us", name)?;
    }
    out.write_json("truth.json", &truth)?;
    Ok(Outcome::default())
}

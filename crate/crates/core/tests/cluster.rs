use spinrelax_core::cluster::{
    sequence_response, spin_lock_decay, sz_autocorrelation, ClusterTemplate, CorrelationResult,
};
use spinrelax_core::ensemble::CouplingMatrix;
use spinrelax_core::hopping::t1rho_rate;
use spinrelax_core::inference::{fit_stretched_exp, PowerSpec};
use spinrelax_core::noise::NoiseModel;
use spinrelax_core::numerics::linspace;
use spinrelax_core::rng::derive_seed;
use spinrelax_core::sequence::{chi_numeric_with, ChiOptions, LarmorTreatment, SequenceKind};

fn single(noise: NoiseModel, dt: f64) -> ClusterTemplate {
    ClusterTemplate {
        dt: Some(dt),
        ..ClusterTemplate::with_couplings(CouplingMatrix::zeros(1), noise)
    }
}

fn lorentzian() -> ChiOptions {
    ChiOptions {
        larmor: LarmorTreatment::Lorentzian,
        ..ChiOptions::default()
    }
}

#[test]
fn single_spin_sequences_match_filter_function() {
    let noise = NoiseModel::new(2.0, 1.5, 6.0).unwrap();
    let tpl = single(noise, 0.004);
    let times = linspace(0.0, 2.0, 11);
    for kind in [
        SequenceKind::Echo,
        SequenceKind::XY4,
        SequenceKind::MREV8InEcho,
    ] {
        let sim = sequence_response(&tpl, kind, 0.0, &times, 3000, 7).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let expected = (-chi_numeric_with(kind, t, &noise, lorentzian()).unwrap()).exp();
            let band = 3.0 * sim.stderr[i] + 0.01;
            assert!(
                (sim.correlation[i] - expected).abs() <= band,
                "{kind} t = {t}: {} vs {expected} (stderr {})",
                sim.correlation[i],
                sim.stderr[i]
            );
        }
    }
}

#[test]
fn xy4_and_echo_share_a_timescale_without_noise() {
    let mut ratios = Vec::new();
    for seed in 0..3 {
        let tpl = ClusterTemplate {
            n_spins: 3,
            density: 1.0 / (3.0 * 3.0),
            ..ClusterTemplate::default()
        };
        let times = linspace(0.0, 12.0, 49);
        let fit = |kind| {
            let r = sequence_response(&tpl, kind, 0.0, &times, 200, seed).unwrap();
            fit_stretched_exp(&r.to_curve(), PowerSpec::Free)
                .unwrap()
                .get("timescale")
                .unwrap()
        };
        let (echo, xy4) = (fit(SequenceKind::Echo), fit(SequenceKind::XY4));
        ratios.push(xy4 / echo);
    }
    for r in &ratios {
        assert!((r - 1.0).abs() < 0.30, "{ratios:?}");
    }
}

// Batches give an honest error for the fitted rate.
fn spin_lock_rate(noise: NoiseModel, omega: f64, t_max: f64) -> (f64, f64) {
    let tpl = single(noise, 0.01);
    let times = linspace(0.0, t_max, 41);
    let batches = 8;
    let rates: Vec<f64> = (0..batches)
        .map(|b| {
            let r = spin_lock_decay(&tpl, omega, &times, 500, derive_seed(31, &[b])).unwrap();
            let fit = fit_stretched_exp(&r.to_curve(), PowerSpec::Fixed(1.0)).unwrap();
            1.0 / fit.get("timescale").unwrap()
        })
        .collect();
    let mean = rates.iter().sum::<f64>() / batches as f64;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[test]
fn single_spin_spin_lock_matches_golden_rule_rate() {
    let noise = NoiseModel::new(1.0, 0.2, 0.0).unwrap();
    let mut last = f64::INFINITY;
    for omega in [5.0, 10.0] {
        let expected = t1rho_rate(omega, &noise);
        let (rate, err) = spin_lock_rate(noise, omega, 2.0 / expected);
        assert!(
            (rate - expected).abs() <= 3.0 * err + 0.02 * expected,
            "omega = {omega}: {rate} +/- {err} vs {expected}"
        );
        assert!(rate < last);
        last = rate;
    }
}

#[test]
fn strong_drive_halves_flip_flop_frequency() {
    let j = 0.71;
    let tpl = ClusterTemplate::with_couplings(CouplingMatrix::pair(j), NoiseModel::quiet());
    let times = linspace(0.0, 30.0, 61);
    let r = spin_lock_decay(&tpl, 400.0, &times, 1, 0).unwrap();
    for (t, c) in times.iter().zip(&r.correlation) {
        let expected = 0.5 * (1.0 + (j * t / 4.0).cos());
        assert!((c - expected).abs() < 0.01, "t = {t}: {c} vs {expected}");
    }
    let free = sz_autocorrelation(&tpl, &times, 1, 0).unwrap();
    for (t, c) in times.iter().zip(&free.correlation) {
        assert!((c - 0.5 * (1.0 + (j * t / 2.0).cos())).abs() < 1e-8);
    }
}

#[test]
fn zero_drive_spin_lock_is_free_transverse_decay() {
    let noise = NoiseModel::new(3.0, 2.0, 8.0).unwrap();
    let tpl = single(noise, 0.01);
    let times = linspace(0.0, 1.0, 21);
    let lock = spin_lock_decay(&tpl, 0.0, &times, 50, 9).unwrap();
    let ramsey = sequence_response(&tpl, SequenceKind::Ramsey, 0.0, &times, 50, 9).unwrap();
    for (a, b) in lock.correlation.iter().zip(&ramsey.correlation) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn disorder_dominated_cluster_relaxes_slowly() {
    let j1 = 0.71;
    let w = 8.0 * j1;
    let noise = NoiseModel::new(w, 60.0 / w, 0.0).unwrap();
    let tpl = ClusterTemplate {
        noise,
        ..ClusterTemplate::default()
    };
    let times = linspace(0.0, 60.0, 31);
    let r = sz_autocorrelation(&tpl, &times, 64, 5).unwrap();
    let fit = fit_stretched_exp(&r.to_curve(), PowerSpec::Free).unwrap();
    let t = fit.get("timescale").unwrap();
    assert!(t > 5.0 / j1, "{}", fit.summary());
}

#[test]
fn identical_seeds_reproduce_results() {
    let tpl = ClusterTemplate {
        n_spins: 4,
        noise: NoiseModel::new(2.0, 3.0, 5.0).unwrap(),
        ..ClusterTemplate::default()
    };
    let times = linspace(0.0, 3.0, 7);
    let run = || -> CorrelationResult { sz_autocorrelation(&tpl, &times, 8, 42).unwrap() };
    assert_eq!(run(), run());
    assert_eq!(run().correlation[0], 1.0);
}

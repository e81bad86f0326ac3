//! Parameter extraction by weighted least squares.

use std::f64::consts::PI;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{sequence_response, ClusterTemplate};
use crate::ensemble::density_from_separation;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::numerics::{first_crossing, linspace};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sequence::{closed_form_signal, DecayCurve, SequenceKind, SIGNAL_BOUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: IndexMap<String, f64>,
    pub sigmas: IndexMap<String, f64>,
    pub units: IndexMap<String, String>,
    /// Row-major covariance in the order of `params`.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub derived: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.sigmas.get(name).copied()
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }

    /// Short multi-line summary for terminals.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.params {
            let sig = self.sigmas.get(k).copied().unwrap_or(f64::NAN);
            let unit = self.units.get(k).map(String::as_str).unwrap_or("");
            s.push_str(&format!("{k:>10} = {v:.6} +/- {sig:.3e} {unit}\n"));
        }
        for (k, v) in &self.derived {
            s.push_str(&format!("{k:>10} = {v:.6}\n"));
        }
        s.push_str(&format!(
            "chi2 = {:.4} (dof {}, reduced {:.4}), converged = {}, iterations = {}\n",
            self.chi2,
            self.dof,
            self.reduced_chi2(),
            self.converged,
            self.n_iter
        ));
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Weighted residual sum `sum ((y - m) / sigma)^2`; unit weights without sigmas.
pub fn chi2(curve: &DecayCurve, model_values: &[f64]) -> Result<f64> {
    if curve.len() != model_values.len() {
        return Err(Error::data(format!(
            "curve has {} points, model {}",
            curve.len(),
            model_values.len()
        )));
    }
    Ok((0..curve.len())
        .map(|i| {
            let s = curve.sigma(i).filter(|s| *s > 0.0).unwrap_or(1.0);
            ((curve.values[i] - model_values[i]) / s).powi(2)
        })
        .sum())
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub step_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            step_tol: 1e-8,
        }
    }
}

/// Outcome of [`levenberg_marquardt`].
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub jacobian: DMatrix<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub history: Vec<f64>,
}

fn clamp_to(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    x: &[f64],
    r0: &[f64],
    bounds: &[(f64, f64)],
) -> DMatrix<f64> {
    let m = r0.len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1e-4);
        let (lo, hi) = bounds[j];
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] = (x[j] + h).min(hi);
        xm[j] = (x[j] - h).max(lo);
        let span = xp[j] - xm[j];
        if span <= 0.0 {
            continue;
        }
        let rp = if xp[j] == x[j] { r0.to_vec() } else { f(&xp) };
        let rm = if xm[j] == x[j] { r0.to_vec() } else { f(&xm) };
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / span;
        }
    }
    jac
}

/// Bounded Levenberg-Marquardt on a residual vector, with a
/// finite-difference Jacobian and bounds enforced by clamping.
pub fn levenberg_marquardt<F>(
    residuals: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: LmOptions,
) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_to(&mut x, bounds);
    let mut r = residuals(&x);
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iter = 0;
    let mut jac = jacobian(&residuals, &x, &r, bounds);

    while n_iter < opts.max_iter {
        n_iter += 1;
        let rv = DVector::from_column_slice(&r);
        let g = jac.transpose() * &rv;
        let a = jac.transpose() * &jac;
        if g.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match damped.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let mut xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_to(&mut xn, bounds);
            let rn = residuals(&xn);
            let cn = sum_sq(&rn);
            if cn.is_finite() && cn < cost {
                let small_step = x
                    .iter()
                    .zip(&xn)
                    .all(|(a, b)| (a - b).abs() <= opts.step_tol * (a.abs() + opts.step_tol));
                let small_gain = cost - cn <= 1e-14 * cost;
                x = xn;
                r = rn;
                cost = cn;
                history.push(cost);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent direction left at machine precision: a stationary point.
            converged = true;
            break;
        }
        jac = jacobian(&residuals, &x, &r, bounds);
        if converged {
            break;
        }
    }
    LmOutcome {
        x,
        cost,
        jacobian: jac,
        n_iter,
        converged,
        history,
    }
}

/// Covariance `s^2 (J^T J)^+` and a rank warning.
fn covariance(jac: &DMatrix<f64>, scale: f64) -> (DMatrix<f64>, Option<String>) {
    let a = jac.transpose() * jac;
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * a.nrows() as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let warning = (rank < a.nrows()).then(|| {
        format!(
            "Jacobian is rank deficient ({rank} of {}); covariance is a pseudo-inverse",
            a.nrows()
        )
    });
    let pinv = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(a.nrows(), a.ncols()));
    let cov = pinv * scale;
    // Symmetrize against round-off.
    let cov = (&cov + cov.transpose()) * 0.5;
    (cov, warning)
}

fn build_result(
    names: &[(&str, &str)],
    outcome: &LmOutcome,
    n_points: usize,
    mut warnings: Vec<String>,
) -> FitResult {
    let k = names.len();
    let dof = n_points.saturating_sub(k);
    let scale = if dof > 0 {
        outcome.cost / dof as f64
    } else {
        1.0
    };
    let (cov, rank_warning) = covariance(&outcome.jacobian, scale);
    warnings.extend(rank_warning);
    let mut params = IndexMap::new();
    let mut sigmas = IndexMap::new();
    let mut units = IndexMap::new();
    for (i, (name, unit)) in names.iter().enumerate() {
        params.insert(name.to_string(), outcome.x[i]);
        sigmas.insert(name.to_string(), cov[(i, i)].max(0.0).sqrt());
        units.insert(name.to_string(), unit.to_string());
    }
    FitResult {
        params,
        sigmas,
        units,
        covariance: (0..k)
            .map(|i| (0..k).map(|j| cov[(i, j)]).collect())
            .collect(),
        chi2: outcome.cost,
        dof,
        converged: outcome.converged,
        n_iter: outcome.n_iter,
        derived: IndexMap::new(),
        warnings,
    }
}

fn weights(curve: &DecayCurve, label: &str, warnings: &mut Vec<String>) -> Vec<f64> {
    match &curve.sigmas {
        Some(s) if s.iter().all(|v| *v > 0.0) => s.iter().map(|v| 1.0 / v).collect(),
        _ => {
            warnings.push(format!(
                "{label}: no usable sigmas, unit weights used and covariance scaled by reduced chi2"
            ));
            vec![1.0; curve.len()]
        }
    }
}

/// Shared parameters of the four-sequence model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointParams {
    /// Nearest-neighbour coupling J1, rad/us; the dipolar T2 is 1/J1.
    pub j1: f64,
    pub w: f64,
    pub tau: f64,
    /// Ramsey detuning, rad/us.
    pub delta: f64,
    /// Proton Larmor frequency, rad/us (held fixed).
    pub omega_l: f64,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            j1: 0.71,
            w: 4.40,
            tau: 14.6,
            delta: 2.0 * PI * 9.2,
            omega_l: 2.0 * PI * 3.11,
        }
    }
}

impl JointParams {
    fn model(&self) -> NoiseModel {
        NoiseModel {
            w: self.w,
            tau: self.tau,
            omega_l: self.omega_l,
        }
    }

    /// Closed-form signal of `kind` at `t`.
    pub fn signal(&self, kind: SequenceKind, t: f64) -> f64 {
        closed_form_signal(kind, t, &self.model(), 1.0 / self.j1, self.delta).unwrap_or(f64::NAN)
    }
}

/// Ramsey, echo, XY-4 and MREV-8 curves of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointData {
    pub ramsey: DecayCurve,
    pub echo: DecayCurve,
    pub xy4: DecayCurve,
    pub mrev8: DecayCurve,
}

impl JointData {
    pub const KINDS: [SequenceKind; 4] = [
        SequenceKind::Ramsey,
        SequenceKind::Echo,
        SequenceKind::XY4,
        SequenceKind::MREV8InEcho,
    ];

    pub fn curves(&self) -> [&DecayCurve; 4] {
        [&self.ramsey, &self.echo, &self.xy4, &self.mrev8]
    }

    pub fn n_points(&self) -> usize {
        self.curves().iter().map(|c| c.len()).sum()
    }
}

/// Sample the four closed-form curves at `truth` with Gaussian noise of
/// absolute width `sigma`. Each window spans 2.5 times the curve's 1/e time.
pub fn synthesize_joint(
    truth: &JointParams,
    sigma: f64,
    points: usize,
    seed: u64,
) -> Result<JointData> {
    let mut curves = Vec::new();
    for (i, kind) in JointData::KINDS.iter().enumerate() {
        let envelope = JointParams {
            delta: 0.0,
            ..*truth
        };
        let decay = first_crossing(
            |t| envelope.signal(*kind, t).abs(),
            (-1.0f64).exp(),
            0.0,
            200.0,
            4000,
        )
        .unwrap_or(200.0);
        let n = if *kind == SequenceKind::Ramsey {
            points * 3
        } else {
            points
        };
        let times = linspace(0.0, 2.5 * decay, n);
        let mut rng = rng_from_seed(derive_seed(seed, &[i as u64]));
        let normal = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::domain(e.to_string()))?;
        let values = times
            .iter()
            .map(|&t| {
                let noise: f64 = if sigma > 0.0 {
                    normal.sample(&mut rng)
                } else {
                    0.0
                };
                (truth.signal(*kind, t) + noise).clamp(-SIGNAL_BOUND, SIGNAL_BOUND)
            })
            .collect();
        let sigmas = (sigma > 0.0).then(|| vec![sigma; n]);
        curves.push(DecayCurve::new(times, values, sigmas)?);
    }
    let mut it = curves.into_iter();
    Ok(JointData {
        ramsey: it.next().unwrap(),
        echo: it.next().unwrap(),
        xy4: it.next().unwrap(),
        mrev8: it.next().unwrap(),
    })
}

const JOINT_NAMES: [(&str, &str); 4] = [
    ("j1", "rad/us"),
    ("w", "rad/us"),
    ("tau", "us"),
    ("delta", "rad/us"),
];

const JOINT_BOUNDS: [(f64, f64); 4] = [(1e-4, 1e3), (1e-4, 1e3), (1e-3, 1e5), (-1e4, 1e4)];

/// Number of jittered starts used by [`fit_joint`].
pub const MULTI_STARTS: usize = 5;

/// Joint fit of the four curves with shared `(J1, W, tau)` and the Ramsey
/// detuning; `omega_l` is taken from `init` and held fixed.
pub fn fit_joint(data: &JointData, init: &JointParams) -> Result<FitResult> {
    fit_joint_with(data, init, LmOptions::default(), 0)
}

pub fn fit_joint_with(
    data: &JointData,
    init: &JointParams,
    opts: LmOptions,
    seed: u64,
) -> Result<FitResult> {
    for (c, k) in data.curves().iter().zip(JointData::KINDS) {
        if c.is_empty() {
            return Err(Error::data(format!("{k} curve is empty")));
        }
        c.validate()?;
    }
    let mut warnings = Vec::new();
    let weights: Vec<Vec<f64>> = data
        .curves()
        .iter()
        .zip(JointData::KINDS)
        .map(|(c, k)| weights(c, k.name(), &mut warnings))
        .collect();
    let omega_l = init.omega_l;
    let residuals = |x: &[f64]| -> Vec<f64> {
        let p = JointParams {
            j1: x[0],
            w: x[1],
            tau: x[2],
            delta: x[3],
            omega_l,
        };
        let mut out = Vec::with_capacity(data.n_points());
        for ((c, k), wts) in data.curves().iter().zip(JointData::KINDS).zip(&weights) {
            for ((&t, &v), &w) in c.times.iter().zip(&c.values).zip(wts) {
                out.push((v - p.signal(k, t)) * w);
            }
        }
        out
    };

    let x0 = [init.j1, init.w, init.tau, init.delta];
    let mut rng = rng_from_seed(derive_seed(seed, &[0x5157]));
    let starts: Vec<[f64; 4]> = (0..MULTI_STARTS)
        .map(|s| {
            if s == 0 {
                return x0;
            }
            let mut x = x0;
            for v in x.iter_mut().take(3) {
                *v *= (0.3 * (rng.random::<f64>() - 0.5)).exp();
            }
            x
        })
        .collect();
    let outcomes: Vec<LmOutcome> = starts
        .par_iter()
        .map(|x| levenberg_marquardt(residuals, x, &JOINT_BOUNDS, opts))
        .collect();
    let best = outcomes
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one start");
    let mut result = build_result(&JOINT_NAMES, &best, data.n_points(), warnings);
    let j1 = best.x[0];
    result.derived.insert("t2".into(), 1.0 / j1);
    result.derived.insert("omega_l".into(), omega_l);
    if !best.converged {
        result.warnings.push(format!(
            "no convergence within {} iterations",
            opts.max_iter
        ));
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSpec {
    Fixed(f64),
    Free,
}

/// Fit of `A exp(-(t/T)^p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StretchedExpModel {
    pub amplitude: f64,
    pub timescale: f64,
    pub power: f64,
}

impl StretchedExpModel {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (-(t / self.timescale).powf(self.power)).exp()
    }
}

pub const POWER_BOUNDS: (f64, f64) = (0.2, 4.0);

type Start<'a> = (Vec<f64>, Vec<(f64, f64)>, Vec<(&'a str, &'a str)>);

/// Weighted fit of `A exp(-(t/T)^p)` to `curve`.
pub fn fit_stretched_exp(curve: &DecayCurve, power: PowerSpec) -> Result<FitResult> {
    if curve.len() < 4 {
        return Err(Error::data(
            "stretched-exponential fit needs at least 4 points",
        ));
    }
    curve.validate()?;
    if let PowerSpec::Fixed(p) = power {
        if !(p > 0.0 && p <= POWER_BOUNDS.1) {
            return Err(Error::config(format!("fixed power {p} outside (0, 4]")));
        }
    }
    let mut warnings = Vec::new();
    let wts = weights(curve, "curve", &mut warnings);
    let t_max = curve.times.last().copied().unwrap_or(1.0).max(1e-12);
    let t_pos = curve
        .times
        .iter()
        .copied()
        .find(|t| *t > 0.0)
        .unwrap_or(t_max);
    let peak = curve.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        let mut r = degenerate_stretched(curve, power);
        r.warnings.push("all-zero data: nothing to fit".into());
        return Ok(r);
    }
    let a0 = curve.values[0]
        .abs()
        .max(0.1 * peak)
        .copysign(curve.values[0]);
    let target = a0.abs() / std::f64::consts::E;
    let t0 = curve
        .times
        .iter()
        .zip(&curve.values)
        .find(|(_, v)| v.abs() <= target)
        .map(|(t, _)| *t)
        .unwrap_or(t_max)
        .max(t_pos);
    let upper_t = 1e4 * t_max;
    let (x0, bounds, names): Start = match power {
        PowerSpec::Free => (
            vec![a0, t0, 1.0],
            vec![(-2.0, 2.0), (1e-6 * t_pos, upper_t), POWER_BOUNDS],
            vec![("amplitude", ""), ("timescale", "us"), ("power", "")],
        ),
        PowerSpec::Fixed(_) => (
            vec![a0, t0],
            vec![(-2.0, 2.0), (1e-6 * t_pos, upper_t)],
            vec![("amplitude", ""), ("timescale", "us")],
        ),
    };
    let p_of = |x: &[f64]| match power {
        PowerSpec::Fixed(p) => p,
        PowerSpec::Free => x[2],
    };
    let residuals = |x: &[f64]| -> Vec<f64> {
        let m = StretchedExpModel {
            amplitude: x[0],
            timescale: x[1],
            power: p_of(x),
        };
        curve
            .times
            .iter()
            .zip(&curve.values)
            .zip(&wts)
            .map(|((t, y), w)| (y - m.eval(*t)) * w)
            .collect()
    };
    // A second start at a shorter scale guards against the flat region of long timescales.
    let outcomes: Vec<LmOutcome> = [t0, 0.3 * t0]
        .iter()
        .map(|&ts| {
            let mut x = x0.clone();
            x[1] = ts;
            levenberg_marquardt(residuals, &x, &bounds, LmOptions::default())
        })
        .collect();
    let best = outcomes
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("two starts");
    let mut result = build_result(&names, &best, curve.len(), warnings);
    if let PowerSpec::Fixed(p) = power {
        result.derived.insert("power".into(), p);
    }
    if best.x[1] >= 0.99 * upper_t {
        result.converged = false;
        result
            .warnings
            .push("timescale ran to its upper bound: data do not decay".into());
    }
    Ok(result)
}

fn degenerate_stretched(curve: &DecayCurve, power: PowerSpec) -> FitResult {
    let mut params = IndexMap::new();
    params.insert("amplitude".to_string(), 0.0);
    params.insert("timescale".to_string(), f64::NAN);
    if power == PowerSpec::Free {
        params.insert("power".to_string(), f64::NAN);
    }
    let k = params.len();
    FitResult {
        sigmas: params.keys().map(|k| (k.clone(), f64::NAN)).collect(),
        units: params.keys().map(|k| (k.clone(), String::new())).collect(),
        params,
        covariance: vec![vec![f64::NAN; k]; k],
        chi2: 0.0,
        dof: curve.len().saturating_sub(k),
        converged: false,
        n_iter: 0,
        derived: IndexMap::new(),
        warnings: Vec::new(),
    }
}

/// Settings for [`extract_density`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityOptions {
    pub n_neighbors: usize,
    pub omega_l: f64,
    pub min_radius: f64,
    /// Noise sample spacing; defaults to the resolution limit.
    pub dt: Option<f64>,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            n_neighbors: 5,
            omega_l: 0.0,
            min_radius: crate::ensemble::DEFAULT_MIN_RADIUS,
            dt: None,
        }
    }
}

/// Default realization count per separation for [`extract_density`].
pub const DEFAULT_DENSITY_REALIZATIONS: usize = 500;

/// Per-separation chi^2 profile from [`extract_density_profile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub separations: Vec<f64>,
    pub chi2: Vec<f64>,
    /// Simulated XY-4 curve for each separation.
    pub simulated: Vec<Vec<f64>>,
}

/// Simulate the XY-4 response at each separation and compare with `curve`.
pub fn extract_density_profile(
    xy4_curve: &DecayCurve,
    w: f64,
    tau: f64,
    separations: &[f64],
    n_realizations: usize,
    seed: u64,
    opts: &DensityOptions,
) -> Result<DensityProfile> {
    if separations.is_empty() {
        return Err(Error::config("separation grid is empty"));
    }
    if separations.windows(2).any(|w| w[1] <= w[0]) || separations[0] <= 0.0 {
        return Err(Error::config(
            "separations must be positive and strictly increasing",
        ));
    }
    let noise = NoiseModel::new(w, tau, opts.omega_l)?;
    let mut chi = Vec::with_capacity(separations.len());
    let mut simulated = Vec::with_capacity(separations.len());
    for (i, &a) in separations.iter().enumerate() {
        let tpl = ClusterTemplate {
            n_spins: opts.n_neighbors + 1,
            density: density_from_separation(a),
            min_radius: opts.min_radius,
            noise,
            dt: opts.dt,
            ..ClusterTemplate::default()
        };
        let sim = sequence_response(
            &tpl,
            SequenceKind::XY4,
            0.0,
            &xy4_curve.times,
            n_realizations,
            derive_seed(seed, &[i as u64]),
        )?;
        let total: f64 = (0..xy4_curve.len())
            .map(|k| {
                let s_data = xy4_curve.sigma(k).unwrap_or(0.0);
                let var = s_data * s_data + sim.stderr[k] * sim.stderr[k];
                let var = if var > 0.0 { var } else { 1.0 };
                (xy4_curve.values[k] - sim.correlation[k]).powi(2) / var
            })
            .sum();
        chi.push(total);
        simulated.push(sim.correlation);
    }
    Ok(DensityProfile {
        separations: separations.to_vec(),
        chi2: chi,
        simulated,
    })
}

/// Grid search for the mean separation whose simulated XY-4 decay best
/// matches `xy4_curve`; the uncertainty is half the `chi^2_min + 1` interval.
pub fn extract_density(
    xy4_curve: &DecayCurve,
    w: f64,
    tau: f64,
    separations: &[f64],
    n_realizations: usize,
    seed: u64,
    opts: &DensityOptions,
) -> Result<FitResult> {
    let profile =
        extract_density_profile(xy4_curve, w, tau, separations, n_realizations, seed, opts)?;
    Ok(density_result(&profile, xy4_curve.len()))
}

/// Summarize a chi^2 profile as a fit result.
pub fn density_result(profile: &DensityProfile, n_points: usize) -> FitResult {
    let (s, c) = (&profile.separations, &profile.chi2);
    let best = c
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let cmin = c[best];
    let level = cmin + 1.0;
    let mut warnings = Vec::new();
    let crossing = |i: usize, j: usize| {
        // Linear interpolation of the chi^2 = level point between grid i and j.
        let (ci, cj) = (c[i], c[j]);
        if cj == ci {
            s[j]
        } else {
            s[i] + (level - ci) / (cj - ci) * (s[j] - s[i])
        }
    };
    let lower = (0..best)
        .rev()
        .find(|&i| c[i] > level)
        .map(|i| crossing(i + 1, i));
    let upper = (best + 1..s.len())
        .find(|&i| c[i] > level)
        .map(|i| crossing(i - 1, i));
    let sigma = match (lower, upper) {
        (Some(lo), Some(hi)) => 0.5 * (hi - lo),
        (Some(lo), None) => s[best] - lo,
        (None, Some(hi)) => hi - s[best],
        (None, None) => f64::NAN,
    };
    if s.len() < 2 {
        warnings.push("degenerate grid: a single separation gives no uncertainty".into());
    } else if best == 0 || best == s.len() - 1 {
        warnings.push("chi^2 minimum lies on the grid boundary".into());
    }
    if lower.is_none() || upper.is_none() {
        warnings.push("chi^2 + 1 interval not closed within the grid".into());
    }
    let a = s[best];
    let mut params = IndexMap::new();
    params.insert("separation".to_string(), a);
    let mut sigmas = IndexMap::new();
    sigmas.insert("separation".to_string(), sigma);
    let mut units = IndexMap::new();
    units.insert("separation".to_string(), "nm".to_string());
    let mut derived = IndexMap::new();
    derived.insert("density".to_string(), density_from_separation(a));
    derived.insert("interval_low".to_string(), lower.unwrap_or(f64::NAN));
    derived.insert("interval_high".to_string(), upper.unwrap_or(f64::NAN));
    FitResult {
        params,
        sigmas,
        units,
        covariance: vec![vec![sigma * sigma]],
        chi2: cmin,
        dof: n_points.saturating_sub(1),
        converged: s.len() >= 2,
        n_iter: s.len(),
        derived,
        warnings,
    }
}

//! Resonance-counting transport under dynamical disorder.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{Constants, J0};
use crate::error::{Error, Result};
use crate::noise::{spectral_density_with, NoiseModel};
use crate::numerics::{integrate, logspace, QuadOptions};
use crate::rng::rng_from_seed;
use crate::sequence::DecayCurve;

/// Default prefactor of [`t1rho_rate`].
pub const T1RHO_PREFACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoppingParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Areal density, nm^-2.
    pub density: f64,
    pub j0: f64,
    /// Exclusion radius, nm.
    pub r0: f64,
}

impl Default for HoppingParams {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            beta: 1.0,
            kappa: 0.31,
            density: 0.0142,
            j0: J0,
            r0: 2.0,
        }
    }
}

impl HoppingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("kappa", self.kappa),
            ("j0", self.j0),
            ("r0", self.r0),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.density >= 0.0) {
            return Err(Error::config("density must be >= 0"));
        }
        Ok(())
    }

    /// Mean coupling `J0 n^{3/2}`.
    pub fn mean_coupling(&self) -> f64 {
        self.j0 * self.density.powf(1.5)
    }

    /// `n^{3/2} beta J0 / (W tau)`, the inverse time scale of the closed form.
    pub fn closed_rate(&self, w: f64, tau: f64) -> f64 {
        self.density.powf(1.5) * self.beta * self.j0 / (w * tau)
    }
}

/// Resonance window fraction `x = beta J0 / (r^3 W)`.
pub fn resonance_fraction(r: f64, w: f64, params: &HoppingParams) -> f64 {
    params.beta * params.j0 / (r.powi(3) * w)
}

/// Probability that a pair at distance `r` has been resonant by time `t`.
pub fn pair_resonance_probability(
    r: f64,
    t: f64,
    w: f64,
    tau: f64,
    params: &HoppingParams,
) -> Result<f64> {
    if !(t >= 0.0) || !(r > 0.0) || !(w > 0.0) || !(tau > 0.0) {
        return Err(Error::domain("r, W, tau must be positive and t >= 0"));
    }
    let x = resonance_fraction(r, w, params);
    if x > 1.0 {
        return Err(Error::Regime(format!(
            "beta J0 / r^3 = {:.3} exceeds W = {w}; increase r0 or W",
            x * w
        )));
    }
    Ok((1.0 - (-x * t / tau).exp() * (1.0 - x)).clamp(0.0, 1.0))
}

/// Survival probability from the radial resonance integral.
///
/// The pair probability is taken in its exponential form
/// `1 - exp(-x (t/tau + 1))`, which agrees with
/// [`pair_resonance_probability`] for `x << 1` and stays a probability for
/// the close pairs near `r0` where `x > 1`.
pub fn survival_integral(t: f64, w: f64, tau: f64, params: &HoppingParams) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0) || !(w > 0.0) || !(tau > 0.0) {
        return Err(Error::domain("W, tau must be positive and t >= 0"));
    }
    let outer = (params.j0 * t).cbrt();
    if outer <= params.r0 || params.density == 0.0 {
        return Ok(1.0);
    }
    let n = params.density;
    let integrand = |r: f64| {
        let x = resonance_fraction(r, w, params);
        2.0 * PI * n * r * -(-x * (t / tau + 1.0)).exp_m1()
    };
    let opts = QuadOptions {
        rel_tol: 1e-8,
        ..QuadOptions::default()
    };
    let v = integrate(integrand, params.r0, outer, &[], opts)
        .map_err(|e| Error::numeric(format!("survival integral at t = {t}: {e}")))?;
    Ok((-v.value).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalForm {
    /// `exp(-alpha (c (t + tau))^{2/3})`.
    #[default]
    Shifted,
    /// `exp(-alpha (c t)^{2/3})`.
    LongTime,
}

/// Closed-form survival probability with `c = n^{3/2} beta J0 / (W tau)`.
pub fn survival_closed(
    t: f64,
    w: f64,
    tau: f64,
    params: &HoppingParams,
    form: SurvivalForm,
) -> f64 {
    let c = params.closed_rate(w, tau);
    let s = match form {
        SurvivalForm::Shifted => t + tau,
        SurvivalForm::LongTime => t,
    };
    (-params.alpha * (c * s).powf(2.0 / 3.0)).exp()
}

/// `P(t) / P(0)`, which starts at 1.
pub fn survival_renormalized(
    t: f64,
    w: f64,
    tau: f64,
    params: &HoppingParams,
    form: SurvivalForm,
) -> f64 {
    survival_closed(t, w, tau, params, form) / survival_closed(0.0, w, tau, params, form)
}

/// Effective `alpha`: the mean over log-spaced `t` in `[t_lo, t_hi]` of
/// `-ln P_int(t) / (c (t + tau))^{2/3}`.
pub fn alpha_from_integral(
    w: f64,
    tau: f64,
    params: &HoppingParams,
    t_lo: f64,
    t_hi: f64,
    points: usize,
) -> Result<f64> {
    let c = params.closed_rate(w, tau);
    let mut sum = 0.0;
    let grid = logspace(t_lo, t_hi, points.max(2));
    for &t in &grid {
        let p = survival_integral(t, w, tau, params)?;
        sum += -p.ln() / (c * (t + tau)).powf(2.0 / 3.0);
    }
    Ok(sum / grid.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDisorder {
    pub w_e: f64,
    pub tau_e: f64,
}

impl EffectiveDisorder {
    /// Time rescaling factor `tau_e W_e`.
    pub fn scale(&self) -> f64 {
        self.tau_e * self.w_e
    }
}

/// Combine bath disorder `(W, tau)` with Ising fields `(J1, T_z)`.
pub fn effective_disorder(w: f64, tau: f64, j1: f64, t_z: f64) -> Result<EffectiveDisorder> {
    if !(w > 0.0) || !(tau > 0.0) || !(j1 >= 0.0) || !(t_z > 0.0) {
        return Err(Error::domain("W, tau, T_z must be positive and J1 >= 0"));
    }
    let w_e = w.hypot(j1);
    let root_rate = (w / tau.sqrt() + j1 / t_z.sqrt()) / w_e;
    Ok(EffectiveDisorder {
        w_e,
        tau_e: 1.0 / (root_rate * root_rate),
    })
}

/// Self-consistent `T_z = kappa tau_e(T_z) W_e / J`.
pub fn predict_tz(w: f64, tau: f64, j1: f64, j_mean: f64, kappa: f64) -> Result<f64> {
    if !(w > 0.0) || !(tau > 0.0) || !(j1 >= 0.0) || !(j_mean > 0.0) || !(kappa > 0.0) {
        return Err(Error::domain(
            "predict_tz needs positive W, tau, J, kappa and J1 >= 0",
        ));
    }
    let map = |tz: f64| -> Result<f64> {
        let e = effective_disorder(w, tau, j1, tz)?;
        Ok(kappa * e.scale() / j_mean)
    };
    let mut tz = kappa * tau * w / j_mean;
    for _ in 0..1000 {
        let target = map(tz)?;
        if (target - tz).abs() <= 1e-12 * tz {
            return Ok(target);
        }
        tz = 0.5 * tz + 0.5 * target;
    }
    Err(Error::numeric(format!(
        "T_z fixed point did not converge (W = {w}, tau = {tau}, J1 = {j1})"
    )))
}

/// Warning when the hopping picture's `W >= J` condition fails.
pub fn regime_warning(w: f64, j_mean: f64) -> Option<String> {
    (w < j_mean).then(|| {
        format!("W = {w} is below the mean coupling J = {j_mean}; the hopping picture needs W >= J")
    })
}

/// Divide each curve's times by its `tau_e W_e`.
pub fn collapse_transform(
    curves: &[DecayCurve],
    disorder: &[EffectiveDisorder],
) -> Result<Vec<DecayCurve>> {
    if curves.len() != disorder.len() {
        return Err(Error::data(format!(
            "{} curves but {} disorder entries",
            curves.len(),
            disorder.len()
        )));
    }
    curves
        .iter()
        .zip(disorder)
        .map(|(c, d)| {
            let s = d.scale();
            if !(s > 0.0) {
                return Err(Error::domain("tau_e W_e must be positive"));
            }
            Ok(DecayCurve::unchecked(
                c.times.iter().map(|t| t / s).collect(),
                c.values.clone(),
                c.sigmas.clone(),
            ))
        })
        .collect()
}

/// Residual disorder width in the dressed frame, `W^2 / (sqrt 2 Omega)`.
pub fn w_eff_driven(w: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::domain("drive Omega must be positive"));
    }
    Ok(w * w / (2f64.sqrt() * omega))
}

/// Standard deviation of the dressed splitting shift `sqrt(Omega^2 + delta^2) - Omega`
/// for `delta ~ N(0, W^2)`, by sampling.
pub fn dressed_splitting_spread(w: f64, omega: f64, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let normal = Normal::new(0.0, w).map_err(|e| Error::domain(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let shifts: Vec<f64> = (0..samples)
        .map(|_| {
            let d: f64 = normal.sample(&mut rng);
            omega.hypot(d) - omega
        })
        .collect();
    let mean = shifts.iter().sum::<f64>() / samples as f64;
    let var = shifts.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    Ok(var.sqrt())
}

/// Spin-lock relaxation rate `prefactor gamma_e^2 V(Omega)`, 1/us.
pub fn t1rho_rate(omega: f64, model: &NoiseModel) -> f64 {
    t1rho_rate_with(omega, model, T1RHO_PREFACTOR, &Constants::default())
}

pub fn t1rho_rate_with(omega: f64, model: &NoiseModel, prefactor: f64, consts: &Constants) -> f64 {
    prefactor * consts.gamma_e * consts.gamma_e * spectral_density_with(consts, model, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fit_power_law, linspace};
    use crate::rng::derive_seed;
    use rand::Rng;

    fn reference() -> HoppingParams {
        HoppingParams {
            density: 0.0142,
            ..HoppingParams::default()
        }
    }

    #[test]
    fn pair_probability_limits() {
        let p = reference();
        let x = resonance_fraction(8.4, 4.4, &p);
        let p0 = pair_resonance_probability(8.4, 0.0, 4.4, 14.6, &p).unwrap();
        assert!((p0 - x).abs() < 1e-15);
        let pinf = pair_resonance_probability(8.4, 1e9, 4.4, 14.6, &p).unwrap();
        assert!((pinf - 1.0).abs() < 1e-12);
        assert!(matches!(
            pair_resonance_probability(2.0, 1.0, 4.4, 14.6, &p),
            Err(Error::Regime(_))
        ));
    }

    // Each pair redraws its detuning difference at rate 1/tau; a draw lands
    // in the resonance window with probability x.
    #[test]
    fn pair_probability_matches_renewal_monte_carlo() {
        let p = reference();
        let (r, w, tau) = (8.4, 4.4, 14.6);
        let x = resonance_fraction(r, w, &p);
        let t = tau;
        let trials = 200_000;
        let mut rng = rng_from_seed(derive_seed(17, &[]));
        let mut hits = 0usize;
        for _ in 0..trials {
            let mut now = 0.0;
            let mut resonant = rng.random::<f64>() < x;
            while !resonant {
                now += -tau * (1.0 - rng.random::<f64>()).ln();
                if now > t {
                    break;
                }
                resonant = rng.random::<f64>() < x;
            }
            hits += resonant as usize;
        }
        let est = hits as f64 / trials as f64;
        let sigma = (est * (1.0 - est) / trials as f64).sqrt();
        let exact = pair_resonance_probability(r, t, w, tau, &p).unwrap();
        assert!(
            (est - exact).abs() < 3.0 * sigma,
            "{est} vs {exact} (sigma {sigma})"
        );
    }

    #[test]
    fn survival_integral_trivial_limits() {
        let p = reference();
        // R(t) = (J0 t)^{1/3} < r0 = 2 for t < 8 / J0.
        assert_eq!(survival_integral(0.01, 3.77, 15.0, &p).unwrap(), 1.0);
        let empty = HoppingParams { density: 0.0, ..p };
        assert_eq!(survival_integral(100.0, 3.77, 15.0, &empty).unwrap(), 1.0);
    }

    #[test]
    fn survival_integral_monotone() {
        let p = reference();
        let mut prev = 1.0;
        for t in logspace(0.01, 3000.0, 60) {
            let v = survival_integral(t, 3.77, 15.0, &p).unwrap();
            assert!(v <= prev + 1e-14 && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn calibrated_alpha_reproduces_integral() {
        let p = reference();
        let (w, tau) = (3.77, 15.0);
        let alpha = alpha_from_integral(w, tau, &p, tau, 100.0 * tau, 40).unwrap();
        let cal = HoppingParams { alpha, ..p };
        for t in logspace(tau, 100.0 * tau, 30) {
            let a = -survival_integral(t, w, tau, &p).unwrap().ln();
            let b = -survival_closed(t, w, tau, &cal, SurvivalForm::Shifted).ln();
            assert!(((a - b) / a).abs() < 0.10, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn closed_form_stretch_exponent() {
        let p = reference();
        let (w, tau) = (4.0, 12.0);
        let ts = linspace(2.0 * tau, 200.0 * tau, 200);
        let ys: Vec<f64> = ts
            .iter()
            .map(|&t| -survival_closed(t, w, tau, &p, SurvivalForm::Shifted).ln())
            .collect();
        let (_, power) = fit_power_law(&ts, &ys).unwrap();
        assert!((power - 2.0 / 3.0).abs() < 0.02, "{power}");
    }

    #[test]
    fn doubling_w_rescales_time() {
        let p = reference();
        for t in [100.0, 1000.0, 5000.0] {
            let a = survival_closed(t, 2.0, 10.0, &p, SurvivalForm::LongTime);
            let b = survival_closed(2.0 * t, 4.0, 10.0, &p, SurvivalForm::LongTime);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms_bounded_and_monotone() {
        let p = reference();
        for form in [SurvivalForm::Shifted, SurvivalForm::LongTime] {
            let mut prev = 1.0;
            for t in linspace(0.0, 500.0, 101) {
                let v = survival_closed(t, 4.4, 14.6, &p, form);
                assert!(v > 0.0 && v <= 1.0 && v <= prev);
                prev = v;
            }
        }
        assert!(survival_closed(0.0, 4.4, 14.6, &p, SurvivalForm::Shifted) < 1.0);
        assert_eq!(
            survival_renormalized(0.0, 4.4, 14.6, &p, SurvivalForm::Shifted),
            1.0
        );
    }

    #[test]
    fn effective_disorder_cases() {
        let e = effective_disorder(4.4, 14.6, 0.0, 30.0).unwrap();
        assert!((e.w_e - 4.4).abs() < 1e-14 && (e.tau_e - 14.6).abs() < 1e-12);
        let e = effective_disorder(4.40, 14.6, 0.71, 30.0).unwrap();
        assert!((e.w_e - 4.457).abs() < 1e-3);
        assert!(e.w_e >= 4.40);
        // Equal sources: the root-rate average gives tau / 2.
        let e = effective_disorder(2.0, 10.0, 2.0, 10.0).unwrap();
        assert!((e.tau_e - 5.0).abs() < 1e-12);
    }

    #[test]
    fn tz_decoupled_limit() {
        let tz = predict_tz(4.4, 14.6, 0.0, 0.57, 0.31).unwrap();
        assert!((tz - 0.31 * 14.6 * 4.4 / 0.57).abs() < 1e-9 * tz);
    }

    #[test]
    fn tz_reference_point() {
        let tz = predict_tz(4.40, 14.6, 0.71, 0.57, 0.31).unwrap();
        let ratio = tz / 1.41;
        assert!((15.0..=60.0).contains(&ratio), "{ratio}");
        let e = effective_disorder(4.40, 14.6, 0.71, tz).unwrap();
        assert!((tz - 0.31 * e.scale() / 0.57).abs() < 1e-6 * tz);
    }

    #[test]
    fn tz_monotonicity() {
        let base = predict_tz(4.0, 10.0, 0.7, 0.5, 0.3).unwrap();
        assert!(predict_tz(5.0, 10.0, 0.7, 0.5, 0.3).unwrap() > base);
        assert!(predict_tz(4.0, 12.0, 0.7, 0.5, 0.3).unwrap() > base);
        assert!(predict_tz(4.0, 10.0, 0.7, 0.5, 0.4).unwrap() > base);
        assert!(predict_tz(4.0, 10.0, 0.7, 0.6, 0.3).unwrap() < base);
    }

    #[test]
    fn collapse_roundtrip_and_errors() {
        let c = DecayCurve::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.2], None).unwrap();
        let d = EffectiveDisorder {
            w_e: 2.0,
            tau_e: 3.0,
        };
        let out = collapse_transform(std::slice::from_ref(&c), &[d]).unwrap();
        let back: Vec<f64> = out[0].times.iter().map(|t| t * d.scale()).collect();
        assert_eq!(back, c.times);
        assert_eq!(out[0].values, c.values);
        assert!(collapse_transform(&[c], &[]).is_err());
    }

    #[test]
    fn closed_form_collapses_in_rescaled_time() {
        let p = reference();
        let (a, b) = ((3.0, 10.0), (5.0, 20.0));
        for s in [10.0, 50.0, 200.0] {
            let pa = survival_closed(s * a.0 * a.1, a.0, a.1, &p, SurvivalForm::LongTime);
            let pb = survival_closed(s * b.0 * b.1, b.0, b.1, &p, SurvivalForm::LongTime);
            assert!((pa - pb).abs() < 1e-6);
        }
    }

    #[test]
    fn driven_width() {
        let v = w_eff_driven(4.40, 50.0).unwrap();
        assert!((v - 0.274).abs() < 1e-3);
        assert!((w_eff_driven(4.4, 100.0).unwrap() - v / 2.0).abs() < 1e-15);
        assert!((v * 50.0 * 2f64.sqrt() - 4.4 * 4.4).abs() < 1e-12);
        assert!(matches!(w_eff_driven(4.4, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dressed_spread_matches_width() {
        for omega in [22.0, 50.0, 100.0] {
            let s = dressed_splitting_spread(4.4, omega, 200_000, 3).unwrap();
            let w = w_eff_driven(4.4, omega).unwrap();
            assert!((s - w).abs() / w < 0.10, "Omega = {omega}: {s} vs {w}");
        }
    }

    #[test]
    fn t1rho_properties() {
        let quiet = NoiseModel::new(0.0, 14.6, 19.5).unwrap();
        assert_eq!(t1rho_rate(3.0, &quiet), 0.0);
        let m = NoiseModel::new(4.4, 14.6, 2.0 * PI * 3.11).unwrap();
        let r0 = t1rho_rate(0.0, &m);
        let w2tau = 4.4 * 4.4 * 14.6;
        assert!((r0 - w2tau).abs() / w2tau < 0.01);
        let mut prev = f64::INFINITY;
        for omega in linspace(2.0 / m.tau, m.omega_l / 2.0, 50) {
            let r = t1rho_rate(omega, &m);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn regime_warning_when_coupling_dominates() {
        assert!(regime_warning(0.3, 0.57).is_some());
        assert!(regime_warning(4.4, 0.57).is_none());
    }
}

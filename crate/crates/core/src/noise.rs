//! Nuclear-bath noise: power spectrum, rms-field geometry, depth
//! inversion, and stochastic trajectories of the on-site detuning.
//!
//! The spectrum has a zero-frequency Lorentzian of weight `W^2` and a
//! Larmor Lorentzian of weight `(5/9) W^2` placed at `+omega_L` only.
//! Setting `omega_l = 0` removes the Larmor term everywhere in the crate
//! (spectrum, decay laws, trajectories); this is the suppressed-Larmor mode
//! used for the pure-dephasing checks.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{Constants, GAMMA_E};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Relative weight of the Larmor peak against the zero-frequency peak.
pub const LARMOR_WEIGHT: f64 = 5.0 / 9.0;

/// Largest depth [`depth_from_brms`] will return, nm.
pub const DEFAULT_MAX_DEPTH: f64 = 1.0e4;

/// On-site disorder parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Disorder width W, rad/us.
    pub w: f64,
    /// Correlation time tau, us.
    pub tau: f64,
    /// Proton Larmor angular frequency, rad/us. Zero disables the Larmor term.
    pub omega_l: f64,
}

impl NoiseModel {
    pub fn new(w: f64, tau: f64, omega_l: f64) -> Result<Self> {
        let m = Self { w, tau, omega_l };
        m.validate()?;
        Ok(m)
    }

    /// A model without any noise.
    pub fn quiet() -> Self {
        Self {
            w: 0.0,
            tau: 1.0,
            omega_l: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(Error::config(format!("W must be >= 0, got {}", self.w)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.omega_l >= 0.0) || !self.omega_l.is_finite() {
            return Err(Error::config(format!(
                "omega_L must be >= 0, got {}",
                self.omega_l
            )));
        }
        Ok(())
    }

    pub fn has_larmor(&self) -> bool {
        self.omega_l > 0.0
    }

    pub fn is_silent(&self) -> bool {
        self.w == 0.0
    }
}

fn lorentzian(omega: f64, tau: f64) -> f64 {
    tau / (omega * omega * tau * tau + 1.0)
}

/// Magnetic noise spectrum V(omega) in G^2 us.
pub fn spectral_density(model: &NoiseModel, omega: f64) -> f64 {
    spectral_density_with(&Constants::default(), model, omega)
}

pub fn spectral_density_with(consts: &Constants, model: &NoiseModel, omega: f64) -> f64 {
    let scale = 2.0 * model.w * model.w / (consts.gamma_e * consts.gamma_e);
    let mut v = lorentzian(omega, model.tau);
    if model.has_larmor() {
        v += LARMOR_WEIGHT * lorentzian(omega - model.omega_l, model.tau);
    }
    scale * v
}

/// Spectrum of the real-valued detuning process, in (rad/us)^2 us.
///
/// Equals `gamma_e^2 V(omega)` for the zero-frequency term; the one-sided
/// Larmor term is split evenly between `+omega_L` and `-omega_L`. Filter
/// integrals over the whole line are identical for the two forms because
/// every filter function is even in `omega`.
pub fn detuning_spectrum(model: &NoiseModel, omega: f64) -> f64 {
    let scale = 2.0 * model.w * model.w;
    let mut v = lorentzian(omega, model.tau);
    if model.has_larmor() {
        v += 0.5
            * LARMOR_WEIGHT
            * (lorentzian(omega - model.omega_l, model.tau)
                + lorentzian(omega + model.omega_l, model.tau));
    }
    scale * v
}

/// Total detuning variance carried by the spectrum, (rad/us)^2.
pub fn total_variance(model: &NoiseModel) -> f64 {
    let larmor = if model.has_larmor() {
        LARMOR_WEIGHT
    } else {
        0.0
    };
    model.w * model.w * (1.0 + larmor)
}

/// Proton-layer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Protons in a plane a distance `depth` above the spin.
    TwoDLayer,
    /// Protons filling the half space above the surface.
    HalfSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldComponent {
    /// From moment components along the field (zero-frequency noise).
    Longitudinal,
    /// From precessing transverse moments (Larmor noise).
    Transverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub kind: LayerKind,
    /// Depth d, nm.
    pub depth: f64,
    /// nm^-2 for a 2D layer, nm^-3 for a half space.
    pub proton_density: f64,
    #[serde(default = "half")]
    pub spin_quantum: f64,
}

fn half() -> f64 {
    0.5
}

impl LayerGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0) {
            return Err(Error::config("depth must be positive"));
        }
        if !(self.proton_density > 0.0) {
            return Err(Error::config("proton density must be positive"));
        }
        if !(self.spin_quantum > 0.0) {
            return Err(Error::config("spin quantum number must be positive"));
        }
        Ok(())
    }
}

// Coefficient c and exponent p of B_rms^2 = c m_n^2 rho / d^p.
fn geometry_law(kind: LayerKind, component: FieldComponent) -> (f64, i32) {
    match (kind, component) {
        (LayerKind::TwoDLayer, FieldComponent::Longitudinal) => (3.0 * PI / 8.0, 4),
        (LayerKind::TwoDLayer, FieldComponent::Transverse) => (5.0 * PI / 24.0, 4),
        (LayerKind::HalfSpace, FieldComponent::Longitudinal) => (PI / 8.0, 3),
        (LayerKind::HalfSpace, FieldComponent::Transverse) => (5.0 * PI / 72.0, 3),
    }
}

fn moment_squared(consts: &Constants, spin_quantum: f64) -> f64 {
    let m = consts.gamma_n * consts.hbar;
    m * m * spin_quantum * (spin_quantum + 1.0)
}

/// Mean-square field from the proton bath at the spin, G^2.
pub fn brms_squared(geom: &LayerGeometry, component: FieldComponent) -> Result<f64> {
    brms_squared_with(&Constants::default(), geom, component)
}

pub fn brms_squared_with(
    consts: &Constants,
    geom: &LayerGeometry,
    component: FieldComponent,
) -> Result<f64> {
    geom.validate()?;
    let (c, p) = geometry_law(geom.kind, component);
    Ok(c * moment_squared(consts, geom.spin_quantum) * geom.proton_density / geom.depth.powi(p))
}

/// Invert [`brms_squared`] for the depth, nm.
pub fn depth_from_brms(
    brms: f64,
    kind: LayerKind,
    proton_density: f64,
    component: FieldComponent,
) -> Result<f64> {
    depth_from_brms_with(
        &Constants::default(),
        brms,
        kind,
        proton_density,
        component,
        0.5,
        DEFAULT_MAX_DEPTH,
    )
}

pub fn depth_from_brms_with(
    consts: &Constants,
    brms: f64,
    kind: LayerKind,
    proton_density: f64,
    component: FieldComponent,
    spin_quantum: f64,
    max_depth: f64,
) -> Result<f64> {
    if !(brms > 0.0) || !brms.is_finite() {
        return Err(Error::domain(format!("B_rms must be positive, got {brms}")));
    }
    if !(proton_density > 0.0) {
        return Err(Error::config("proton density must be positive"));
    }
    let (c, p) = geometry_law(kind, component);
    let numerator = c * moment_squared(consts, spin_quantum) * proton_density;
    let depth = (numerator / (brms * brms)).powf(1.0 / p as f64);
    if !depth.is_finite() || depth > max_depth {
        return Err(Error::domain(format!(
            "B_rms = {brms:e} G implies a depth beyond the {max_depth} nm limit"
        )));
    }
    Ok(depth)
}

/// Convert a field rms in G to a detuning width in rad/us.
pub fn width_from_brms(brms: f64) -> f64 {
    GAMMA_E * brms
}

/// Sampled on-site detuning `delta(t)`, rad/us, held constant over each
/// interval `[k dt, (k+1) dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
}

impl NoiseTrajectory {
    pub fn zeros(dt: f64, duration: f64) -> Self {
        let n = step_count(dt, duration);
        Self {
            dt,
            samples: vec![0.0; n],
            seed: 0,
        }
    }

    /// Time span covered by the samples.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    /// Held value at time `t` (clamped to the last sample).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = ((t / self.dt).floor().max(0.0) as usize).min(self.samples.len().saturating_sub(1));
        self.samples.get(k).copied().unwrap_or(0.0)
    }

    /// CSV with header `time_us,delta_rad_per_us`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_us", "delta_rad_per_us"])?;
        for (t, v) in self.times().zip(&self.samples) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn step_count(dt: f64, duration: f64) -> usize {
    ((duration / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Largest sample spacing accepted by [`generate_trajectory`] for `model`.
pub fn max_time_step(model: &NoiseModel) -> f64 {
    let fastest = model.omega_l.max(model.w);
    let spectral = if fastest > 0.0 {
        2.0 * PI / (10.0 * fastest)
    } else {
        f64::INFINITY
    };
    (model.tau / 10.0).min(spectral)
}

/// Exact discrete update for a stationary OU process with variance `var`.
struct OrnsteinUhlenbeck {
    decay: f64,
    kick: f64,
    value: f64,
}

impl OrnsteinUhlenbeck {
    fn new<R: rand::Rng>(var: f64, tau: f64, dt: f64, rng: &mut R) -> Self {
        let sigma = var.sqrt();
        let decay = (-dt / tau).exp();
        let kick = sigma * (1.0 - decay * decay).sqrt();
        let x0: f64 = StandardNormal.sample(rng);
        Self {
            decay,
            kick,
            value: sigma * x0,
        }
    }

    fn step<R: rand::Rng>(&mut self, rng: &mut R) -> f64 {
        let xi: f64 = StandardNormal.sample(rng);
        self.value = self.value * self.decay + self.kick * xi;
        self.value
    }
}

/// Generate a detuning trajectory for `model` over `duration`.
///
/// The zero-frequency part is an OU process of variance `W^2`. The Larmor
/// part is `a(t) cos(omega_L t) + b(t) sin(omega_L t)` with independent OU
/// quadratures `a, b` of variance `(5/9) W^2` and the same `tau`, giving a
/// stationary Gaussian process with correlation
/// `(5/9) W^2 exp(-|t|/tau) cos(omega_L t)` and a uniformly distributed,
/// slowly drifting phase.
pub fn generate_trajectory(
    model: &NoiseModel,
    dt: f64,
    duration: f64,
    seed: u64,
) -> Result<NoiseTrajectory> {
    model.validate()?;
    if !(dt > 0.0) || !(duration >= 0.0) {
        return Err(Error::config(
            "dt must be positive and duration non-negative",
        ));
    }
    let limit = max_time_step(model);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "dt = {dt} us exceeds the resolution limit {limit:.4e} us \
             (tau/10 and 2 pi/(10 max(omega_L, W)))"
        )));
    }
    let n = step_count(dt, duration);
    if model.is_silent() {
        return Ok(NoiseTrajectory {
            dt,
            samples: vec![0.0; n],
            seed,
        });
    }
    let mut rng = rng_from_seed(seed);
    let var = model.w * model.w;
    let mut slow = OrnsteinUhlenbeck::new(var, model.tau, dt, &mut rng);
    let mut larmor = model.has_larmor().then(|| {
        let v = LARMOR_WEIGHT * var;
        (
            OrnsteinUhlenbeck::new(v, model.tau, dt, &mut rng),
            OrnsteinUhlenbeck::new(v, model.tau, dt, &mut rng),
        )
    });
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = if k == 0 {
            slow.value
        } else {
            slow.step(&mut rng)
        };
        if let Some((a, b)) = larmor.as_mut() {
            let (av, bv) = if k == 0 {
                (a.value, b.value)
            } else {
                (a.step(&mut rng), b.step(&mut rng))
            };
            let phase = model.omega_l * k as f64 * dt;
            v += av * phase.cos() + bv * phase.sin();
        }
        samples.push(v);
    }
    Ok(NoiseTrajectory { dt, samples, seed })
}

//! Spin-ensemble geometry and dipolar coupling arithmetic.
//!
//! Surface spins live in the `z = 0` plane. The central spin sits at the
//! origin; bath spins are drawn uniformly over an annulus `[r0, R]` whose
//! outer radius is fixed by the requested count and areal density. Coupling
//! angles are measured between the in-plane separation vector and the
//! external field direction, which defaults to `[1, 1, 1]/sqrt 3`.

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::constants::{Constants, J0};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest sampling disc accepted by [`sample_ensemble`], in nm.
pub const DEFAULT_MAX_RADIUS: f64 = 10_000.0;

/// Default exclusion radius around the central spin, nm.
pub const DEFAULT_MIN_RADIUS: f64 = 2.0;

/// Signed dipolar coupling `J0 (1 - 3 cos^2 theta) / r^3` in rad/us.
pub fn coupling_strength(r: f64, theta: f64) -> Result<f64> {
    coupling_strength_with(J0, r, theta)
}

pub fn coupling_strength_with(j0: f64, r: f64, theta: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("distance must be positive, got {r}")));
    }
    let c = theta.cos();
    Ok(j0 * (1.0 - 3.0 * c * c) / (r * r * r))
}

/// Coupling between two in-plane positions for a unit field direction.
pub fn pair_coupling(j0: f64, a: [f64; 2], b: [f64; 2], field: [f64; 3]) -> Result<f64> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let r = d[0].hypot(d[1]);
    if !(r > 0.0) {
        return Err(Error::domain("coincident spins have no defined coupling"));
    }
    let cos_theta = (d[0] * field[0] + d[1] * field[1]) / r;
    Ok(j0 * (1.0 - 3.0 * cos_theta * cos_theta) / (r * r * r))
}

/// Unit field vector from a tilt off the surface normal and an azimuth.
pub fn field_direction(tilt: f64, azimuth: f64) -> [f64; 3] {
    [
        tilt.sin() * azimuth.cos(),
        tilt.sin() * azimuth.sin(),
        tilt.cos(),
    ]
}

fn default_tilt() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

fn default_azimuth() -> f64 {
    PI / 4.0
}

/// Central spin at the origin plus bath-spin positions on a plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinEnsemble {
    /// Bath-spin coordinates in nm relative to the central spin.
    pub positions: Vec<[f64; 2]>,
    /// Areal density, nm^-2.
    pub density: f64,
    /// Field tilt off the surface normal, rad.
    #[serde(default = "default_tilt")]
    pub quantization_axis_tilt: f64,
    /// Field azimuth in the surface plane, rad.
    #[serde(default = "default_azimuth")]
    pub field_azimuth: f64,
    pub min_radius: f64,
    pub seed: u64,
}

impl SpinEnsemble {
    pub fn field(&self) -> [f64; 3] {
        field_direction(self.quantization_axis_tilt, self.field_azimuth)
    }

    /// All spins including the central one (index 0, at the origin).
    pub fn all_positions(&self) -> Vec<[f64; 2]> {
        std::iter::once([0.0, 0.0])
            .chain(self.positions.iter().copied())
            .collect()
    }

    /// Couplings of the central spin to each bath spin.
    pub fn central_couplings(&self, consts: &Constants) -> Result<Vec<f64>> {
        let field = self.field();
        self.positions
            .iter()
            .map(|&p| pair_coupling(consts.j0, [0.0, 0.0], p, field))
            .collect()
    }

    /// Symmetric coupling matrix over all spins (central spin first).
    pub fn coupling_matrix(&self, consts: &Constants) -> Result<CouplingMatrix> {
        let pos = self.all_positions();
        let field = self.field();
        let n = pos.len();
        let mut m = CouplingMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, pair_coupling(consts.j0, pos[i], pos[j], field)?);
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) {
            return Err(Error::config("density must be positive"));
        }
        if !(self.min_radius > 0.0) {
            return Err(Error::config("min_radius must be positive"));
        }
        if let Some(p) = self
            .positions
            .iter()
            .find(|p| p[0].hypot(p[1]) < self.min_radius)
        {
            return Err(Error::config(format!(
                "bath spin at {p:?} lies inside the exclusion radius {}",
                self.min_radius
            )));
        }
        Ok(())
    }
}

/// Outer radius of the annulus holding `count` spins at `density`.
pub fn sampling_radius(density: f64, count: usize, min_radius: f64) -> f64 {
    (min_radius * min_radius + count as f64 / (PI * density)).sqrt()
}

/// Bath radius beyond which spins contribute less than `fraction` of
/// `sum 1/r^3` for a 2D layer: `r0 / fraction`.
pub fn coupling_sum_radius(min_radius: f64, fraction: f64) -> f64 {
    min_radius / fraction
}

/// Draw `count` bath spins uniformly over the annulus `[min_radius, R]`
/// that holds `count` spins on average at `density`.
pub fn sample_ensemble(
    density: f64,
    count: usize,
    min_radius: f64,
    seed: u64,
) -> Result<SpinEnsemble> {
    sample_ensemble_bounded(density, count, min_radius, seed, DEFAULT_MAX_RADIUS)
}

pub fn sample_ensemble_bounded(
    density: f64,
    count: usize,
    min_radius: f64,
    seed: u64,
    max_radius: f64,
) -> Result<SpinEnsemble> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::config(format!(
            "density must be positive, got {density}"
        )));
    }
    if count == 0 {
        return Err(Error::config("at least one bath spin is required"));
    }
    if !(min_radius > 0.0) {
        return Err(Error::config("min_radius must be positive"));
    }
    let outer = sampling_radius(density, count, min_radius);
    if outer > max_radius {
        return Err(Error::config(format!(
            "{count} spins at density {density} nm^-2 need a {outer:.1} nm disc, \
             beyond the {max_radius} nm limit"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let (r0sq, r1sq) = (min_radius * min_radius, outer * outer);
    let positions = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let phi = 2.0 * PI * rng.random::<f64>();
            let r = (r0sq + u * (r1sq - r0sq)).sqrt();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    Ok(SpinEnsemble {
        positions,
        density,
        quantization_axis_tilt: default_tilt(),
        field_azimuth: default_azimuth(),
        min_radius,
        seed,
    })
}

/// Dense symmetric matrix of pairwise couplings, rad/us.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Two-spin matrix with a single coupling.
    pub fn pair(j: f64) -> Self {
        let mut m = Self::zeros(2);
        m.set(0, 1, j);
        m
    }

    /// Build from a list of `(i, j, J_ij)` entries.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::zeros(n);
        for &(i, j, v) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::config(format!(
                    "invalid coupling index pair ({i}, {j})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::config("couplings must be finite"));
            }
            m.set(i, j, v);
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Upper-triangle entries `(i, j, J_ij)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| (i, j, self.get(i, j))))
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs().all(|(i, j, v)| self.get(j, i) == v)
    }
}

/// Pairwise and optional sensor couplings for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSet {
    pub couplings: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nv_couplings: Option<Vec<f64>>,
}

impl CouplingSet {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.couplings) || !self.nv_couplings.as_deref().map_or(true, finite) {
            return Err(Error::config("couplings must be finite"));
        }
        Ok(())
    }
}

/// Mean pair coupling scale `J0 n^{3/2}` of a 2D layer at density `n`.
pub fn mean_coupling(j0: f64, density: f64) -> f64 {
    j0 * density.powf(1.5)
}

/// Density matching a mean nearest-neighbor separation `a` (`n = 1/a^2`).
pub fn density_from_separation(a: f64) -> f64 {
    1.0 / (a * a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_angle_zeroes_coupling() {
        let theta = (1.0 / 3f64.sqrt()).acos();
        for r in [2.0, 5.0, 13.7] {
            assert!(coupling_strength(r, theta).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn in_plane_coupling_at_8_4_nm() {
        let j = coupling_strength(8.4, PI / 2.0).unwrap();
        assert!((j - 326.7 / 8.4f64.powi(3)).abs() < 1e-12);
        assert!((j - 0.551).abs() < 1e-3);
    }

    #[test]
    fn parallel_coupling_is_minus_twice() {
        let perp = coupling_strength(8.4, PI / 2.0).unwrap();
        let par = coupling_strength(8.4, 0.0).unwrap();
        assert!((par + 2.0 * perp).abs() < 1e-12);
        assert!((par + 1.102).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_positive_distance() {
        assert!(matches!(coupling_strength(0.0, 0.3), Err(Error::Domain(_))));
        assert!(matches!(
            coupling_strength(-1.0, 0.3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sign_pattern_around_magic_angle() {
        let m = (1.0 / 3f64.sqrt()).acos();
        for k in 1..200 {
            let theta = PI * k as f64 / 200.0;
            let j = coupling_strength(5.0, theta).unwrap();
            if (theta - m).abs() < 1e-9 || (theta - (PI - m)).abs() < 1e-9 {
                continue;
            }
            if theta > m && theta < PI - m {
                assert!(j > 0.0, "theta {theta}");
            } else {
                assert!(j < 0.0, "theta {theta}");
            }
        }
    }

    #[test]
    fn doubling_distance_divides_by_eight() {
        for theta in [0.0, 0.4, 1.2, 2.9] {
            let a = coupling_strength(3.3, theta).unwrap();
            let b = coupling_strength(6.6, theta).unwrap();
            assert!((a / 8.0 - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = 1.0 / (8.4 * 8.4);
        let a = sample_ensemble(d, 5, 2.0, 99).unwrap();
        let b = sample_ensemble(d, 5, 2.0, 99).unwrap();
        assert_eq!(a.positions.len(), 5);
        let bits = |e: &SpinEnsemble| {
            e.positions
                .iter()
                .flat_map(|p| [p[0].to_bits(), p[1].to_bits()])
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = sample_ensemble(d, 5, 2.0, 100).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn sampled_points_respect_exclusion() {
        let e = sample_ensemble(0.05, 2000, 2.0, 3).unwrap();
        assert!(e.positions.iter().all(|p| p[0].hypot(p[1]) >= 2.0));
        e.validate().unwrap();
    }

    #[test]
    fn oversized_disc_is_a_config_error() {
        let err = sample_ensemble_bounded(0.01, 100_000, 2.0, 1, 100.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn default_field_is_body_diagonal() {
        let e = sample_ensemble(0.01, 1, 2.0, 1).unwrap();
        let f = e.field();
        for c in f {
            assert!((c - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_matrix_is_symmetric_and_matches_central() {
        let e = sample_ensemble(0.02, 4, 2.0, 11).unwrap();
        let consts = Constants::default();
        let m = e.coupling_matrix(&consts).unwrap();
        assert!(m.is_symmetric());
        let central = e.central_couplings(&consts).unwrap();
        for (k, c) in central.iter().enumerate() {
            assert_eq!(m.get(0, k + 1), *c);
        }
    }

    #[test]
    fn ensemble_json_uses_documented_fields() {
        let e = sample_ensemble(0.02, 2, 2.0, 5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        for key in [
            "positions",
            "density",
            "quantization_axis_tilt",
            "min_radius",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: SpinEnsemble = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }
}

//! Physical constants and unit conventions.
//!
//! Unit system used throughout the crate:
//!
//! | quantity            | unit          |
//! |---------------------|---------------|
//! | time                | us            |
//! | rates, couplings    | rad/us        |
//! | length              | nm            |
//! | magnetic field      | G             |
//! | spectral density    | G^2 us        |
//!
//! Every rate quoted as "us^-1" is treated as an angular frequency, so that
//! products like `W t` are dimensionless phases.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Electron gyromagnetic ratio, 2 pi x 2.80 MHz/G, in rad/(us G).
pub const GAMMA_E: f64 = 2.0 * PI * 2.80;

/// Proton gyromagnetic ratio, 2 pi x 4.2577 kHz/G, in rad/(us G).
pub const GAMMA_N: f64 = 2.0 * PI * 4.2577e-3;

/// Dipolar coupling prefactor hbar gamma_e^2 (mu_0/4pi absorbed), nm^3 rad/us.
pub const J0: f64 = 326.7;

/// Reduced Planck constant in G^2 nm^3 us (CGS with nm and us).
///
/// With this value `GAMMA_N * HBAR` is the proton moment in G nm^3 and
/// `HBAR * GAMMA_E^2` reproduces [`J0`] to about 0.1%.
pub const HBAR: f64 = 1.054_571_817;

/// The magic angle arccos(1/sqrt 3), where the dipolar angular factor vanishes.
pub fn magic_angle() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

/// Constant set, overridable from a config file for unit-system experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub j0: f64,
    pub hbar: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            gamma_e: GAMMA_E,
            gamma_n: GAMMA_N,
            j0: J0,
            hbar: HBAR,
        }
    }
}

impl Constants {
    /// Proton Larmor angular frequency at field `b_gauss`.
    pub fn proton_larmor(&self, b_gauss: f64) -> f64 {
        self.gamma_n * b_gauss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_e_matches_quoted_value() {
        let quoted = 2.0 * PI * 2.80;
        assert!((GAMMA_E - quoted).abs() / quoted < 1e-3);
    }

    #[test]
    fn j0_matches_quoted_value() {
        assert!((J0 - 326.7).abs() / 326.7 < 5e-3);
    }

    #[test]
    fn hbar_gamma_squared_reproduces_j0() {
        let c = Constants::default();
        let derived = c.hbar * c.gamma_e * c.gamma_e;
        assert!((derived - c.j0).abs() / c.j0 < 5e-3, "derived {derived}");
    }

    #[test]
    fn proton_larmor_near_730_gauss() {
        // 730 G puts protons at about 3.11 MHz.
        let w = Constants::default().proton_larmor(730.0);
        assert!((w / (2.0 * PI) - 3.11).abs() < 0.01);
    }

    #[test]
    fn constants_roundtrip_json_with_partial_override() {
        let c: Constants = serde_json::from_str(r#"{"j0": 300.0}"#).unwrap();
        assert_eq!(c.j0, 300.0);
        assert_eq!(c.gamma_e, GAMMA_E);
    }
}

//! Shared inputs for the kernel benchmarks.

use spinrelax_core::cluster::ClusterTemplate;
use spinrelax_core::inference::{synthesize_joint, JointData, JointParams};
use spinrelax_core::noise::NoiseModel;

pub fn noise() -> NoiseModel {
    NoiseModel::new(4.40, 14.6, 2.0 * std::f64::consts::PI * 3.11).unwrap()
}

pub fn template(n_spins: usize) -> ClusterTemplate {
    ClusterTemplate {
        n_spins,
        noise: NoiseModel::new(1.0, 5.0, 0.0).unwrap(),
        ..ClusterTemplate::default()
    }
}

pub fn joint_data() -> JointData {
    synthesize_joint(&JointParams::default(), 0.02, 40, 3).unwrap()
}

//! Exact propagation of a central spin plus a few bath spins.
//!
//! The Hamiltonian in the rotating frame is
//!
//! ```text
//! H = sum_k delta_k(t) S^z_k
//!   + sum_{i<k} J_ik [S^z_i S^z_k - (S^x_i S^x_k + S^y_i S^y_k) / 2]
//!   + Omega sum_k S^y_k
//! ```
//!
//! with spin 0 the central spin. Basis state bit `k` set means spin `k` up.
//! Correlations are infinite-temperature traces over the full space, so the
//! only randomness is in positions and on-site noise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{magic_angle, Constants};
use crate::ensemble::{sample_ensemble, CouplingMatrix, DEFAULT_MIN_RADIUS};
use crate::error::{Error, Result};
use crate::noise::{generate_trajectory, max_time_step, NoiseModel, NoiseTrajectory};
use crate::rng::derive_seed;
use crate::sequence::{DecayCurve, SequenceKind};

pub const DEFAULT_MAX_SPINS: usize = 10;

type C = Complex64;
type Matrix = DMatrix<C>;
/// Single-spin operator in the (up, down) basis.
pub type Spinor = [[C; 2]; 2];

const I: C = C::new(0.0, 1.0);
const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Spin-1/2 operator `S^axis` as a 2x2 matrix.
pub fn spin_operator(axis: Axis) -> Spinor {
    let h = 0.5;
    match axis {
        Axis::X => [[ZERO, C::new(h, 0.0)], [C::new(h, 0.0), ZERO]],
        Axis::Y => [[ZERO, C::new(0.0, -h)], [C::new(0.0, h), ZERO]],
        Axis::Z => [[C::new(h, 0.0), ZERO], [ZERO, C::new(-h, 0.0)]],
    }
}

/// Rotation `exp(-i angle S^axis)`.
pub fn rotation(axis: Axis, angle: f64) -> Spinor {
    let c = C::new((angle / 2.0).cos(), 0.0);
    let s = (angle / 2.0).sin();
    let sigma = spin_operator(axis);
    let mut r = [[ZERO; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let id = if a == b { c } else { ZERO };
            r[a][b] = id - I * 2.0 * s * sigma[a][b];
        }
    }
    r
}

fn mul2(a: &Spinor, b: &Spinor) -> Spinor {
    let mut r = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

fn dagger2(a: &Spinor) -> Spinor {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

/// An instantaneous global rotation of all spins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub time: f64,
    pub axis: Axis,
    pub angle: f64,
}

impl Pulse {
    fn new(time: f64, axis: Axis, angle: f64) -> Self {
        Self { time, axis, angle }
    }

    pub fn matrix(&self) -> Spinor {
        rotation(self.axis, self.angle)
    }
}

/// Ideal pulse schedule for a sequence of total free evolution `t`.
///
/// MREV-8 in an echo is two MREV cycles of length `12 tau0` (`tau0 = t/24`)
/// around a `pi` pulse about `y`; its probe axis is `y` (see [`probe_axis`]).
pub fn pulse_schedule(kind: SequenceKind, t: f64) -> Result<Vec<Pulse>> {
    use Axis::{X, Y};
    Ok(match kind {
        SequenceKind::Ramsey | SequenceKind::FreeDecay => Vec::new(),
        SequenceKind::Echo => vec![Pulse::new(t / 2.0, X, PI)],
        SequenceKind::XY4 => [X, Y, X, Y]
            .iter()
            .enumerate()
            .map(|(k, &ax)| Pulse::new(t * (2 * k + 1) as f64 / 8.0, ax, PI))
            .collect(),
        SequenceKind::MREV8InEcho => {
            let tau0 = t / 24.0;
            let h = PI / 2.0;
            let cycle = [
                (1.0, X, -h),
                (2.0, Y, h),
                (4.0, Y, -h),
                (5.0, X, h),
                (7.0, X, h),
                (8.0, Y, h),
                (10.0, Y, -h),
                (11.0, X, -h),
            ];
            let mut p: Vec<Pulse> = cycle
                .iter()
                .map(|&(k, ax, a)| Pulse::new(k * tau0, ax, a))
                .collect();
            p.push(Pulse::new(12.0 * tau0, Y, PI));
            p.extend(
                cycle
                    .iter()
                    .map(|&(k, ax, a)| Pulse::new((12.0 + k) * tau0, ax, a)),
            );
            p
        }
        k => return Err(Error::UnsupportedKind(k)),
    })
}

/// A realized cluster: couplings, on-site noise and drive.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub couplings: CouplingMatrix,
    /// One trajectory per spin, or empty for a noiseless cluster.
    pub onsite: Vec<NoiseTrajectory>,
    /// Static detuning common to all spins, rad/us.
    pub static_detuning: f64,
    /// Resonant drive `Omega S^y` on all spins, rad/us.
    pub drive: f64,
    /// Drop flip-flop terms.
    pub ising_only: bool,
    pub max_spins: usize,
}

impl Cluster {
    pub fn new(couplings: CouplingMatrix, onsite: Vec<NoiseTrajectory>) -> Result<Self> {
        let c = Self {
            couplings,
            onsite,
            static_detuning: 0.0,
            drive: 0.0,
            ising_only: false,
            max_spins: DEFAULT_MAX_SPINS,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn noiseless(couplings: CouplingMatrix) -> Result<Self> {
        Self::new(couplings, Vec::new())
    }

    pub fn with_drive(mut self, omega: f64) -> Self {
        self.drive = omega;
        self
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.static_detuning = delta;
        self
    }

    pub fn with_ising_only(mut self, on: bool) -> Self {
        self.ising_only = on;
        self
    }

    pub fn n_spins(&self) -> usize {
        self.couplings.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_spins();
        if n == 0 {
            return Err(Error::config("a cluster needs at least one spin"));
        }
        if n > self.max_spins {
            return Err(Error::Capacity {
                requested: n,
                max: self.max_spins,
            });
        }
        if !self.couplings.is_symmetric() {
            return Err(Error::config("coupling matrix must be symmetric"));
        }
        if !(self.drive >= 0.0) {
            return Err(Error::config("drive must be >= 0"));
        }
        if !self.onsite.is_empty() {
            if self.onsite.len() != n {
                return Err(Error::config(format!(
                    "{} trajectories for {n} spins",
                    self.onsite.len()
                )));
            }
            let (dt, len) = (self.onsite[0].dt, self.onsite[0].samples.len());
            if self
                .onsite
                .iter()
                .any(|tr| tr.dt != dt || tr.samples.len() != len)
            {
                return Err(Error::config("trajectories must share dt and duration"));
            }
        }
        Ok(())
    }

    /// Time span covered by the on-site noise (infinite when noiseless).
    pub fn duration(&self) -> f64 {
        self.onsite
            .first()
            .map_or(f64::INFINITY, NoiseTrajectory::duration)
    }

    /// Evolution operator over `[0, t]` without pulses.
    pub fn propagate(&self, t: f64) -> Result<Propagator> {
        self.propagate_with_pulses(t, &[])
    }

    /// Evolution operator over `[0, t]` with ideal pulses at their times.
    pub fn propagate_with_pulses(&self, t: f64, pulses: &[Pulse]) -> Result<Propagator> {
        self.validate()?;
        let mut engine = Engine::new(self);
        engine.check_range(t)?;
        let mut u = Propagator::identity(self.n_spins());
        let mut now = 0.0;
        for p in pulses {
            engine.evolve(&mut u, now, p.time)?;
            u.apply_global(&p.matrix());
            now = p.time;
        }
        engine.evolve(&mut u, now, t)?;
        Ok(u)
    }
}

/// Evolution operator on the 2^N space.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub n_spins: usize,
    pub u: Matrix,
}

impl Propagator {
    pub fn identity(n_spins: usize) -> Self {
        let d = 1usize << n_spins;
        Self {
            n_spins,
            u: Matrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `max |(U^dag U - 1)_ij|`.
    pub fn unitarity_error(&self) -> f64 {
        let g = self.u.adjoint() * &self.u;
        let d = self.dim();
        let mut err: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { ONE } else { ZERO };
                err = err.max((g[(i, j)] - target).norm());
            }
        }
        err
    }

    /// Apply `R` to every spin: `U <- (R x ... x R) U`.
    pub fn apply_global(&mut self, r: &Spinor) {
        for q in 0..self.n_spins {
            self.apply_site(q, r);
        }
    }

    fn apply_site(&mut self, q: usize, r: &Spinor) {
        let mask = 1usize << q;
        let d = self.dim();
        for col in 0..d {
            for up in (0..d).filter(|a| a & mask != 0) {
                let dn = up & !mask;
                let (xu, xd) = (self.u[(up, col)], self.u[(dn, col)]);
                self.u[(up, col)] = r[0][0] * xu + r[0][1] * xd;
                self.u[(dn, col)] = r[1][0] * xu + r[1][1] * xd;
            }
        }
    }

    /// `(4 / 2^N) Re Tr[U^dag A U B]` for single-site operators `A` on
    /// `site_a` and `B` on `site_b`.
    pub fn correlation(&self, a: &Spinor, site_a: usize, b: &Spinor, site_b: usize) -> f64 {
        let d = self.dim();
        let (ma, mb) = (1usize << site_a, 1usize << site_b);
        let idx = |bit_set: bool| if bit_set { 0 } else { 1 };
        let mut acc = ZERO;
        // Tr[U^dag A U B] = sum_{j,k,l,i} conj(U_ji) A_jk U_kl B_li
        for i in 0..d {
            for l in [i & !mb, i | mb] {
                let bli = b[idx(l & mb != 0)][idx(i & mb != 0)];
                if bli == ZERO {
                    continue;
                }
                for k in 0..d {
                    let ukl = self.u[(k, l)];
                    if ukl == ZERO {
                        continue;
                    }
                    for j in [k & !ma, k | ma] {
                        let ajk = a[idx(j & ma != 0)][idx(k & ma != 0)];
                        if ajk != ZERO {
                            acc += self.u[(j, i)].conj() * ajk * ukl * bli;
                        }
                    }
                }
            }
        }
        4.0 * acc.re / d as f64
    }

    /// `4 <S^axis_j(t) S^axis_j(0)>` at infinite temperature.
    pub fn autocorrelation(&self, axis: Axis, site: usize) -> f64 {
        let s = spin_operator(axis);
        self.correlation(&s, site, &s, site)
    }

    /// Normalized autocorrelation of the total magnetization `sum_k S^z_k`.
    pub fn magnetization_correlation(&self) -> f64 {
        let d = self.dim();
        let m: Vec<f64> = (0..d)
            .map(|a| (2.0 * a.count_ones() as f64 - self.n_spins as f64) / 2.0)
            .collect();
        let mut num = 0.0;
        for a in 0..d {
            for b in 0..d {
                num += self.u[(a, b)].norm_sqr() * m[a] * m[b];
            }
        }
        num / m.iter().map(|x| x * x).sum::<f64>()
    }
}

struct Block {
    indices: Vec<usize>,
    base: Matrix,
    /// `S^z_k` value of each local basis state, per spin.
    sz: Vec<Vec<f64>>,
}

/// Precomputed structure for stepping a cluster.
struct Engine<'a> {
    cluster: &'a Cluster,
    blocks: Vec<Block>,
}

impl<'a> Engine<'a> {
    fn new(cluster: &'a Cluster) -> Self {
        let n = cluster.n_spins();
        let d = 1usize << n;
        let sz = |a: usize, k: usize| if a >> k & 1 == 1 { 0.5 } else { -0.5 };
        let groups: Vec<Vec<usize>> = if cluster.drive > 0.0 {
            vec![(0..d).collect()]
        } else {
            (0..=n)
                .map(|m| (0..d).filter(|a| a.count_ones() as usize == m).collect())
                .collect()
        };
        let blocks = groups
            .into_iter()
            .map(|indices| {
                let b = indices.len();
                let local = |a: usize| indices.binary_search(&a).ok();
                let mut base = Matrix::zeros(b, b);
                for (p, &a) in indices.iter().enumerate() {
                    let mut diag = 0.0;
                    for (i, k, j) in cluster.couplings.pairs() {
                        diag += j * sz(a, i) * sz(a, k);
                        if cluster.ising_only || j == 0.0 {
                            continue;
                        }
                        if (a >> i & 1) != (a >> k & 1) {
                            let flipped = a ^ (1 << i) ^ (1 << k);
                            if let Some(q) = local(flipped) {
                                base[(q, p)] += C::new(-j / 4.0, 0.0);
                            }
                        }
                    }
                    base[(p, p)] += C::new(diag, 0.0);
                    if cluster.drive > 0.0 {
                        // S^y|up> = (i/2)|down>, S^y|down> = (-i/2)|up>
                        for k in 0..n {
                            let flipped = a ^ (1 << k);
                            if let Some(q) = local(flipped) {
                                let amp = if a >> k & 1 == 1 { I * 0.5 } else { -I * 0.5 };
                                base[(q, p)] += amp * cluster.drive;
                            }
                        }
                    }
                }
                let sz = (0..n)
                    .map(|k| indices.iter().map(|&a| sz(a, k)).collect())
                    .collect();
                Block { indices, base, sz }
            })
            .collect();
        Self { cluster, blocks }
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let available = self.cluster.duration();
        if !(t >= 0.0) || t > available * (1.0 + 1e-12) {
            return Err(Error::Range {
                requested: t,
                available,
            });
        }
        Ok(())
    }

    fn detunings(&self, step: Option<usize>) -> Vec<f64> {
        let n = self.cluster.n_spins();
        let base = self.cluster.static_detuning;
        match step {
            None => vec![base; n],
            Some(k) => self
                .cluster
                .onsite
                .iter()
                .map(|tr| base + tr.samples[k.min(tr.samples.len() - 1)])
                .collect(),
        }
    }

    /// `U <- exp(-i H (t1 - t0)) U`, piecewise over noise samples.
    fn evolve(&mut self, u: &mut Propagator, t0: f64, t1: f64) -> Result<()> {
        if t1 < t0 {
            return Err(Error::config("pulse times must be non-decreasing"));
        }
        self.check_range(t1)?;
        if t1 == t0 {
            return Ok(());
        }
        let Some(first) = self.cluster.onsite.first() else {
            let deltas = self.detunings(None);
            self.step(u, &deltas, t1 - t0);
            return Ok(());
        };
        let dt = first.dt;
        let mut now = t0;
        while now < t1 {
            let k = (now / dt * (1.0 + 1e-12)).floor() as usize;
            let edge = ((k + 1) as f64 * dt).min(t1);
            let span = edge - now;
            if span > 1e-15 * dt.max(t1) {
                let deltas = self.detunings(Some(k));
                self.step(u, &deltas, span);
            }
            now = edge.max(now + 1e-15 * dt.max(1.0));
            if edge >= t1 {
                break;
            }
        }
        Ok(())
    }

    fn step(&self, u: &mut Propagator, deltas: &[f64], span: f64) {
        let d = u.dim();
        for block in &self.blocks {
            let b = block.indices.len();
            let mut h = block.base.clone();
            for p in 0..b {
                let shift: f64 = deltas.iter().zip(&block.sz).map(|(dk, z)| dk * z[p]).sum();
                h[(p, p)] += C::new(shift, 0.0);
            }
            let e = exp_hermitian(h, span);
            let mut rows = Matrix::zeros(b, d);
            for (p, &a) in block.indices.iter().enumerate() {
                rows.row_mut(p).copy_from(&u.u.row(a));
            }
            let out = e * rows;
            for (p, &a) in block.indices.iter().enumerate() {
                u.u.row_mut(a).copy_from(&out.row(p));
            }
        }
    }
}

/// `exp(-i H t)` for Hermitian `H`.
fn exp_hermitian(h: Matrix, t: f64) -> Matrix {
    let b = h.nrows();
    if b == 1 {
        return Matrix::from_element(1, 1, (-I * h[(0, 0)].re * t).exp());
    }
    let eig = SymmetricEigen::new(h);
    let v = eig.eigenvectors;
    let mut scaled = v.clone();
    for (c, lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = (-I * *lambda * t).exp();
        for r in 0..b {
            scaled[(r, c)] *= phase;
        }
    }
    scaled * v.adjoint()
}

/// Averaged correlation with per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub times: Vec<f64>,
    pub correlation: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_disorder: usize,
    pub seed: u64,
}

impl CorrelationResult {
    fn from_samples(times: &[f64], samples: Vec<Vec<f64>>, seed: u64) -> Self {
        let n = samples.len();
        let m = times.len();
        let mut mean = vec![0.0; m];
        for s in &samples {
            mean.iter_mut().zip(s).for_each(|(a, b)| *a += b / n as f64);
        }
        let stderr = (0..m)
            .map(|i| {
                if n < 2 {
                    return 0.0;
                }
                let var = samples
                    .iter()
                    .map(|s| (s[i] - mean[i]).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            })
            .collect();
        Self {
            times: times.to_vec(),
            correlation: mean,
            stderr,
            n_disorder: n,
            seed,
        }
    }

    pub fn to_curve(&self) -> DecayCurve {
        DecayCurve::unchecked(
            self.times.clone(),
            self.correlation.clone(),
            Some(self.stderr.clone()),
        )
    }
}

/// Recipe for building random cluster realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterTemplate {
    /// Central spin plus bath spins.
    pub n_spins: usize,
    /// Areal density, nm^-2.
    pub density: f64,
    pub min_radius: f64,
    pub noise: NoiseModel,
    /// Noise sample spacing; defaults to the resolution limit of `noise`.
    pub dt: Option<f64>,
    pub ising_only: bool,
    /// Fixed couplings; when set, positions are not sampled.
    pub couplings: Option<CouplingMatrix>,
    pub max_spins: usize,
    pub constants: Constants,
    pub field_tilt: f64,
    pub field_azimuth: f64,
}

impl Default for ClusterTemplate {
    fn default() -> Self {
        Self {
            n_spins: 6,
            density: 1.0 / (8.4 * 8.4),
            min_radius: DEFAULT_MIN_RADIUS,
            noise: NoiseModel::quiet(),
            dt: None,
            ising_only: false,
            couplings: None,
            max_spins: DEFAULT_MAX_SPINS,
            constants: Constants::default(),
            field_tilt: magic_angle(),
            field_azimuth: PI / 4.0,
        }
    }
}

impl ClusterTemplate {
    pub fn with_couplings(couplings: CouplingMatrix, noise: NoiseModel) -> Self {
        Self {
            n_spins: couplings.len(),
            couplings: Some(couplings),
            noise,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins == 0 {
            return Err(Error::config("n_spins must be >= 1"));
        }
        if self.n_spins > self.max_spins {
            return Err(Error::Capacity {
                requested: self.n_spins,
                max: self.max_spins,
            });
        }
        if let Some(c) = &self.couplings {
            if c.len() != self.n_spins {
                return Err(Error::config("coupling matrix size differs from n_spins"));
            }
        }
        self.noise.validate()
    }

    fn time_step(&self) -> f64 {
        self.dt.unwrap_or_else(|| max_time_step(&self.noise))
    }

    /// Build realization `r` covering `[0, duration]`.
    pub fn realize(&self, seed: u64, r: u64, duration: f64) -> Result<Cluster> {
        self.validate()?;
        let couplings = match &self.couplings {
            Some(c) => c.clone(),
            None if self.n_spins == 1 => CouplingMatrix::zeros(1),
            None => {
                let mut e = sample_ensemble(
                    self.density,
                    self.n_spins - 1,
                    self.min_radius,
                    derive_seed(seed, &[r, 0]),
                )?;
                e.quantization_axis_tilt = self.field_tilt;
                e.field_azimuth = self.field_azimuth;
                e.coupling_matrix(&self.constants)?
            }
        };
        let onsite = if self.noise.is_silent() {
            Vec::new()
        } else {
            let dt = self.time_step();
            (0..self.n_spins as u64)
                .map(|k| {
                    generate_trajectory(&self.noise, dt, duration, derive_seed(seed, &[r, 1 + k]))
                })
                .collect::<Result<_>>()?
        };
        let mut c = Cluster::new(couplings, onsite)?;
        c.max_spins = self.max_spins;
        c.ising_only = self.ising_only;
        Ok(c)
    }
}

fn check_grid(t_grid: &[f64], n_realizations: usize) -> Result<f64> {
    if n_realizations == 0 {
        return Err(Error::config("n_realizations must be >= 1"));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::config("times must be >= 0"));
    }
    Ok(t_grid.iter().copied().fold(0.0, f64::max))
}

fn run_realizations<F>(
    template: &ClusterTemplate,
    t_grid: &[f64],
    n_realizations: usize,
    seed: u64,
    per_realization: F,
) -> Result<CorrelationResult>
where
    F: Fn(Cluster) -> Result<Vec<f64>> + Sync,
{
    let t_max = check_grid(t_grid, n_realizations)?;
    template.validate()?;
    let duration = t_max.max(template.time_step().min(1.0));
    let samples = (0..n_realizations as u64)
        .into_par_iter()
        .map(|r| per_realization(template.realize(seed, r, duration)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationResult::from_samples(t_grid, samples, seed))
}

// Free evolution sampled along a grid in a single forward pass.
fn free_evolution_signal(cluster: &Cluster, t_grid: &[f64], axis: Axis) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..t_grid.len()).collect();
    order.sort_by(|&a, &b| t_grid[a].total_cmp(&t_grid[b]));
    let mut engine = Engine::new(cluster);
    let mut u = Propagator::identity(cluster.n_spins());
    let mut now = 0.0;
    let mut out = vec![0.0; t_grid.len()];
    for i in order {
        engine.evolve(&mut u, now, t_grid[i])?;
        now = t_grid[i];
        out[i] = u.autocorrelation(axis, 0);
    }
    Ok(out)
}

/// `4 <S^z_0(t) S^z_0(0)>` averaged over realizations.
pub fn sz_autocorrelation(
    template: &ClusterTemplate,
    t_grid: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    run_realizations(template, t_grid, n_realizations, seed, |c| {
        free_evolution_signal(&c, t_grid, Axis::Z)
    })
}

/// `4 <S^y_0(t) S^y_0(0)>` under a drive `Omega S^y` on all spins.
pub fn spin_lock_decay(
    template: &ClusterTemplate,
    omega: f64,
    t_grid: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    if !(omega >= 0.0) {
        return Err(Error::config("drive must be >= 0"));
    }
    run_realizations(template, t_grid, n_realizations, seed, |c| {
        free_evolution_signal(&c.with_drive(omega), t_grid, Axis::Y)
    })
}

/// Axis along which the central spin is prepared and read out.
pub fn probe_axis(kind: SequenceKind) -> Axis {
    match kind {
        SequenceKind::MREV8InEcho => Axis::Y,
        _ => Axis::X,
    }
}

/// Transverse signal of a single realization after `kind` of length `t`.
pub fn sequence_signal(cluster: &Cluster, kind: SequenceKind, t: f64) -> Result<f64> {
    let pulses = pulse_schedule(kind, t)?;
    let u = cluster.propagate_with_pulses(t, &pulses)?;
    // Readout observable: the probe carried through the ideal net rotation.
    let net = pulses
        .iter()
        .fold([[ONE, ZERO], [ZERO, ONE]], |acc, p| mul2(&p.matrix(), &acc));
    let probe = spin_operator(probe_axis(kind));
    let target = mul2(&mul2(&net, &probe), &dagger2(&net));
    Ok(u.correlation(&target, 0, &probe, 0))
}

/// Transverse sequence response averaged over realizations.
pub fn sequence_response(
    template: &ClusterTemplate,
    kind: SequenceKind,
    detuning: f64,
    t_grid: &[f64],
    n_realizations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    pulse_schedule(kind, 1.0)?;
    run_realizations(template, t_grid, n_realizations, seed, |c| {
        let c = c.with_detuning(detuning);
        t_grid
            .iter()
            .map(|&t| sequence_signal(&c, kind, t))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::two_spin_signal;

    fn pair(j: f64) -> Cluster {
        Cluster::noiseless(CouplingMatrix::pair(j)).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let c = pair(0.71);
        let u = c.propagate(0.0).unwrap();
        assert!(u.unitarity_error() < 1e-14);
        assert!((u.u.clone() - Matrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn single_spin_without_noise_keeps_sz() {
        let c = Cluster::noiseless(CouplingMatrix::zeros(1)).unwrap();
        for t in [0.0, 1.0, 10.0] {
            let u = c.propagate(t).unwrap();
            assert!((u.autocorrelation(Axis::Z, 0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn correlations_normalized_at_zero() {
        let u = Propagator::identity(3);
        for ax in [Axis::X, Axis::Y, Axis::Z] {
            assert!((u.autocorrelation(ax, 0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ramsey_single_spin_detuning() {
        let c = Cluster::noiseless(CouplingMatrix::zeros(1))
            .unwrap()
            .with_detuning(2.0);
        for t in [0.1, 0.7, 3.0] {
            let s = sequence_signal(&c, SequenceKind::Ramsey, t).unwrap();
            assert!((s - (2.0 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_refocuses_static_detuning() {
        let c = Cluster::noiseless(CouplingMatrix::zeros(1))
            .unwrap()
            .with_detuning(3.3);
        for kind in [
            SequenceKind::Echo,
            SequenceKind::XY4,
            SequenceKind::MREV8InEcho,
        ] {
            let s = sequence_signal(&c, kind, 1.7).unwrap();
            assert!((s - 1.0).abs() < 1e-10, "{kind}: {s}");
        }
    }

    #[test]
    fn two_spin_echo_matches_analytic() {
        let c = pair(0.71);
        for i in 0..50 {
            let t = i as f64 * 0.5;
            let s = sequence_signal(&c, SequenceKind::Echo, t).unwrap();
            assert!((s - two_spin_signal(0.71, t)).abs() < 1e-10, "t={t}: {s}");
        }
    }

    #[test]
    fn two_spin_flip_flop_oscillation() {
        let j = 0.9;
        let c = pair(j);
        let mut avg = 0.0;
        let n = 4000;
        for i in 0..n {
            let t = i as f64 * 0.05;
            let v = c.propagate(t).unwrap().autocorrelation(Axis::Z, 0);
            assert!((v - 0.5 * (1.0 + (j * t / 2.0).cos())).abs() < 1e-10);
            avg += v / n as f64;
        }
        assert!((avg - 0.5).abs() < 0.02);
    }

    #[test]
    fn ising_only_conserves_sz() {
        let m = CouplingMatrix::from_pairs(3, &[(0, 1, 0.8), (0, 2, -0.4), (1, 2, 0.3)]).unwrap();
        let c = Cluster::noiseless(m).unwrap().with_ising_only(true);
        for t in [0.5, 5.0, 50.0] {
            let v = c.propagate(t).unwrap().autocorrelation(Axis::Z, 0);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn total_magnetization_conserved() {
        let m =
            CouplingMatrix::from_pairs(4, &[(0, 1, 0.8), (0, 2, -0.4), (1, 3, 0.3), (2, 3, 1.1)])
                .unwrap();
        let c = Cluster::noiseless(m).unwrap();
        for t in [0.3, 3.0, 30.0] {
            let u = c.propagate(t).unwrap();
            assert!((u.magnetization_correlation() - 1.0).abs() < 1e-8);
            assert!(u.unitarity_error() < 1e-10);
        }
    }

    #[test]
    fn range_and_capacity_errors() {
        let noise = NoiseModel::new(1.0, 1.0, 0.0).unwrap();
        let tpl = ClusterTemplate {
            n_spins: 1,
            noise,
            ..ClusterTemplate::default()
        };
        let c = tpl.realize(1, 0, 2.0).unwrap();
        assert!(matches!(c.propagate(5.0), Err(Error::Range { .. })));
        let big = ClusterTemplate {
            n_spins: 11,
            ..ClusterTemplate::default()
        };
        assert!(matches!(
            sz_autocorrelation(&big, &[0.0, 1.0], 1, 0),
            Err(Error::Capacity {
                requested: 11,
                max: 10
            })
        ));
    }

    #[test]
    fn unsupported_sequence_kind() {
        let tpl = ClusterTemplate {
            n_spins: 1,
            ..ClusterTemplate::default()
        };
        assert!(matches!(
            sequence_response(&tpl, SequenceKind::DEER, 0.0, &[0.0], 1, 0),
            Err(Error::UnsupportedKind(_))
        ));
    }

    #[test]
    fn noisy_propagation_is_unitary() {
        let noise = NoiseModel::new(4.4, 14.6, 19.5).unwrap();
        let tpl = ClusterTemplate {
            n_spins: 4,
            noise,
            ..ClusterTemplate::default()
        };
        let c = tpl.realize(3, 0, 2.0).unwrap();
        let u = c.propagate(2.0).unwrap();
        assert!(u.unitarity_error() < 1e-9);
        let d = c.clone().with_drive(10.0).propagate(1.0).unwrap();
        assert!(d.unitarity_error() < 1e-9);
    }

    #[test]
    fn results_deterministic_per_seed() {
        let noise = NoiseModel::new(2.0, 5.0, 0.0).unwrap();
        let tpl = ClusterTemplate {
            n_spins: 3,
            noise,
            ..ClusterTemplate::default()
        };
        let grid = [0.0, 0.5, 1.0];
        let a = sz_autocorrelation(&tpl, &grid, 4, 9).unwrap();
        let b = sz_autocorrelation(&tpl, &grid, 4, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.correlation[0] - 1.0).abs() < 1e-12);
    }
}

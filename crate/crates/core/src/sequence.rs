//! Pulse sequences, filter functions and decoherence laws.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{detuning_spectrum, NoiseModel, LARMOR_WEIGHT};
use crate::numerics::{integrate, integrate_tail, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ramsey,
    Echo,
    #[serde(rename = "xy4")]
    XY4,
    #[serde(rename = "mrev8_in_echo")]
    MREV8InEcho,
    #[serde(rename = "deer")]
    DEER,
    SpinLock,
    FreeDecay,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 7] = [
        SequenceKind::Ramsey,
        SequenceKind::Echo,
        SequenceKind::XY4,
        SequenceKind::MREV8InEcho,
        SequenceKind::DEER,
        SequenceKind::SpinLock,
        SequenceKind::FreeDecay,
    ];

    /// Kinds with a scalar filter function.
    pub const FILTERED: [SequenceKind; 5] = [
        SequenceKind::Ramsey,
        SequenceKind::Echo,
        SequenceKind::XY4,
        SequenceKind::MREV8InEcho,
        SequenceKind::FreeDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::Ramsey => "ramsey",
            SequenceKind::Echo => "echo",
            SequenceKind::XY4 => "xy4",
            SequenceKind::MREV8InEcho => "mrev8_in_echo",
            SequenceKind::DEER => "deer",
            SequenceKind::SpinLock => "spin_lock",
            SequenceKind::FreeDecay => "free_decay",
        }
    }

    /// Number of pi-pulse equivalents of drive in one run of the sequence.
    pub fn pi_equivalents(self) -> f64 {
        match self {
            SequenceKind::Ramsey => 1.0,
            SequenceKind::Echo => 2.0,
            SequenceKind::XY4 => 5.0,
            SequenceKind::MREV8InEcho => 10.0,
            SequenceKind::DEER | SequenceKind::SpinLock | SequenceKind::FreeDecay => 0.0,
        }
    }

    // Divisor s such that the filter's slowest harmonic is sin(omega t / s).
    fn divisor(self) -> f64 {
        match self {
            SequenceKind::Ramsey | SequenceKind::FreeDecay => 2.0,
            SequenceKind::Echo => 4.0,
            SequenceKind::XY4 => 16.0,
            SequenceKind::MREV8InEcho => 24.0,
            SequenceKind::DEER | SequenceKind::SpinLock => 1.0,
        }
    }

    // Period of F(u) in u.
    fn period(self) -> f64 {
        match self {
            SequenceKind::XY4 => 32.0 * PI,
            SequenceKind::MREV8InEcho => 48.0 * PI,
            k => k.divisor() * PI,
        }
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match k.as_str() {
            "ramsey" => SequenceKind::Ramsey,
            "echo" | "hahn_echo" | "spin_echo" => SequenceKind::Echo,
            "xy4" | "xy_4" => SequenceKind::XY4,
            "mrev8" | "mrev_8" | "mrev8_in_echo" | "mrev" => SequenceKind::MREV8InEcho,
            "deer" => SequenceKind::DEER,
            "spin_lock" | "spinlock" | "t1rho" => SequenceKind::SpinLock,
            "free_decay" | "freedecay" | "fid" => SequenceKind::FreeDecay,
            _ => return Err(Error::config(format!("unknown sequence kind '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    /// Ramsey detuning, rad/us.
    #[serde(default)]
    pub detuning: f64,
    /// Spin-lock drive, rad/us.
    #[serde(default)]
    pub drive: f64,
    /// pi-pulse duration, us.
    #[serde(default)]
    pub pi_time: f64,
}

impl PulseSequence {
    pub fn new(kind: SequenceKind) -> Self {
        Self {
            kind,
            detuning: 0.0,
            drive: 0.0,
            pi_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi_time >= 0.0) {
            return Err(Error::config("pi_time must be >= 0"));
        }
        if !(self.drive >= 0.0) {
            return Err(Error::config("drive must be >= 0"));
        }
        if !self.detuning.is_finite() {
            return Err(Error::config("detuning must be finite"));
        }
        Ok(())
    }
}

/// Magnitude bound accepted for normalized signal values.
pub const SIGNAL_BOUND: f64 = 1.05;

/// Sampled signal versus time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, sigmas: Option<Vec<f64>>) -> Result<Self> {
        let c = Self {
            times,
            values,
            sigmas,
        };
        c.validate()?;
        Ok(c)
    }

    /// A curve with unchecked values, for rescaled or model output.
    pub fn unchecked(times: Vec<f64>, values: Vec<f64>, sigmas: Option<Vec<f64>>) -> Self {
        Self {
            times,
            values,
            sigmas,
        }
    }

    pub fn from_fn(times: &[f64], f: impl Fn(f64) -> f64) -> Self {
        Self::unchecked(times.to_vec(), times.iter().map(|&t| f(t)).collect(), None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::data("times and values differ in length"));
        }
        if let Some(s) = &self.sigmas {
            if s.len() != self.times.len() {
                return Err(Error::data("sigmas and times differ in length"));
            }
            if s.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::data("sigmas must be finite and non-negative"));
            }
        }
        if self.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::data("times must be finite and non-negative"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("times must be strictly increasing"));
        }
        if self
            .values
            .iter()
            .any(|v| !v.is_finite() || v.abs() > SIGNAL_BOUND)
        {
            return Err(Error::data(format!(
                "signal values must lie in [-{SIGNAL_BOUND}, {SIGNAL_BOUND}]"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sigma(&self, i: usize) -> Option<f64> {
        self.sigmas.as_ref().map(|s| s[i])
    }

    /// Read CSV with columns `time_us,signal[,sigma]` (a `t_rescaled` time
    /// column is also accepted).
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
        let ti =
            col(&["time_us", "t_rescaled"]).ok_or_else(|| Error::data("missing time_us column"))?;
        let vi = col(&["signal"]).ok_or_else(|| Error::data("missing signal column"))?;
        let si = col(&["sigma"]);
        let (mut times, mut values, mut sigmas) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<f64>().map_err(|_| {
                    Error::data(format!(
                        "row {}: cannot parse '{raw}' as a number",
                        line + 2
                    ))
                })
            };
            times.push(field(ti)?);
            values.push(field(vi)?);
            if let Some(si) = si {
                if rec.get(si).is_some_and(|s| !s.is_empty()) {
                    sigmas.push(field(si)?);
                }
            }
        }
        if times.is_empty() {
            return Err(Error::data("curve has no rows"));
        }
        let sigmas = match sigmas.len() {
            0 => None,
            n if n == times.len() => Some(sigmas),
            _ => return Err(Error::data("sigma column is only partially filled")),
        };
        Self::new(times, values, sigmas)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_csv_with_time(out, "time_us")
    }

    /// Write with header `<time_header>,signal,sigma`; `sigma` is empty when absent.
    pub fn write_csv_with_time<W: Write>(&self, out: W, time_header: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([time_header, "signal", "sigma"])?;
        for i in 0..self.len() {
            let s = self.sigma(i).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([self.times[i].to_string(), self.values[i].to_string(), s])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn unsupported(kind: SequenceKind) -> Result<f64> {
    Err(Error::UnsupportedKind(kind))
}

/// F(u) with `u = omega t`.
pub fn filter_of_phase(kind: SequenceKind, u: f64) -> Result<f64> {
    Ok(match kind {
        SequenceKind::Ramsey | SequenceKind::FreeDecay => 2.0 * (u / 2.0).sin().powi(2),
        SequenceKind::Echo => 8.0 * (u / 4.0).sin().powi(4),
        SequenceKind::XY4 => {
            let c = (3.0 * u / 16.0).cos() + (5.0 * u / 16.0).cos();
            128.0 * (u / 16.0).sin().powi(6) * c * c
        }
        SequenceKind::MREV8InEcho => {
            let a = 1.0 + 2.0 * (u / 12.0).cos();
            let b = (u / 12.0).sin() - (u / 6.0).sin();
            let c = 3.0 - 4.0 * (u / 24.0).cos() + 3.0 * (u / 12.0).cos() - 2.0 * (u / 8.0).cos()
                + (u / 6.0).cos();
            16.0 * a * a * b.powi(4) * c
        }
        k => return unsupported(k),
    })
}

/// Filter function F(omega t).
pub fn filter_function(kind: SequenceKind, omega: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    filter_of_phase(kind, omega * t)
}

/// F(omega t) / omega^2, with its finite limit at `omega = 0`.
pub fn filter_weight(kind: SequenceKind, omega: f64, t: f64) -> Result<f64> {
    if omega == 0.0 {
        return match kind {
            SequenceKind::Ramsey | SequenceKind::FreeDecay => Ok(t * t / 2.0),
            SequenceKind::Echo | SequenceKind::XY4 | SequenceKind::MREV8InEcho => Ok(0.0),
            k => unsupported(k),
        };
    }
    Ok(filter_function(kind, omega, t)? / (omega * omega))
}

/// Coefficient c in the short-time law `chi = c W^2 t^3 / tau` of the
/// zero-frequency Lorentzian, i.e. `(2/pi) int_0^inf F(u)/u^4 du`.
pub fn cubic_coefficient(kind: SequenceKind) -> Result<f64> {
    match kind {
        SequenceKind::Echo => Ok(1.0 / 12.0),
        SequenceKind::XY4 => Ok(1.0 / 192.0),
        SequenceKind::MREV8InEcho => Ok(49.0 / 2592.0),
        // The Ramsey law carries the opposite sign of its t^3 term.
        SequenceKind::Ramsey | SequenceKind::FreeDecay => Ok(-1.0 / 6.0),
        k => unsupported(k),
    }
}

/// Treatment of the Larmor peak in [`chi_numeric_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LarmorTreatment {
    /// Analytic delta-function term `(5/9) W^2 F(omega_L t) / omega_L^2`.
    #[default]
    Delta,
    /// Integrate the Lorentzian peak numerically.
    Lorentzian,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ChiOptions {
    pub larmor: LarmorTreatment,
    pub quad: QuadOptions,
}

/// Mean of F(u) over one period.
pub fn filter_mean(kind: SequenceKind) -> Result<f64> {
    filter_of_phase(kind, 0.0)?;
    let p = kind.period();
    let opts = QuadOptions {
        rel_tol: 1e-10,
        ..QuadOptions::default()
    };
    let breaks: Vec<f64> = (1..16).map(|k| p * k as f64 / 16.0).collect();
    let v = integrate(
        |u| filter_of_phase(kind, u).unwrap_or(0.0),
        0.0,
        p,
        &breaks,
        opts,
    )?;
    Ok(v.value / p)
}

/// Decoherence exponent `chi(t) = gamma_e^2 int domega/2pi V F / omega^2`.
pub fn chi_numeric(kind: SequenceKind, t: f64, model: &NoiseModel) -> Result<f64> {
    chi_numeric_with(kind, t, model, ChiOptions::default())
}

pub fn chi_numeric_with(
    kind: SequenceKind,
    t: f64,
    model: &NoiseModel,
    opts: ChiOptions,
) -> Result<f64> {
    model.validate()?;
    filter_function(kind, 0.0, t)?;
    if t == 0.0 || model.is_silent() {
        return Ok(0.0);
    }
    let lorentz_larmor = opts.larmor == LarmorTreatment::Lorentzian && model.has_larmor();
    let spectrum = NoiseModel {
        omega_l: if lorentz_larmor { model.omega_l } else { 0.0 },
        ..*model
    };

    let s = kind.divisor();
    let mut cut = (20.0 / model.tau).max(20.0 * s / t);
    if model.has_larmor() {
        cut = cut.max(4.0 * model.omega_l);
    }

    // Symmetrized spectrum over omega >= 0: chi = (1/pi) int_0^inf S F/omega^2.
    let integrand =
        |w: f64| detuning_spectrum(&spectrum, w) * filter_weight(kind, w, t).unwrap_or(0.0) / PI;

    let mut breaks = Vec::new();
    let spacing = PI * s / t;
    let n_zeros = (cut / spacing).floor() as usize;
    let stride = n_zeros.div_ceil(2000).max(1);
    breaks.extend((1..=n_zeros).step_by(stride).map(|k| k as f64 * spacing));
    if lorentz_larmor {
        for d in [-4.0, -1.0, 0.0, 1.0, 4.0] {
            let w = model.omega_l + d / model.tau;
            if w > 0.0 && w < cut {
                breaks.push(w);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let body = integrate(integrand, 0.0, cut, &breaks, opts.quad)
        .map_err(|e| Error::numeric(format!("chi quadrature failed for {kind} at t = {t}: {e}")))?;
    let mean = filter_mean(kind)?;
    let tail = integrate_tail(
        |w| detuning_spectrum(&spectrum, w) / (w * w) / PI,
        cut,
        opts.quad,
    )?;
    let mut chi = body.value + mean * tail.value;
    if model.has_larmor() && !lorentz_larmor {
        chi += LARMOR_WEIGHT * model.w * model.w * filter_weight(kind, model.omega_l, t)?;
    }
    Ok(chi)
}

/// Factors making up a closed-form signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormDecay {
    pub signal: f64,
    /// Dipolar envelope exp(-(t/T2)^2), 1 when omitted.
    pub dipolar: f64,
    /// Nuclear-bath factor including the Larmor modulation.
    pub bath: f64,
    /// Detuning oscillation cos(Delta t), 1 when not applicable.
    pub oscillation: f64,
    /// False beyond `t = tau`, where the short-time expansion is unreliable.
    pub in_regime: bool,
}

/// Short-time decoherence exponent of the nuclear bath.
pub fn chi_closed(kind: SequenceKind, t: f64, model: &NoiseModel) -> Result<f64> {
    let w2 = model.w * model.w;
    let cubic = cubic_coefficient(kind)? * w2 * t.powi(3) / model.tau;
    let mut chi = match kind {
        SequenceKind::Ramsey | SequenceKind::FreeDecay => w2 * t * t / 2.0 + cubic,
        _ => cubic,
    };
    if model.has_larmor() {
        chi += LARMOR_WEIGHT * w2 * filter_weight(kind, model.omega_l, t)?;
    }
    Ok(chi)
}

/// Closed-form signal for `kind` at time `t`.
///
/// `t2_dipolar` may be infinite to drop the dipolar envelope; it is always
/// dropped for MREV-8, which decouples the dipolar interaction.
pub fn closed_form_decay(
    kind: SequenceKind,
    t: f64,
    model: &NoiseModel,
    t2_dipolar: f64,
    detuning: f64,
) -> Result<ClosedFormDecay> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    if !(t2_dipolar > 0.0) {
        return Err(Error::domain("T2 must be positive or infinite"));
    }
    let bath = (-chi_closed(kind, t, model)?).exp();
    let dipolar = match kind {
        SequenceKind::MREV8InEcho => 1.0,
        _ if t2_dipolar.is_infinite() => 1.0,
        _ => (-(t / t2_dipolar).powi(2)).exp(),
    };
    let oscillation = match kind {
        SequenceKind::Ramsey => (detuning * t).cos(),
        _ => 1.0,
    };
    Ok(ClosedFormDecay {
        signal: dipolar * bath * oscillation,
        dipolar,
        bath,
        oscillation,
        in_regime: t <= model.tau,
    })
}

pub fn closed_form_signal(
    kind: SequenceKind,
    t: f64,
    model: &NoiseModel,
    t2_dipolar: f64,
    detuning: f64,
) -> Result<f64> {
    closed_form_decay(kind, t, model, t2_dipolar, detuning).map(|d| d.signal)
}

/// Exact two-spin dipolar signal for Ramsey, echo and XY-4.
pub fn two_spin_signal(j1: f64, t: f64) -> f64 {
    0.5 * ((0.75 * j1 * t).cos() + (0.25 * j1 * t).cos())
}

/// DEER signal for NV couplings `k`.
pub fn deer_signal(couplings: &[f64], t: f64) -> f64 {
    0.5 * (1.0
        + couplings
            .iter()
            .map(|k| (k * t / 2.0).cos())
            .product::<f64>())
}

/// Free evolution time plus the drive time of the sequence's pulses.
pub fn finite_pulse_time(kind: SequenceKind, free_time: f64, pi_time: f64) -> f64 {
    finite_pulse_time_with(kind.pi_equivalents(), free_time, pi_time)
}

pub fn finite_pulse_time_with(pi_equivalents: f64, free_time: f64, pi_time: f64) -> f64 {
    free_time + pi_equivalents * pi_time
}

//! Problem constants: loading, validation, derived gains and the
//! learning-error curve fit.
//!
//! Scenario files are TOML. Every quantity is stored in linear SI units
//! internally. Quantities conventionally quoted in decibels may be given in
//! either form in the file:
//!
//! | key (linear)        | alternative                                 |
//! |---------------------|---------------------------------------------|
//! | `noise_w`           | `noise_dbm` (total receive noise power) or `noise_density_dbm_per_hz` (multiplied by the bandwidth) |
//! | `ref_gain`          | `ref_gain_db`                               |
//! | `si_coeff`          | `si_coeff_db`                               |
//! | `sensing_threshold` | `sensing_threshold_db`                      |
//!
//! Positions are `[x, y]` pairs. Each coordinate is either a number of meters
//! or a string with a `m`/`km` suffix such as `"1.7 km"`. Device indices in
//! `[[models]].devices` are 1-based.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub position: Point2,
    /// Uplink transmit power `p_k` in watts.
    pub power: f64,
    /// Samples stored at the device, `I_k`.
    pub samples: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// 0-based indices of the devices holding training data for this model.
    pub devices: Vec<usize>,
    /// Size of one training sample in bits, `D_m`.
    pub sample_bits: f64,
    /// Samples already available at the edge server, `A_m`.
    pub historical_samples: f64,
    pub error_coeff: f64,
    pub error_exp: f64,
}

/// Validated scenario. Construct through [`ScenarioConfig::from_toml_str`],
/// [`load_scenario`] or [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub altitude: f64,
    pub v_max: f64,
    pub period: f64,
    pub slot_len: f64,
    pub num_slots: usize,
    pub bandwidth: f64,
    /// Total receive noise power per antenna, `σ²`, in watts.
    pub noise_power: f64,
    /// Channel power gain at 1 m, `λ0`.
    pub ref_gain: f64,
    /// Radar cross-section `ξ` in m².
    pub rcs: f64,
    /// Self-interference power coefficient `α_SI`.
    pub si_coeff: f64,
    pub wavelength: f64,
    pub num_antennas: usize,
    pub depot: Point2,
    pub target: Point2,
    pub devices: Vec<Device>,
    pub models: Vec<ModelSpec>,
    pub uav_power_cap: f64,
    /// Linear radar SINR threshold `γ_th`.
    pub sensing_threshold: f64,
    /// Stopping tolerance on the change of the objective between iterations.
    pub bcd_tol: f64,
}

/// Gains that appear in every bound expression.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedConstants {
    /// `α_SI · N_a`
    pub lambda_si: f64,
    /// `λ0 · ξ · N_a`
    pub lambda_t: f64,
    /// `λ0 · p_k` per device.
    pub lambda_k: Vec<f64>,
}

pub fn derive_constants(cfg: &ScenarioConfig) -> DerivedConstants {
    let na = cfg.num_antennas as f64;
    DerivedConstants {
        lambda_si: cfg.si_coeff * na,
        lambda_t: cfg.ref_gain * cfg.rcs * na,
        lambda_k: cfg.devices.iter().map(|d| cfg.ref_gain * d.power).collect(),
    }
}

/// A validated config bundled with its derived gains. Dereferences to the
/// config.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub consts: DerivedConstants,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Scenario {
        let consts = derive_constants(&cfg);
        Scenario { cfg, consts }
    }
}

impl std::ops::Deref for Scenario {
    type Target = ScenarioConfig;

    fn deref(&self) -> &ScenarioConfig {
        &self.cfg
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) / 1000.0
}

impl ScenarioConfig {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    /// Model whose group contains device `k`.
    pub fn model_of(&self, k: usize) -> usize {
        self.models.iter().position(|m| m.devices.contains(&k)).expect("validated scenario partitions the devices")
    }

    /// Collectable bits at device `k`, `I_k · D_m`.
    pub fn data_cap(&self, k: usize) -> f64 {
        self.devices[k].samples * self.models[self.model_of(k)].sample_bits
    }

    /// Error of model `m` before any data is collected, `a_m · A_m^{-b_m}`.
    pub fn no_data_error(&self, m: usize) -> f64 {
        let model = &self.models[m];
        if model.error_exp == 0.0 {
            model.error_coeff
        } else if model.historical_samples == 0.0 {
            f64::INFINITY
        } else {
            model.error_coeff * model.historical_samples.powf(-model.error_exp)
        }
    }

    /// The same scenario with a different flight period; the slot length is
    /// kept and the slot count recomputed.
    pub fn with_period(&self, period: f64) -> Result<ScenarioConfig> {
        let mut cfg = self.clone();
        cfg.period = period;
        cfg.num_slots = (period / self.slot_len).round() as usize;
        cfg.validate()
    }

    pub fn with_sensing_threshold(&self, gamma_th: f64) -> Result<ScenarioConfig> {
        let mut cfg = self.clone();
        cfg.sensing_threshold = gamma_th;
        cfg.validate()
    }

    pub fn with_uav_power_cap(&self, cap: f64) -> Result<ScenarioConfig> {
        let mut cfg = self.clone();
        cfg.uav_power_cap = cap;
        cfg.validate()
    }

    /// Checks every invariant and returns the config unchanged on success.
    pub fn validate(self) -> Result<ScenarioConfig> {
        let positive = [
            ("altitude", self.altitude),
            ("v_max", self.v_max),
            ("period", self.period),
            ("slot_len", self.slot_len),
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("ref_gain", self.ref_gain),
            ("rcs", self.rcs),
            ("si_coeff", self.si_coeff),
            ("wavelength", self.wavelength),
            ("uav_power_cap", self.uav_power_cap),
            ("sensing_threshold", self.sensing_threshold),
            ("bcd_tol", self.bcd_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.num_antennas == 0 {
            return Err(Error::validation("num_antennas must be >= 1"));
        }
        if self.num_slots == 0 {
            return Err(Error::validation("period must span at least one slot"));
        }
        let span = self.slot_len * self.num_slots as f64;
        if (span - self.period).abs() > 1e-9 * self.period {
            return Err(Error::validation(format!(
                "slot_len * num_slots must equal period ({} * {} != {})",
                self.slot_len, self.num_slots, self.period
            )));
        }
        if self.devices.is_empty() {
            return Err(Error::validation("at least one device is required"));
        }
        for (k, d) in self.devices.iter().enumerate() {
            if !(d.power.is_finite() && d.power > 0.0) {
                return Err(Error::validation(format!("device {} power must be > 0", k + 1)));
            }
            if !(d.samples.is_finite() && d.samples >= 0.0) {
                return Err(Error::validation(format!("device {} samples must be >= 0", k + 1)));
            }
        }
        if self.models.is_empty() {
            return Err(Error::validation("at least one model is required"));
        }
        let mut owner = vec![None; self.devices.len()];
        for (m, model) in self.models.iter().enumerate() {
            if model.devices.is_empty() {
                return Err(Error::validation(format!("model {} has an empty device group", m + 1)));
            }
            for &k in &model.devices {
                let Some(slot) = owner.get_mut(k) else {
                    return Err(Error::validation(format!("model {} references unknown device {}", m + 1, k + 1)));
                };
                if let Some(prev) = *slot {
                    return Err(Error::validation(format!(
                        "device groups overlap: device {} is in models {} and {}",
                        k + 1,
                        prev + 1,
                        m + 1
                    )));
                }
                *slot = Some(m);
            }
            if !(model.sample_bits.is_finite() && model.sample_bits > 0.0) {
                return Err(Error::validation(format!("model {} sample_bits must be > 0", m + 1)));
            }
            for (name, v) in [
                ("historical_samples", model.historical_samples),
                ("error_coeff", model.error_coeff),
                ("error_exp", model.error_exp),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::validation(format!("model {} {name} must be >= 0", m + 1)));
                }
            }
        }
        if let Some(k) = owner.iter().position(Option::is_none) {
            return Err(Error::validation(format!(
                "device groups must cover every device; device {} is unassigned",
                k + 1
            )));
        }
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_config()
    }

    /// Serializes with linear units and positions in meters.
    pub fn to_toml_string(&self) -> String {
        let raw = RawScenario::from_config(self);
        toml::to_string(&raw).expect("scenario serializes")
    }

    /// Values used for the evaluation scenario: two models over five devices
    /// around a sensing target. `sensing_threshold` has no canonical value
    /// and must be supplied.
    pub fn reference(sensing_threshold: f64) -> ScenarioConfig {
        let km = |x: f64, y: f64| Point2::new(x * 1000.0, y * 1000.0);
        let positions = [km(2.2, 3.1), km(2.0, 2.9), km(2.2, 2.65), km(1.8, 3.1), km(1.7, 2.6)];
        let samples = [1500.0, 2800.0, 800.0, 800.0, 800.0];
        ScenarioConfig {
            altitude: 40.0,
            v_max: 60.0,
            period: 40.0,
            slot_len: 1.0,
            num_slots: 40,
            bandwidth: 0.2e6,
            noise_power: dbm_to_watts(-79.0),
            ref_gain: db_to_linear(-50.0),
            rcs: 20.0,
            si_coeff: db_to_linear(-110.0),
            wavelength: 0.09,
            num_antennas: 8,
            depot: km(1.7, 2.9),
            target: km(1.9, 2.8),
            devices: positions
                .iter()
                .zip(samples)
                .map(|(&position, samples)| Device { position, power: 0.01, samples })
                .collect(),
            models: vec![
                ModelSpec {
                    devices: vec![0, 1],
                    sample_bits: 24584.0,
                    historical_samples: 5120.0,
                    error_coeff: 25.03,
                    error_exp: 0.55,
                },
                ModelSpec {
                    devices: vec![2, 3, 4],
                    sample_bits: 6276.0,
                    historical_samples: 800.0,
                    error_coeff: 0.82,
                    error_exp: 0.22,
                },
            ],
            uav_power_cap: 0.04,
            sensing_threshold,
            bcd_tol: 1e-3,
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_toml_str(&text)
}

/// Least-squares fit of `error ≈ a · count^{-b}` in the log domain.
///
/// A positive regression slope (error growing with data) is clamped to
/// `b = 0`, in which case `a` is the geometric mean of the errors.
pub fn fit_error_surrogate(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::Degenerate("need at least two (count, error) pairs".into()));
    }
    for &(c, e) in pairs {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Degenerate(format!("sample count must be positive, got {c}")));
        }
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::Degenerate(format!("error must lie in (0, 1), got {e}")));
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::Degenerate("all sample counts are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Ok((my.exp(), 0.0));
    }
    let intercept = my - slope * mx;
    Ok((intercept.exp(), -slope))
}

// ---------------------------------------------------------------------------
// file schema

/// A coordinate in meters, written in the file as a number or a string with
/// a unit suffix.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Length(f64);

impl Serialize for Length {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Length;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a length in meters or a string such as \"1.7 km\"")
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Length, E> {
                Ok(Length(v))
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Length, E> {
                Ok(Length(v as f64))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Length, E> {
                Ok(Length(v as f64))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Length, E> {
                parse_length(v).map(Length).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

fn parse_length(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, factor) = if let Some(v) = s.strip_suffix("km") {
        (v, 1000.0)
    } else if let Some(v) = s.strip_suffix('m') {
        (v, 1.0)
    } else {
        (s, 1.0)
    };
    num.trim().parse::<f64>().map(|v| v * factor).map_err(|_| format!("cannot parse length {s:?}"))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    position: [Length; 2],
    power_w: f64,
    samples: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    devices: Vec<usize>,
    sample_bits: f64,
    historical_samples: f64,
    error_coeff: f64,
    error_exp: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    altitude: Length,
    v_max_mps: f64,
    period_s: f64,
    slot_len_s: f64,
    bandwidth_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_density_dbm_per_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_gain_db: Option<f64>,
    rcs_m2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    si_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    si_coeff_db: Option<f64>,
    wavelength_m: f64,
    num_antennas: usize,
    uav_power_cap_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensing_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensing_threshold_db: Option<f64>,
    #[serde(default = "default_bcd_tol")]
    bcd_tol: f64,
    depot: [Length; 2],
    target: [Length; 2],
    devices: Vec<RawDevice>,
    models: Vec<RawModel>,
}

fn default_bcd_tol() -> f64 {
    1e-3
}

fn one_of(name: &str, options: [(&str, Option<f64>); 3]) -> Result<f64> {
    let given: Vec<_> = options.iter().filter_map(|(k, v)| v.map(|v| (*k, v))).collect();
    match given.as_slice() {
        [(_, v)] => Ok(*v),
        [] => Err(Error::validation(format!(
            "missing {name}: give one of {}",
            options.iter().map(|o| o.0).filter(|k| !k.is_empty()).collect::<Vec<_>>().join(", ")
        ))),
        _ => Err(Error::validation(format!(
            "{name} given more than once ({})",
            given.iter().map(|g| g.0).collect::<Vec<_>>().join(", ")
        ))),
    }
}

impl RawScenario {
    fn into_config(self) -> Result<ScenarioConfig> {
        let noise_power = one_of(
            "noise power",
            [
                ("noise_w", self.noise_w),
                ("noise_dbm", self.noise_dbm.map(dbm_to_watts)),
                (
                    "noise_density_dbm_per_hz",
                    self.noise_density_dbm_per_hz.map(|d| dbm_to_watts(d) * self.bandwidth_hz),
                ),
            ],
        )?;
        let ref_gain = one_of(
            "reference gain",
            [("ref_gain", self.ref_gain), ("ref_gain_db", self.ref_gain_db.map(db_to_linear)), ("", None)],
        )?;
        let si_coeff = one_of(
            "self-interference coefficient",
            [("si_coeff", self.si_coeff), ("si_coeff_db", self.si_coeff_db.map(db_to_linear)), ("", None)],
        )?;
        let sensing_threshold = one_of(
            "sensing threshold",
            [
                ("sensing_threshold", self.sensing_threshold),
                ("sensing_threshold_db", self.sensing_threshold_db.map(db_to_linear)),
                ("", None),
            ],
        )?;
        if !(self.slot_len_s > 0.0 && self.period_s > 0.0) {
            return Err(Error::validation("period_s and slot_len_s must be > 0"));
        }
        let num_slots = (self.period_s / self.slot_len_s).round() as usize;
        let mut models = Vec::with_capacity(self.models.len());
        for (m, raw) in self.models.into_iter().enumerate() {
            let devices = raw
                .devices
                .iter()
                .map(|&k| {
                    k.checked_sub(1)
                        .ok_or_else(|| Error::validation(format!("model {}: device indices are 1-based", m + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            models.push(ModelSpec {
                devices,
                sample_bits: raw.sample_bits,
                historical_samples: raw.historical_samples,
                error_coeff: raw.error_coeff,
                error_exp: raw.error_exp,
            });
        }
        let point = |p: [Length; 2]| Point2::new(p[0].0, p[1].0);
        ScenarioConfig {
            altitude: self.altitude.0,
            v_max: self.v_max_mps,
            period: self.period_s,
            slot_len: self.slot_len_s,
            num_slots,
            bandwidth: self.bandwidth_hz,
            noise_power,
            ref_gain,
            rcs: self.rcs_m2,
            si_coeff,
            wavelength: self.wavelength_m,
            num_antennas: self.num_antennas,
            depot: point(self.depot),
            target: point(self.target),
            devices: self
                .devices
                .into_iter()
                .map(|d| Device { position: point(d.position), power: d.power_w, samples: d.samples })
                .collect(),
            models,
            uav_power_cap: self.uav_power_cap_w,
            sensing_threshold,
            bcd_tol: self.bcd_tol,
        }
        .validate()
    }

    fn from_config(cfg: &ScenarioConfig) -> RawScenario {
        let pair = |p: Point2| [Length(p.x), Length(p.y)];
        RawScenario {
            altitude: Length(cfg.altitude),
            v_max_mps: cfg.v_max,
            period_s: cfg.period,
            slot_len_s: cfg.slot_len,
            bandwidth_hz: cfg.bandwidth,
            noise_w: Some(cfg.noise_power),
            noise_dbm: None,
            noise_density_dbm_per_hz: None,
            ref_gain: Some(cfg.ref_gain),
            ref_gain_db: None,
            rcs_m2: cfg.rcs,
            si_coeff: Some(cfg.si_coeff),
            si_coeff_db: None,
            wavelength_m: cfg.wavelength,
            num_antennas: cfg.num_antennas,
            uav_power_cap_w: cfg.uav_power_cap,
            sensing_threshold: Some(cfg.sensing_threshold),
            sensing_threshold_db: None,
            bcd_tol: cfg.bcd_tol,
            depot: pair(cfg.depot),
            target: pair(cfg.target),
            devices: cfg
                .devices
                .iter()
                .map(|d| RawDevice { position: pair(d.position), power_w: d.power, samples: d.samples })
                .collect(),
            models: cfg
                .models
                .iter()
                .map(|m| RawModel {
                    devices: m.devices.iter().map(|k| k + 1).collect(),
                    sample_bits: m.sample_bits,
                    historical_samples: m.historical_samples,
                    error_coeff: m.error_coeff,
                    error_exp: m.error_exp,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const REFERENCE_TOML: &str = r#"
altitude = "40 m"
v_max_mps = 60
period_s = 40
slot_len_s = 1
bandwidth_hz = 0.2e6
noise_dbm = -79
ref_gain_db = -50
rcs_m2 = 20
si_coeff_db = -110
wavelength_m = 0.09
num_antennas = 8
uav_power_cap_w = 0.04
sensing_threshold = 1e-3
depot = ["1.7 km", "2.9 km"]
target = ["1.9 km", "2.8 km"]

[[devices]]
position = ["2.2 km", "3.1 km"]
power_w = 0.01
samples = 1500
[[devices]]
position = ["2.0 km", "2.9 km"]
power_w = 0.01
samples = 2800
[[devices]]
position = ["2.2 km", "2.65 km"]
power_w = 0.01
samples = 800
[[devices]]
position = ["1.8 km", "3.1 km"]
power_w = 0.01
samples = 800
[[devices]]
position = [1700, "2600 m"]
power_w = 0.01
samples = 800

[[models]]
devices = [1, 2]
sample_bits = 24584
historical_samples = 5120
error_coeff = 25.03
error_exp = 0.55
[[models]]
devices = [3, 4, 5]
sample_bits = 6276
historical_samples = 800
error_coeff = 0.82
error_exp = 0.22
"#;

    #[test]
    fn parses_reference_file() {
        let cfg = ScenarioConfig::from_toml_str(REFERENCE_TOML).unwrap();
        assert_eq!(cfg.num_devices(), 5);
        assert_eq!(cfg.num_models(), 2);
        assert_eq!(cfg.num_antennas, 8);
        assert_eq!(cfg.slot_len, 1.0);
        assert_eq!(cfg.num_slots, 40);
        assert_eq!(cfg.uav_power_cap, 0.04);
        assert!(cfg.devices.iter().all(|d| d.power == 0.01));
        assert_eq!(cfg.models[0].devices, vec![0, 1]);
        assert_eq!(cfg.models[1].devices, vec![2, 3, 4]);
        assert_eq!(cfg.models[0].sample_bits, 24584.0);
        assert_eq!(cfg.models[1].sample_bits, 6276.0);
        let samples: Vec<f64> = cfg.devices.iter().map(|d| d.samples).collect();
        assert_eq!(samples, vec![1500.0, 2800.0, 800.0, 800.0, 800.0]);
        assert_eq!(cfg.models[0].error_coeff, 25.03);
        assert_eq!(cfg.models[1].error_coeff, 0.82);
        assert_eq!(cfg.models[0].error_exp, 0.55);
        assert_eq!(cfg.models[1].error_exp, 0.22);
        assert_eq!(cfg.models[0].historical_samples, 5120.0);
        assert_eq!(cfg.models[1].historical_samples, 800.0);
        assert_eq!(cfg.depot, Point2::new(1700.0, 2900.0));
        assert_eq!(cfg.devices[4].position, Point2::new(1700.0, 2600.0));
        assert_relative_eq!(cfg.si_coeff, 1e-11, max_relative = 1e-12);
        assert_relative_eq!(cfg.noise_power, 1.2589254117941662e-11, max_relative = 1e-12);
        // matches the in-code reference scenario
        let reference = ScenarioConfig::reference(1e-3);
        assert_eq!(cfg.devices, reference.devices);
        assert_eq!(cfg.models, reference.models);
    }

    #[test]
    fn noise_density_is_scaled_by_bandwidth() {
        let text = REFERENCE_TOML.replace("noise_dbm = -79", "noise_density_dbm_per_hz = -132");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_relative_eq!(cfg.noise_power, dbm_to_watts(-132.0) * 0.2e6, max_relative = 1e-12);
    }

    #[test]
    fn duplicated_unit_variants_are_rejected() {
        let text = REFERENCE_TOML.replace("noise_dbm = -79", "noise_dbm = -79\nnoise_w = 1e-11");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("noise_dbm"), "{err}");
    }

    #[test]
    fn overlapping_groups_are_rejected() {
        let text = REFERENCE_TOML.replace("devices = [3, 4, 5]", "devices = [2, 3, 4, 5]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn uncovered_device_is_rejected() {
        let text = REFERENCE_TOML.replace("devices = [3, 4, 5]", "devices = [3, 4]");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("device 5"), "{err}");
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = REFERENCE_TOML.replace("rcs_m2 = 20", "rcs_m2 = 20\nrcs_typo = 3");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("rcs_typo"), "{err}");
    }

    #[test]
    fn fractional_slot_count_is_rejected() {
        let text = REFERENCE_TOML.replace("period_s = 40", "period_s = 40.5");
        assert!(ScenarioConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn derived_constants() {
        let cfg = ScenarioConfig::reference(1e-3);
        let d = derive_constants(&cfg);
        assert_relative_eq!(d.lambda_si, 8e-11, max_relative = 1e-12);
        assert_relative_eq!(d.lambda_t, 1.6e-3, max_relative = 1e-12);
        for l in &d.lambda_k {
            assert_relative_eq!(*l, 1e-7, max_relative = 1e-12);
        }
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let cfg = ScenarioConfig::from_toml_str(REFERENCE_TOML).unwrap();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn fit_recovers_noiseless_power_law() {
        let pairs: Vec<_> = [512.0, 1024.0, 5120.0].iter().map(|&c: &f64| (c, 25.03 * c.powf(-0.55))).collect();
        let (a, b) = fit_error_surrogate(&pairs).unwrap();
        assert_relative_eq!(a, 25.03, max_relative = 1e-9);
        assert_relative_eq!(b, 0.55, max_relative = 1e-9);
    }

    #[test]
    fn fit_constant_error_gives_zero_exponent() {
        let pairs = [(100.0, 0.3), (1000.0, 0.3), (5000.0, 0.3)];
        let (a, b) = fit_error_surrogate(&pairs).unwrap();
        assert_eq!(b, 0.0);
        assert_relative_eq!(a, 0.3, max_relative = 1e-12);
    }

    #[test]
    fn fit_rejects_equal_counts() {
        let pairs = [(100.0, 0.3), (100.0, 0.2)];
        assert!(matches!(fit_error_surrogate(&pairs), Err(Error::Degenerate(_))));
    }
}

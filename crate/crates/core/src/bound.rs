//! Closed-form SINR lower bounds, collected data, the learning-error
//! surrogate and the constraint audit.
//!
//! Per-slot arrays in a [`Decision`] have `N + 1` entries indexed by slot
//! `n = 0..=N`. Slot 0 is the departure instant: the UAV sits at the depot,
//! nobody transmits and its power entry is unused.

use serde::{Deserialize, Serialize};

use crate::exact;
use crate::geometry::{distance_sq, Point2};
use crate::scenario::Scenario;

/// Relative tolerance used by [`audit`] for its feasibility verdict.
pub const AUDIT_TOL: f64 = 1e-9;

/// One BCD state: time shares, trajectory, UAV power and the objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// `beta[k][n]`, fraction of slot `n` given to device `k`.
    pub beta: Vec<Vec<f64>>,
    pub trajectory: Vec<Point2>,
    /// UAV transmit power per slot in watts (`power[0]` unused).
    pub power: Vec<f64>,
    pub phi: f64,
}

impl Decision {
    /// UAV hovering at the depot with the given per-slot power and no uplink.
    pub fn hover(sc: &Scenario, power: f64) -> Decision {
        let n = sc.num_slots;
        let mut p = vec![power; n + 1];
        p[0] = 0.0;
        Decision {
            beta: vec![vec![0.0; n + 1]; sc.num_devices()],
            trajectory: vec![sc.depot; n + 1],
            power: p,
            phi: f64::NAN,
        }
    }

    pub fn num_slots(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// Which rate expression feeds data volumes and SINR checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateModel {
    /// Closed-form lower bounds.
    Bound,
    /// Array-level model of [`crate::exact`].
    Exact,
}

/// Interference term `(√λ_t d⁻²(q, t) + √λ_SI)²` multiplying the UAV power.
pub fn interference_gain(sc: &Scenario, q: Point2) -> f64 {
    let dt2 = distance_sq(q, sc.target, sc.altitude);
    let s = sc.consts.lambda_t.sqrt() / dt2 + sc.consts.lambda_si.sqrt();
    s * s
}

/// Received uplink power of device `k`, `λ_k d⁻²(q, l_k)`.
pub fn device_gain(sc: &Scenario, q: Point2, k: usize) -> f64 {
    sc.consts.lambda_k[k] / distance_sq(q, sc.devices[k].position, sc.altitude)
}

pub fn comm_sinr_lb(sc: &Scenario, q: Point2, power: f64, k: usize) -> f64 {
    device_gain(sc, q, k) / (interference_gain(sc, q) * power + sc.noise_power)
}

pub fn rate_from_sinr(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * sinr.ln_1p() / std::f64::consts::LN_2
}

/// Lower bound `R_k` on the achievable uplink rate in bits/s.
pub fn rate_lb(sc: &Scenario, q: Point2, power: f64, k: usize) -> f64 {
    rate_from_sinr(sc.bandwidth, comm_sinr_lb(sc, q, power, k))
}

/// Radar SINR bound with device `interferer` transmitting, or nobody.
pub fn radar_sinr(sc: &Scenario, q: Point2, power: f64, interferer: Option<usize>) -> f64 {
    let dt2 = distance_sq(q, sc.target, sc.altitude);
    let echo = sc.consts.lambda_t * power / (dt2 * dt2);
    let device = interferer.map_or(0.0, |k| device_gain(sc, q, k));
    echo / (device + sc.consts.lambda_si * power + sc.noise_power)
}

/// Radar SINR bound `γ^rad_k`; the device term is present iff `beta > 0`.
pub fn radar_sinr_lb(sc: &Scenario, q: Point2, power: f64, k: usize, beta: f64) -> f64 {
    radar_sinr(sc, q, power, (beta > 0.0).then_some(k))
}

fn rate(sc: &Scenario, q: Point2, power: f64, k: usize, model: RateModel) -> f64 {
    match model {
        RateModel::Bound => rate_lb(sc, q, power, k),
        RateModel::Exact => exact::exact_rate(sc, q, power, k),
    }
}

/// Bits uploaded by device `k` over the flight.
pub fn data_volume(sc: &Scenario, dec: &Decision, k: usize, model: RateModel) -> f64 {
    let n = dec.num_slots();
    let sum: f64 = (1..=n)
        .filter(|&s| dec.beta[k][s] != 0.0)
        .map(|s| dec.beta[k][s] * rate(sc, dec.trajectory[s], dec.power[s], k, model))
        .fold(0.0, |a, b| a + b);
    sc.slot_len * sum
}

/// Error surrogate of model `m` given the bits collected from each device.
pub fn error_from_bits(sc: &Scenario, m: usize, bits: &[f64]) -> f64 {
    let model = &sc.models[m];
    let samples: f64 =
        model.devices.iter().map(|&k| bits[k]).sum::<f64>() / model.sample_bits + model.historical_samples;
    if model.error_exp == 0.0 {
        model.error_coeff
    } else if samples <= 0.0 {
        f64::INFINITY
    } else {
        model.error_coeff * samples.powf(-model.error_exp)
    }
}

pub fn collected_bits(sc: &Scenario, dec: &Decision, model: RateModel) -> Vec<f64> {
    (0..sc.num_devices()).map(|k| data_volume(sc, dec, k, model)).collect()
}

/// Learning-error surrogate `Ψ_m` under the rate lower bounds.
pub fn error_surrogate(sc: &Scenario, dec: &Decision, m: usize) -> f64 {
    error_from_bits(sc, m, &collected_bits(sc, dec, RateModel::Bound))
}

pub fn eta_from_bits(sc: &Scenario, bits: &[f64]) -> f64 {
    (0..sc.num_models()).map(|m| error_from_bits(sc, m, bits)).fold(f64::NEG_INFINITY, f64::max)
}

/// Worst surrogate error over all models.
pub fn eta(sc: &Scenario, dec: &Decision) -> f64 {
    eta_from_bits(sc, &collected_bits(sc, dec, RateModel::Bound))
}

/// Same as [`eta`] but with exact rates and each device's contribution capped
/// at its stored data.
pub fn eta_exact(sc: &Scenario, dec: &Decision) -> f64 {
    let bits: Vec<f64> =
        collected_bits(sc, dec, RateModel::Exact).into_iter().enumerate().map(|(k, b)| b.min(sc.data_cap(k))).collect();
    eta_from_bits(sc, &bits)
}

/// Worst signed violation of one constraint family (positive = violated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub worst: f64,
    /// Magnitude the verdict tolerance is relative to.
    pub scale: f64,
    pub slot: Option<usize>,
    pub device: Option<usize>,
}

impl Violation {
    fn new(scale: f64) -> Self {
        Violation { worst: f64::NEG_INFINITY, scale, slot: None, device: None }
    }

    fn record(&mut self, value: f64, slot: Option<usize>, device: Option<usize>) {
        if value > self.worst || value.is_nan() {
            self.worst = value;
            self.slot = slot;
            self.device = device;
        }
    }

    pub fn satisfied(&self) -> bool {
        self.worst <= AUDIT_TOL * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub exact: bool,
    /// `0 ≤ β ≤ 1`, and `β = 0` at slot 0.
    pub time_share: Violation,
    /// `Σ_k β_{k,n} ≤ 1`.
    pub time_budget: Violation,
    /// Radar SINR threshold, in linear SINR units.
    pub radar: Violation,
    /// Collected bits against `I_k D_m`.
    pub data_availability: Violation,
    /// `0 ≤ p ≤ p_UAV`.
    pub power: Violation,
    /// Distance of the first and last waypoint from the depot, meters.
    pub endpoints: Violation,
    /// Step length in excess of `v_max δ`, meters.
    pub mobility: Violation,
    pub eta: f64,
    pub psi: Vec<f64>,
    pub eta_exact: f64,
    pub psi_exact: Vec<f64>,
    pub bits: Vec<f64>,
    pub bits_exact: Vec<f64>,
    /// Smallest radar SINR per slot `1..=N` over the transmitting devices.
    pub min_radar_sinr: Vec<f64>,
    pub feasible: bool,
}

impl AuditReport {
    pub fn families(&self) -> [(&'static str, &Violation); 7] {
        [
            ("time_share", &self.time_share),
            ("time_budget", &self.time_budget),
            ("radar", &self.radar),
            ("data_availability", &self.data_availability),
            ("power", &self.power),
            ("endpoints", &self.endpoints),
            ("mobility", &self.mobility),
        ]
    }

    /// Names of the violated constraint families.
    pub fn violated(&self) -> Vec<&'static str> {
        self.families().into_iter().filter(|(_, v)| !v.satisfied()).map(|(n, _)| n).collect()
    }
}

/// Evaluates every constraint of the relaxed problem (`exact = false`) or of
/// the original problem with array-level SINRs (`exact = true`).
pub fn audit(sc: &Scenario, dec: &Decision, exact: bool) -> AuditReport {
    let n_slots = sc.num_slots;
    let k_dev = sc.num_devices();
    assert_eq!(dec.trajectory.len(), n_slots + 1, "trajectory length");
    assert_eq!(dec.power.len(), n_slots + 1, "power length");
    assert_eq!(dec.beta.len(), k_dev, "beta rows");

    let mut time_share = Violation::new(1.0);
    let mut time_budget = Violation::new(1.0);
    let mut radar = Violation::new(sc.sensing_threshold);
    let mut power = Violation::new(sc.uav_power_cap);
    let mut min_radar = Vec::with_capacity(n_slots);

    for (k, row) in dec.beta.iter().enumerate() {
        assert_eq!(row.len(), n_slots + 1, "beta columns");
        time_share.record(row[0].abs(), Some(0), Some(k));
        for (n, &b) in row.iter().enumerate().skip(1) {
            time_share.record((-b).max(b - 1.0), Some(n), Some(k));
        }
    }
    for n in 1..=n_slots {
        let total: f64 = dec.beta.iter().map(|r| r[n]).sum();
        time_budget.record(total - 1.0, Some(n), None);

        let p = dec.power[n];
        power.record((p - sc.uav_power_cap).max(-p), Some(n), None);

        let q = dec.trajectory[n];
        let sinr = |who: Option<usize>| {
            if exact {
                exact::exact_radar_sinr(sc, q, p, who)
            } else {
                radar_sinr(sc, q, p, who)
            }
        };
        let mut worst = sinr(None);
        let mut worst_dev = None;
        for k in 0..k_dev {
            if dec.beta[k][n] > 0.0 {
                let s = sinr(Some(k));
                if s < worst {
                    worst = s;
                    worst_dev = Some(k);
                }
            }
        }
        radar.record(sc.sensing_threshold - worst, Some(n), worst_dev);
        min_radar.push(worst);
    }

    let bits = collected_bits(sc, dec, RateModel::Bound);
    let bits_exact = collected_bits(sc, dec, RateModel::Exact);
    let checked = if exact { &bits_exact } else { &bits };
    let max_cap = (0..k_dev).map(|k| sc.data_cap(k)).fold(0.0, f64::max).max(1.0);
    let mut data_availability = Violation::new(max_cap);
    for (k, &b) in checked.iter().enumerate() {
        data_availability.record(b - sc.data_cap(k), None, Some(k));
    }

    let step = sc.v_max * sc.slot_len;
    let mut endpoints = Violation::new(step);
    endpoints.record((dec.trajectory[0] - sc.depot).norm(), Some(0), None);
    endpoints.record((dec.trajectory[n_slots] - sc.depot).norm(), Some(n_slots), None);
    let mut mobility = Violation::new(step);
    for n in 1..=n_slots {
        mobility.record((dec.trajectory[n] - dec.trajectory[n - 1]).norm() - step, Some(n), None);
    }

    let psi: Vec<f64> = (0..sc.num_models()).map(|m| error_from_bits(sc, m, &bits)).collect();
    let capped: Vec<f64> = bits_exact.iter().enumerate().map(|(k, &b)| b.min(sc.data_cap(k))).collect();
    let psi_exact: Vec<f64> = (0..sc.num_models()).map(|m| error_from_bits(sc, m, &capped)).collect();
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut report = AuditReport {
        exact,
        time_share,
        time_budget,
        radar,
        data_availability,
        power,
        endpoints,
        mobility,
        eta: max(&psi),
        psi,
        eta_exact: max(&psi_exact),
        psi_exact,
        bits,
        bits_exact,
        min_radar_sinr: min_radar,
        feasible: false,
    };
    report.feasible = report.violated().is_empty();
    report
}

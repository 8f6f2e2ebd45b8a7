//! Array-level line-of-sight signal model.
//!
//! This is the reference against which the closed-form bounds in
//! [`crate::bound`] are checked. Everything is evaluated with explicit complex
//! arithmetic on `N_a`-element vectors, so it is only used for audits and
//! tests, never inside the optimization loop.
//!
//! Conventions:
//! * The steering vector toward ground point `g` is the conjugate of
//!   `[1, e^{jπc}, …, e^{jπ(N_a−1)c}]` with `c = H / d(q, g)`, so entry `i` is
//!   `e^{−jπ i c}`.
//! * The self-interference matrix maps the transmit vector to the receive
//!   array: row `r` is receive antenna `r`, column `p` is transmit antenna
//!   `p`, and the entry is `√α_SI · e^{j2π d_{p,r}/λ}` with
//!   `d_{p,r} = (λ/2)(N_a + r − p)` (1-based antenna numbers). With half-wave
//!   spacing the phase is `π(N_a + r − p)`, which is invariant under swapping
//!   the roles of `p` and `r`, so the matrix does not depend on the
//!   orientation choice.

use num_complex::Complex64;

use crate::geometry::{distance_sq, Point2};
use crate::scenario::Scenario;

pub type CVector = Vec<Complex64>;

/// Dense row-major complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        CMatrix { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> CVector {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.data[r * self.dim..(r + 1) * self.dim].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.dim, other.dim);
        CMatrix { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }
}

pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Uniform linear array geometry shared by the transmit and receive arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Spacing between transmit antenna `p` and receive antenna `q`
    /// (1-based), `(λ/2)(N_a + q − p)`.
    pub fn tx_rx_spacing(&self, p: usize, q: usize) -> f64 {
        self.wavelength / 2.0 * (self.num_antennas as f64 + q as f64 - p as f64)
    }
}

pub fn steering_vector(q: Point2, g: Point2, altitude: f64, num_antennas: usize) -> CVector {
    let c = altitude / distance_sq(q, g, altitude).sqrt();
    (0..num_antennas).map(|i| Complex64::from_polar(1.0, -std::f64::consts::PI * i as f64 * c)).collect()
}

/// Self-interference channel `H_SI`.
pub fn si_matrix(sc: &Scenario) -> CMatrix {
    let geo = ArrayGeometry { num_antennas: sc.num_antennas, wavelength: sc.wavelength };
    let na = sc.num_antennas;
    let amp = sc.si_coeff.sqrt();
    let mut m = CMatrix::zeros(na);
    for r in 0..na {
        for p in 0..na {
            let d = geo.tx_rx_spacing(p + 1, r + 1);
            let phase = 2.0 * std::f64::consts::PI * d / sc.wavelength;
            m.set(r, p, Complex64::from_polar(amp, phase));
        }
    }
    m
}

/// Round-trip radar channel `√(λ0 ξ d⁻⁴) · a aᴴ` toward the target.
pub fn radar_channel(sc: &Scenario, q: Point2) -> CMatrix {
    let a = steering_vector(q, sc.target, sc.altitude, sc.num_antennas);
    let d2 = distance_sq(q, sc.target, sc.altitude);
    let amp = (sc.ref_gain * sc.rcs / (d2 * d2)).sqrt();
    let na = sc.num_antennas;
    let mut m = CMatrix::zeros(na);
    for r in 0..na {
        for c in 0..na {
            m.set(r, c, a[r] * a[c].conj() * amp);
        }
    }
    m
}

/// Uplink channel of device `k`, `√(λ0 d⁻²) · a(q, l_k)`.
pub fn device_channel(sc: &Scenario, q: Point2, k: usize) -> CVector {
    let l = sc.devices[k].position;
    let amp = (sc.ref_gain / distance_sq(q, l, sc.altitude)).sqrt();
    steering_vector(q, l, sc.altitude, sc.num_antennas).into_iter().map(|z| z * amp).collect()
}

/// Sensing beam aimed at the target carrying the whole slot power.
pub fn transmit_beam(sc: &Scenario, q: Point2, power: f64) -> CVector {
    let s = (power / sc.num_antennas as f64).sqrt();
    steering_vector(q, sc.target, sc.altitude, sc.num_antennas).into_iter().map(|z| z * s).collect()
}

/// Interference-plus-noise power seen by the uplink receiver.
fn uplink_interference(sc: &Scenario, q: Point2, power: f64) -> f64 {
    let x = transmit_beam(sc, q, power);
    let total = radar_channel(sc, q).add(&si_matrix(sc));
    norm_sq(&total.mul_vec(&x)) + sc.num_antennas as f64 * sc.noise_power
}

/// Exact uplink SINR of device `k`.
pub fn exact_comm_sinr(sc: &Scenario, q: Point2, power: f64, k: usize) -> f64 {
    let signal = norm_sq(&device_channel(sc, q, k)) * sc.devices[k].power;
    signal / uplink_interference(sc, q, power)
}

pub fn exact_rate(sc: &Scenario, q: Point2, power: f64, k: usize) -> f64 {
    sc.bandwidth * (1.0 + exact_comm_sinr(sc, q, power, k)).log2()
}

/// Exact sensing-echo SINR, with device `active` transmitting in the slot
/// (or nobody).
pub fn exact_radar_sinr(sc: &Scenario, q: Point2, power: f64, active: Option<usize>) -> f64 {
    let x = transmit_beam(sc, q, power);
    let echo = norm_sq(&radar_channel(sc, q).mul_vec(&x));
    let si = norm_sq(&si_matrix(sc).mul_vec(&x));
    let device =
        active.map_or(0.0, |k| sc.ref_gain * sc.devices[k].power / distance_sq(q, sc.devices[k].position, sc.altitude));
    echo / (device + si + sc.num_antennas as f64 * sc.noise_power)
}

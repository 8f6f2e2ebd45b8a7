//! Trajectory block.
//!
//! Variables are the free waypoints `q_1 … q_{N−1}` (the first and last
//! waypoint stay at the depot), the device-distance proxies `e_{k,n}`, the
//! target-distance proxies `u_n` and the epigraph variable. Every non-convex
//! expression is replaced by a bound that is tight at the current trajectory:
//!
//! * radar SINR: quadratic transform with the target distance replaced by its
//!   concave Taylor bound and the device distance by the proxy `e`;
//! * rate in the error rows: quadratic transform again, with `u` standing in
//!   for the target distance inside the interference term;
//! * rate in the data caps: the inverse quadratic transform, an upper bound,
//!   so that respecting the cap on the surrogate respects it on the bound.

use serde::Serialize;

use crate::bound::Decision;
use crate::error::{Error, Result};
use crate::geometry::{distance_sq, Point2};
use crate::scenario::Scenario;

use super::problem::{
    Constraint, ConvexSubproblem, Family, PointRef, RateLower, RateUpper, SizeAccount, SubproblemKind, Term, VarBlock,
};
use super::{error_row, lift_phi, phi_box, throughput_row, BlockSubproblem, Objective};

/// Smallest value of the distance proxies.
pub const PROXY_FLOOR: f64 = 1e-6;

/// Multipliers of the surrogates, all evaluated at one decision.
///
/// Arrays are indexed `[k][n]` (or `[n]`) with slot 0 unused.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateCoefficients {
    /// Radar quadratic-transform multiplier.
    pub varphi: Vec<Vec<f64>>,
    /// Rate quadratic-transform multiplier.
    pub rho: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
    /// `(√λ_t d⁻²(q_n, t) + √λ_SI)²`.
    pub zeta: Vec<f64>,
    /// `λ_k d⁻²(q_n, l_k)`.
    pub kappa: Vec<Vec<f64>>,
}

pub fn surrogate_coefficients(sc: &Scenario, dec: &Decision) -> SurrogateCoefficients {
    let (k_dev, n_slots) = (sc.num_devices(), dec.num_slots());
    let c = &sc.consts;
    let mut out = SurrogateCoefficients {
        varphi: vec![vec![0.0; n_slots + 1]; k_dev],
        rho: vec![vec![0.0; n_slots + 1]; k_dev],
        mu: vec![vec![0.0; n_slots + 1]; k_dev],
        nu: vec![vec![0.0; n_slots + 1]; k_dev],
        zeta: vec![0.0; n_slots + 1],
        kappa: vec![vec![0.0; n_slots + 1]; k_dev],
    };
    for n in 1..=n_slots {
        let q = dec.trajectory[n];
        let p = dec.power[n];
        let dt = distance_sq(q, sc.target, sc.altitude);
        let zeta = (c.lambda_t.sqrt() / dt + c.lambda_si.sqrt()).powi(2);
        let psi = zeta * p + sc.noise_power;
        let echo = (c.lambda_t * p).sqrt() / dt;
        out.zeta[n] = zeta;
        for k in 0..k_dev {
            let r = c.lambda_k[k] / distance_sq(q, sc.devices[k].position, sc.altitude);
            let device = if dec.beta[k][n] > 0.0 { r } else { 0.0 };
            out.varphi[k][n] = echo / (device + c.lambda_si * p + sc.noise_power);
            out.rho[k][n] = r.sqrt() / psi;
            out.mu[k][n] = r / (r + psi);
            out.nu[k][n] = psi.sqrt() / r;
            out.kappa[k][n] = r;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct P5Options {
    /// Half-width of a box around each current waypoint.
    pub trust: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct P5 {
    problem: ConvexSubproblem,
    n_slots: usize,
    k_dev: usize,
    depot: Point2,
    phi: usize,
}

impl P5 {
    fn point(&self, n: usize) -> PointRef {
        point_ref(n, self.n_slots, self.depot)
    }

    pub fn e_index(&self, k: usize, n: usize) -> usize {
        2 * (self.n_slots - 1) + k * self.n_slots + (n - 1)
    }

    pub fn u_index(&self, n: usize) -> usize {
        2 * (self.n_slots - 1) + self.k_dev * self.n_slots + (n - 1)
    }
}

fn point_ref(n: usize, n_slots: usize, depot: Point2) -> PointRef {
    if n == 0 || n == n_slots {
        PointRef::Fixed(depot)
    } else {
        PointRef::Var(2 * (n - 1), 2 * (n - 1) + 1)
    }
}

/// Affine lower bound of `d²(q, g)` at `q_prev` as (coefficients on q, constant).
fn sq_lb_affine(qp: Point2, g: Point2, altitude: f64) -> (Point2, f64) {
    let w = (qp - g).scale(2.0);
    (w, distance_sq(qp, g, altitude) - w.dot(qp))
}

/// Row `proxy ≤ d̲_b(q, g)`.
fn proxy_row(family: Family, proxy: usize, q: PointRef, qp: Point2, g: Point2, altitude: f64) -> Constraint {
    let (w, c0) = sq_lb_affine(qp, g, altitude);
    let mut c = Constraint::new(family).with_scale(distance_sq(qp, g, altitude));
    c.linear.push((proxy, 1.0));
    c.constant = -c0;
    match q {
        PointRef::Var(i, j) => {
            c.linear.push((i, -w.x));
            c.linear.push((j, -w.y));
        }
        PointRef::Fixed(p) => c.constant -= w.dot(p),
    }
    c
}

pub fn build_p5(sc: &Scenario, dec: &Decision, objective: Objective, opts: P5Options) -> Result<P5> {
    let (k_dev, n_slots) = (sc.num_devices(), sc.num_slots);
    if n_slots == 0 {
        return Err(Error::Subproblem("no slots".into()));
    }
    let c = &sc.consts;
    let h2 = sc.altitude * sc.altitude;
    let coef = surrogate_coefficients(sc, dec);
    let q_len = 2 * (n_slots - 1);
    let dim = q_len + k_dev * n_slots + n_slots + 1;
    let mut p5 = P5 {
        problem: ConvexSubproblem {
            kind: SubproblemKind::P5,
            blocks: Vec::new(),
            lower: vec![PROXY_FLOOR; dim],
            upper: vec![f64::INFINITY; dim],
            objective: vec![(dim - 1, 1.0)],
            constraints: Vec::new(),
            size: SizeAccount::default(),
        },
        n_slots,
        k_dev,
        depot: sc.depot,
        phi: dim - 1,
    };
    let phi = p5.phi;
    // Redundant boxes implied by mobility keep the barrier's analytic center
    // close; without them the proxies drift toward infinity.
    let reach = |n: usize| sc.v_max * sc.slot_len * n.min(n_slots - n) as f64;
    let far_sq = |g: Point2, n: usize| {
        let r = (sc.depot - g).norm() + std::f64::consts::SQRT_2 * reach(n);
        h2 + r * r
    };
    for n in 1..n_slots {
        let qp = dec.trajectory[n];
        let half = opts.trust.unwrap_or(f64::INFINITY);
        for (i, v, d) in [(2 * (n - 1), qp.x, sc.depot.x), (2 * (n - 1) + 1, qp.y, sc.depot.y)] {
            p5.problem.lower[i] = (v - half).max(d - reach(n));
            p5.problem.upper[i] = (v + half).min(d + reach(n));
        }
    }
    for n in 1..=n_slots {
        for k in 0..k_dev {
            let i = p5.e_index(k, n);
            p5.problem.upper[i] = far_sq(sc.devices[k].position, n);
        }
        let i = p5.u_index(n);
        p5.problem.upper[i] = far_sq(sc.target, n);
    }
    (p5.problem.lower[phi], p5.problem.upper[phi]) = phi_box(sc, objective);

    let mut rows = Vec::new();
    // per-device (coefficient, term) lists for the error and cap rows
    let mut lower_terms: Vec<Vec<(f64, Term)>> = vec![Vec::new(); k_dev];
    let mut upper_terms: Vec<Vec<(f64, Term)>> = vec![Vec::new(); k_dev];

    for n in 1..=n_slots {
        let q = p5.point(n);
        let qp = dec.trajectory[n];
        let p = dec.power[n];
        let dt = distance_sq(qp, sc.target, sc.altitude);
        let echo = (c.lambda_t * p).sqrt();
        let base = c.lambda_si * p + sc.noise_power;
        let target_bound = Term::InvSqTaylor { q, g: sc.target, h2, d0: dt };

        let radar_row = |varphi: f64| {
            let mut row = Constraint::new(Family::Radar).with_scale(sc.sensing_threshold);
            row.constant = sc.sensing_threshold + varphi * varphi * base;
            row.terms.push((-2.0 * varphi * echo, target_bound.clone()));
            row
        };
        let active: Vec<usize> = (0..k_dev).filter(|&k| dec.beta[k][n] > 0.0).collect();
        if active.is_empty() {
            // all devices share the interference-free row
            rows.push(radar_row(coef.varphi[0][n]).at(Some(n), None));
        }
        for &k in &active {
            let vp = coef.varphi[k][n];
            let mut row = radar_row(vp).at(Some(n), Some(k));
            row.terms.push((vp * vp * c.lambda_k[k], Term::Reciprocal(p5.e_index(k, n))));
            rows.push(row);

            let weight = sc.slot_len * dec.beta[k][n];
            let lk = sc.devices[k].position;
            lower_terms[k].push((
                weight,
                Term::RateLower(RateLower {
                    q,
                    u: p5.u_index(n),
                    device: lk,
                    h2,
                    d0: distance_sq(qp, lk, sc.altitude),
                    lambda_k: c.lambda_k[k],
                    rho: coef.rho[k][n],
                    sqrt_lambda_t: c.lambda_t.sqrt(),
                    sqrt_lambda_si: c.lambda_si.sqrt(),
                    power: p,
                    noise: sc.noise_power,
                    bandwidth: sc.bandwidth,
                    log: true,
                }),
            ));
            upper_terms[k].push((
                weight,
                Term::RateUpper(RateUpper {
                    q,
                    e: p5.e_index(k, n),
                    target: sc.target,
                    h2,
                    d0: dt,
                    lambda_t: c.lambda_t,
                    lambda_si: c.lambda_si,
                    lambda_k: c.lambda_k[k],
                    power: p,
                    noise: sc.noise_power,
                    mu: coef.mu[k][n],
                    nu: coef.nu[k][n],
                    bandwidth: sc.bandwidth,
                }),
            ));
        }
        for k in 0..k_dev {
            let lk = sc.devices[k].position;
            rows.push(proxy_row(Family::DeviceProxy, p5.e_index(k, n), q, qp, lk, sc.altitude).at(Some(n), Some(k)));
        }
        rows.push(proxy_row(Family::TargetProxy, p5.u_index(n), q, qp, sc.target, sc.altitude).at(Some(n), None));

        let prev = p5.point(n - 1);
        if matches!(q, PointRef::Var(..)) || matches!(prev, PointRef::Var(..)) {
            let step = sc.v_max * sc.slot_len;
            let mut row = Constraint::new(Family::Mobility).at(Some(n), None).with_scale(step * step);
            row.terms.push((1.0, Term::SquaredDistance { a: q, b: prev }));
            row.constant = -step * step;
            rows.push(row);
        }
    }

    for (k, terms) in upper_terms.into_iter().enumerate() {
        if terms.is_empty() {
            continue;
        }
        let cap = sc.data_cap(k);
        let mut row = Constraint::new(Family::DataAvailability).at(None, Some(k)).with_scale(cap);
        row.terms = terms;
        row.constant = -cap;
        rows.push(row);
    }
    let epigraph_rows = match objective {
        Objective::LearningError => {
            for m in 0..sc.num_models() {
                let terms = sc.models[m].devices.iter().flat_map(|&k| lower_terms[k].clone()).collect();
                rows.push(error_row(sc, m, phi, 0.0, terms));
            }
            sc.num_models()
        }
        Objective::MinThroughput => {
            let mut served = 0;
            for (k, terms) in lower_terms.into_iter().enumerate() {
                if !terms.is_empty() {
                    rows.push(throughput_row(sc, k, phi, 0.0, terms));
                    served += 1;
                }
            }
            if served == 0 {
                return Err(Error::Subproblem("no device is scheduled".into()));
            }
            k_dev
        }
    };

    let kn = k_dev * n_slots;
    p5.problem.size = SizeAccount {
        // waypoints counted once per slot, proxies, epigraph variable
        variables: n_slots + kn + n_slots + 1,
        // radar rows, device proxies, target proxies, data caps, epigraph rows
        constraints: kn + kn + n_slots + k_dev + epigraph_rows,
        eliminated: 0,
    };
    p5.problem.blocks = vec![
        VarBlock { name: "q", start: 0, len: q_len },
        VarBlock { name: "e", start: q_len, len: kn },
        VarBlock { name: "u", start: q_len + kn, len: n_slots },
        VarBlock { name: "phi", start: phi, len: 1 },
    ];
    p5.problem.constraints = rows;
    Ok(p5)
}

impl BlockSubproblem for P5 {
    fn problem(&self) -> &ConvexSubproblem {
        &self.problem
    }

    fn warm_start(&self, dec: &Decision) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.dim()];
        for n in 1..self.n_slots {
            x[2 * (n - 1)] = dec.trajectory[n].x;
            x[2 * (n - 1) + 1] = dec.trajectory[n].y;
        }
        for row in &self.problem.constraints {
            // proxies start on their bounds
            if let (Family::DeviceProxy | Family::TargetProxy, Some(n)) = (row.family, row.slot) {
                let ix = match row.family {
                    Family::DeviceProxy => self.e_index(row.device.unwrap(), n),
                    _ => self.u_index(n),
                };
                x[ix] = 0.0;
                x[ix] = -row.value(&x);
            }
        }
        lift_phi(&self.problem, &mut x, self.phi);
        x
    }

    fn apply(&self, x: &[f64], dec: &Decision) -> Decision {
        let mut out = dec.clone();
        for n in 1..self.n_slots {
            out.trajectory[n] = self.point(n).resolve(x);
        }
        out.trajectory[0] = self.depot;
        out.trajectory[self.n_slots] = self.depot;
        out.phi = x[self.phi];
        out
    }
}

//! UAV power block.
//!
//! With time shares and trajectory frozen, the radar requirement is linear in
//! the slot power, each rate is convex in it (the power only feeds
//! interference), so the data caps are convex as written and the error rows
//! use the tangent of the rate at the current power, which lies below it.

use crate::bound::{device_gain, interference_gain, rate_lb, Decision};
use crate::error::{Error, Result};
use crate::geometry::{distance_sq, Point2};
use crate::scenario::Scenario;

use super::problem::{Constraint, ConvexSubproblem, Family, PowerRate, SizeAccount, SubproblemKind, Term, VarBlock};
use super::{error_row, lift_phi, phi_box, throughput_row, BlockSubproblem, Objective};

/// Rate of device `k` at `p0` and its derivative with respect to the power.
pub fn rate_tangent(sc: &Scenario, q: Point2, p0: f64, k: usize) -> (f64, f64) {
    let kappa = device_gain(sc, q, k);
    let zeta = interference_gain(sc, q);
    let a = zeta * p0 + sc.noise_power;
    let slope = sc.bandwidth / std::f64::consts::LN_2 * zeta * (1.0 / (kappa + a) - 1.0 / a);
    (rate_lb(sc, q, p0, k), slope)
}

#[derive(Debug, Clone)]
pub struct P7 {
    problem: ConvexSubproblem,
    n_slots: usize,
}

pub fn build_p7(sc: &Scenario, dec: &Decision, objective: Objective) -> Result<P7> {
    let (k_dev, n_slots) = (sc.num_devices(), sc.num_slots);
    let c = &sc.consts;
    let phi = n_slots;
    let mut lower = vec![0.0; n_slots + 1];
    let mut upper = vec![sc.uav_power_cap; n_slots + 1];
    (lower[phi], upper[phi]) = phi_box(sc, objective);

    let mut rows = Vec::new();
    let mut tangent: Vec<(f64, Vec<(f64, Term)>)> = vec![(0.0, Vec::new()); k_dev];
    let mut exact: Vec<Vec<(f64, Term)>> = vec![Vec::new(); k_dev];
    for n in 1..=n_slots {
        let q = dec.trajectory[n];
        let dt = distance_sq(q, sc.target, sc.altitude);
        let echo = c.lambda_t / (dt * dt);
        let radar_row = |interference: f64| {
            let base = sc.sensing_threshold * (sc.noise_power + interference);
            let mut row = Constraint::new(Family::Radar).with_scale(base);
            row.linear.push((n - 1, sc.sensing_threshold * c.lambda_si - echo));
            row.constant = base;
            row
        };
        let active: Vec<usize> = (0..k_dev).filter(|&k| dec.beta[k][n] > 0.0).collect();
        if active.is_empty() {
            rows.push(radar_row(0.0).at(Some(n), None));
        }
        for &k in &active {
            rows.push(radar_row(device_gain(sc, q, k)).at(Some(n), Some(k)));
            let w = sc.slot_len * dec.beta[k][n];
            let p0 = dec.power[n];
            let (r0, slope) = rate_tangent(sc, q, p0, k);
            tangent[k].0 += w * (r0 - slope * p0);
            tangent[k].1.push((w * slope, Term::Var(n - 1)));
            exact[k].push((
                w,
                Term::PowerRate(PowerRate {
                    p: n - 1,
                    kappa: device_gain(sc, q, k),
                    zeta: interference_gain(sc, q),
                    noise: sc.noise_power,
                    bandwidth: sc.bandwidth,
                }),
            ));
        }
    }
    for (k, terms) in exact.into_iter().enumerate() {
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
                let mut offset = 0.0;
                let mut terms = Vec::new();
                for &k in &sc.models[m].devices {
                    offset += tangent[k].0;
                    terms.extend(tangent[k].1.iter().cloned());
                }
                rows.push(error_row(sc, m, phi, offset, terms));
            }
            sc.num_models()
        }
        Objective::MinThroughput => {
            let mut served = 0;
            for (k, (offset, terms)) in tangent.into_iter().enumerate() {
                if !terms.is_empty() {
                    rows.push(throughput_row(sc, k, phi, offset, terms));
                    served += 1;
                }
            }
            if served == 0 {
                return Err(Error::Subproblem("no device is scheduled".into()));
            }
            k_dev
        }
    };

    let problem = ConvexSubproblem {
        kind: SubproblemKind::P7,
        blocks: vec![VarBlock { name: "power", start: 0, len: n_slots }, VarBlock { name: "phi", start: phi, len: 1 }],
        lower,
        upper,
        objective: vec![(phi, 1.0)],
        constraints: rows,
        size: SizeAccount {
            variables: n_slots + 1,
            // power caps, radar rows, error rows, data caps
            constraints: n_slots + k_dev * n_slots + epigraph_rows + k_dev,
            eliminated: 0,
        },
    };
    Ok(P7 { problem, n_slots })
}

impl BlockSubproblem for P7 {
    fn problem(&self) -> &ConvexSubproblem {
        &self.problem
    }

    fn warm_start(&self, dec: &Decision) -> Vec<f64> {
        let mut x: Vec<f64> = dec.power[1..].to_vec();
        x.push(0.0);
        lift_phi(&self.problem, &mut x, self.n_slots);
        x
    }

    fn apply(&self, x: &[f64], dec: &Decision) -> Decision {
        let mut out = dec.clone();
        out.power[1..].copy_from_slice(&x[..self.n_slots]);
        out.phi = x[self.n_slots];
        out
    }
}

//! Time-allocation block.
//!
//! With trajectory and power frozen every rate is a constant, so the data
//! volumes are linear in β and each error row is a convex power law of an
//! affine function. The radar requirement depends on β only through the
//! indicator `β > 0`; pairs whose interfered radar SINR misses the threshold
//! at the current point are fixed to zero and removed from the vector.

use crate::bound::{radar_sinr, rate_lb, Decision};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

use super::problem::{Constraint, ConvexSubproblem, Family, SizeAccount, SubproblemKind, Term, VarBlock};
use super::{error_row, lift_phi, phi_box, throughput_row, BlockSubproblem, Objective};

/// Time shares below this are snapped to zero when writing back.
pub const BETA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct P3 {
    problem: ConvexSubproblem,
    /// `(k, n)` of every β variable, in vector order.
    vars: Vec<(usize, usize)>,
    phi: usize,
}

impl P3 {
    pub fn admissible(&self) -> &[(usize, usize)] {
        &self.vars
    }
}

pub fn build_p3(sc: &Scenario, dec: &Decision, objective: Objective) -> Result<P3> {
    let (k_dev, n_slots) = (sc.num_devices(), sc.num_slots);
    let mut vars = Vec::new();
    let mut rate = vec![vec![0.0; n_slots + 1]; k_dev];
    for k in 0..k_dev {
        for n in 1..=n_slots {
            let (q, p) = (dec.trajectory[n], dec.power[n]);
            if radar_sinr(sc, q, p, Some(k)) >= sc.sensing_threshold {
                rate[k][n] = rate_lb(sc, q, p, k);
                vars.push((k, n));
            }
        }
    }
    if vars.is_empty() {
        return Err(Error::Subproblem(
            "no device can transmit in any slot without breaking the radar threshold".into(),
        ));
    }
    let phi = vars.len();
    let dim = phi + 1;
    let (phi_lo, phi_hi) = phi_box(sc, objective);
    let mut lower = vec![0.0; dim];
    let mut upper = vec![1.0; dim];
    lower[phi] = phi_lo;
    upper[phi] = phi_hi;

    let mut constraints = Vec::new();
    for n in 1..=n_slots {
        let linear: Vec<(usize, f64)> =
            vars.iter().enumerate().filter(|(_, v)| v.1 == n).map(|(i, _)| (i, 1.0)).collect();
        if linear.len() > 1 {
            let mut c = Constraint::new(Family::TimeBudget).at(Some(n), None);
            c.linear = linear;
            c.constant = -1.0;
            constraints.push(c);
        }
    }

    // per-device volume as (variable, bits per unit share)
    let volume = |k: usize| -> Vec<(usize, f64)> {
        vars.iter().enumerate().filter(|(_, v)| v.0 == k).map(|(i, &(_, n))| (i, sc.slot_len * rate[k][n])).collect()
    };
    for k in 0..k_dev {
        let lin = volume(k);
        if lin.is_empty() {
            continue;
        }
        let cap = sc.data_cap(k);
        let mut c = Constraint::new(Family::DataAvailability).at(None, Some(k)).with_scale(cap);
        c.linear = lin;
        c.constant = -cap;
        constraints.push(c);
    }

    let epigraph_rows = match objective {
        Objective::LearningError => {
            for m in 0..sc.num_models() {
                let terms: Vec<(f64, Term)> =
                    sc.models[m].devices.iter().flat_map(|&k| volume(k)).map(|(i, a)| (a, Term::Var(i))).collect();
                constraints.push(error_row(sc, m, phi, 0.0, terms));
            }
            sc.num_models()
        }
        Objective::MinThroughput => {
            for k in 0..k_dev {
                let terms: Vec<(f64, Term)> = volume(k).into_iter().map(|(i, a)| (a, Term::Var(i))).collect();
                if !terms.is_empty() {
                    constraints.push(throughput_row(sc, k, phi, 0.0, terms));
                }
            }
            k_dev
        }
    };

    let nominal = k_dev * n_slots;
    let size = SizeAccount {
        variables: nominal + 1,
        // two box sides per share, slot budgets, data caps, epigraph rows
        constraints: 2 * nominal + n_slots + k_dev + epigraph_rows,
        eliminated: nominal - vars.len(),
    };
    let problem = ConvexSubproblem {
        kind: SubproblemKind::P3,
        blocks: vec![
            VarBlock { name: "beta", start: 0, len: vars.len() },
            VarBlock { name: "phi", start: phi, len: 1 },
        ],
        lower,
        upper,
        objective: vec![(phi, 1.0)],
        constraints,
        size,
    };
    Ok(P3 { problem, vars, phi })
}

impl BlockSubproblem for P3 {
    fn problem(&self) -> &ConvexSubproblem {
        &self.problem
    }

    fn warm_start(&self, dec: &Decision) -> Vec<f64> {
        let mut x: Vec<f64> = self.vars.iter().map(|&(k, n)| dec.beta[k][n]).collect();
        x.push(0.0);
        lift_phi(&self.problem, &mut x, self.phi);
        x
    }

    fn apply(&self, x: &[f64], dec: &Decision) -> Decision {
        let mut out = dec.clone();
        for row in out.beta.iter_mut() {
            row.iter_mut().for_each(|b| *b = 0.0);
        }
        for (i, &(k, n)) in self.vars.iter().enumerate() {
            let b = x[i].clamp(0.0, 1.0);
            out.beta[k][n] = if b < BETA_FLOOR { 0.0 } else { b };
        }
        out.phi = x[self.phi];
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::eta;
    use crate::scenario::ScenarioConfig;

    #[test]
    fn single_pair_layout() {
        let mut cfg = ScenarioConfig::reference(1e-3);
        cfg.period = 1.0;
        cfg.num_slots = 1;
        let sc = Scenario::new(cfg);
        let dec = Decision::hover(&sc, 0.04);
        let p3 = build_p3(&sc, &dec, Objective::LearningError).unwrap();
        // every device passes the threshold at 1e-3 from the depot
        assert_eq!(p3.admissible().len(), 5);
        assert_eq!(p3.problem().size.total(), 3 * 5 + 2 + 1 + 5 + 1);
        let x = p3.warm_start(&dec);
        assert!((x[p3.phi] - eta(&sc, &dec)).abs() < 1e-9);
    }

    #[test]
    fn unreachable_threshold_masks_everything() {
        let sc = Scenario::new(ScenarioConfig::reference(1.0));
        let dec = Decision::hover(&sc, 0.04);
        assert!(matches!(build_p3(&sc, &dec, Objective::LearningError), Err(Error::Subproblem(_))));
    }

    #[test]
    fn apply_snaps_small_shares() {
        let sc = Scenario::new(ScenarioConfig::reference(1e-3));
        let dec = Decision::hover(&sc, 0.04);
        let p3 = build_p3(&sc, &dec, Objective::LearningError).unwrap();
        let mut x = vec![1e-8; p3.problem().dim()];
        x[0] = 0.25;
        let out = p3.apply(&x, &dec);
        let (k, n) = p3.admissible()[0];
        assert_eq!(out.beta[k][n], 0.25);
        assert_eq!(out.beta.iter().flatten().filter(|&&b| b > 0.0).count(), 1);
    }
}

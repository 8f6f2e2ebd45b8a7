//! Convex surrogate subproblems for the three BCD blocks.

mod p3;
mod p5;
mod p7;
pub mod problem;
pub mod transforms;

pub use p3::{build_p3, P3};
pub use p5::{build_p5, surrogate_coefficients, P5Options, SurrogateCoefficients, P5};
pub use p7::{build_p7, rate_tangent, P7};
pub use problem::{Constraint, ConvexSubproblem, Family, Outer, PointRef, SizeAccount, SubproblemKind, Term, VarBlock};

use serde::{Deserialize, Serialize};

use crate::bound::Decision;
use crate::scenario::Scenario;

/// Which quantity the epigraph variable bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// `φ ≥ Ψ_m` for every model.
    LearningError,
    /// `φ ≥ −A_k / S` for every served device, `S` the largest data cap.
    MinThroughput,
}

/// A built block subproblem together with the map back to a [`Decision`].
pub trait BlockSubproblem {
    fn problem(&self) -> &ConvexSubproblem;

    /// Current block values in the subproblem's variable layout, with the
    /// epigraph variable lifted onto its constraints.
    fn warm_start(&self, dec: &Decision) -> Vec<f64>;

    /// Writes a solution back into a copy of `dec`.
    fn apply(&self, x: &[f64], dec: &Decision) -> Decision;
}

/// Lower and upper box bound of the epigraph variable.
pub(crate) fn phi_box(sc: &Scenario, objective: Objective) -> (f64, f64) {
    match objective {
        Objective::LearningError => {
            let worst = (0..sc.num_models()).map(|m| sc.no_data_error(m)).fold(0.0, f64::max);
            (0.0, worst * 1.01)
        }
        Objective::MinThroughput => (-1.01, 0.01),
    }
}

/// Largest data cap, normalizing the throughput objective.
pub(crate) fn throughput_scale(sc: &Scenario) -> f64 {
    (0..sc.num_devices()).map(|k| sc.data_cap(k)).fold(0.0, f64::max)
}

/// Sets the epigraph variable just above the largest epigraph row.
pub(crate) fn lift_phi(problem: &ConvexSubproblem, x: &mut [f64], phi: usize) {
    x[phi] = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for c in &problem.constraints {
        if matches!(c.family, Family::LearningError | Family::Throughput) {
            let v = c.value(x);
            if v.is_finite() {
                worst = worst.max(v);
            }
        }
    }
    if worst.is_finite() {
        x[phi] = worst + 1e-9 * worst.abs().max(1e-3);
    }
}

/// Epigraph row `outer(S) − φ ≤ 0` for model `m` with a prepared inner sum.
pub(crate) fn error_row(sc: &Scenario, m: usize, phi: usize, offset: f64, terms: Vec<(f64, Term)>) -> Constraint {
    let model = &sc.models[m];
    let mut c = Constraint::new(Family::LearningError).at(None, None);
    c.outer = Outer::PowerLaw {
        a: model.error_coeff,
        b: model.error_exp,
        inv_d: 1.0 / model.sample_bits,
        shift: model.historical_samples,
    };
    c.offset = offset;
    c.terms = terms;
    c.linear = vec![(phi, -1.0)];
    c.scale = sc.no_data_error(m).min(model.error_coeff).max(1e-12);
    c
}

/// Epigraph row `−A_k/S − φ ≤ 0` with `A_k = offset + Σ terms`.
pub(crate) fn throughput_row(sc: &Scenario, k: usize, phi: usize, offset: f64, terms: Vec<(f64, Term)>) -> Constraint {
    let s = throughput_scale(sc);
    let mut c = Constraint::new(Family::Throughput).at(None, Some(k));
    c.offset = -offset / s;
    c.terms = terms.into_iter().map(|(a, t)| (-a / s, t)).collect();
    c.linear = vec![(phi, -1.0)];
    c
}

//! Log-barrier interior-point solver for [`ConvexSubproblem`]s.
//!
//! Primal-dual path following on the central path of
//! `t·cᵀx − Σ log(−f_i/s_i) − Σ log(box slack)`: multipliers are carried
//! explicitly, the barrier weight follows the surrogate duality gap, and a
//! backtracking line search keeps every iterate strictly feasible. A Phase I
//! pass minimizing the largest scaled violation finds a strictly feasible
//! start when the warm start is not.
//!
//! Linear systems are dense and solved by Cholesky after symmetric diagonal
//! scaling. Other solvers can be slotted in by producing a [`SolverOutcome`]
//! from the same [`ConvexSubproblem`].

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convexify::problem::{add_outer, Constraint, ConstraintEval, ConvexSubproblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Largest scaled constraint violation accepted as feasible.
    pub feasibility_tol: f64,
    /// Target bound on the objective gap.
    pub optimality_tol: f64,
    /// Target on the stationarity residual, each component weighted by the
    /// magnitude of its variable.
    pub kkt_tol: f64,
    /// Newton steps over all barrier stages, per phase.
    pub max_iterations: usize,
    /// Barrier weight used to seed the multipliers; chosen from the problem
    /// when `None`.
    pub initial_t: Option<f64>,
    /// Ratio between the barrier weight and `m / η̂` at every step.
    pub growth: f64,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    /// Step shrink factor in the backtracking line search.
    pub backtrack: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            feasibility_tol: 1e-8,
            optimality_tol: 1e-7,
            kkt_tol: 1e-6,
            max_iterations: 2000,
            initial_t: None,
            growth: 15.0,
            armijo: 0.01,
            backtrack: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest scaled violation at `x` (negative when strictly feasible).
    pub max_violation: f64,
    /// Newton steps in the optimality phase.
    pub iterations: usize,
    pub phase1_iterations: usize,
    /// Largest component of the Lagrangian gradient at exit, each weighted by
    /// `max(1, |x_i|)`.
    pub kkt_residual: f64,
    /// Surrogate duality gap `−Σ λ_i g_i` at exit.
    pub gap: f64,
    pub wall_time_s: f64,
}

/// Barrier program over either the subproblem itself or its Phase I
/// extension `min s  s.t.  f_i/s_i ≤ s`, where `s` is the last entry.
struct Program<'a> {
    p: &'a ConvexSubproblem,
    phase1: bool,
}

/// One inequality of the barrier program, `g(x) < 0`.
enum Row<'a> {
    Constraint(&'a Constraint),
    Lower(usize, f64),
    Upper(usize, f64),
}

/// Row values, scaled gradients and curvature at a strictly feasible point.
struct Eval {
    g: Vec<f64>,
    grads: Vec<Vec<(usize, f64)>>,
    /// Nonlinear rows keep their evaluation and scale for the Hessian.
    curvature: Vec<Option<(ConstraintEval, f64)>>,
}

impl<'a> Program<'a> {
    fn dim(&self) -> usize {
        self.p.dim() + usize::from(self.phase1)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        if self.phase1 {
            x[self.p.dim()]
        } else {
            self.p.objective_value(x)
        }
    }

    fn objective_grad(&self) -> Vec<(usize, f64)> {
        if self.phase1 {
            vec![(self.p.dim(), 1.0)]
        } else {
            self.p.objective.clone()
        }
    }

    fn rows(&self) -> Vec<Row<'a>> {
        let mut rows: Vec<Row<'a>> = self.p.constraints.iter().map(Row::Constraint).collect();
        for i in 0..self.p.dim() {
            if self.p.lower[i].is_finite() {
                rows.push(Row::Lower(i, self.p.lower[i]));
            }
            if self.p.upper[i].is_finite() {
                rows.push(Row::Upper(i, self.p.upper[i]));
            }
        }
        rows
    }

    fn slack(&self, x: &[f64]) -> f64 {
        if self.phase1 {
            x[self.p.dim()]
        } else {
            0.0
        }
    }

    /// `None` unless every row is strictly satisfied and in its domain.
    fn evaluate(&self, rows: &[Row], x: &[f64]) -> Option<Eval> {
        let s = self.slack(x);
        let s_ix = self.p.dim();
        let mut ev =
            Eval { g: Vec::with_capacity(rows.len()), grads: Vec::with_capacity(rows.len()), curvature: Vec::new() };
        for row in rows {
            let (g, grad, curv) = match row {
                Row::Constraint(c) => {
                    let e = c.eval(x)?;
                    let mut grad: Vec<(usize, f64)> = e.grad.iter().map(|&(i, v)| (i, v / c.scale)).collect();
                    if self.phase1 {
                        grad.push((s_ix, -1.0));
                    }
                    let v = e.value / c.scale - s;
                    (v, grad, (!c.is_linear()).then_some((e, c.scale)))
                }
                Row::Lower(i, lo) => (lo - x[*i], vec![(*i, -1.0)], None),
                Row::Upper(i, hi) => (x[*i] - hi, vec![(*i, 1.0)], None),
            };
            if g.is_nan() || g >= 0.0 {
                return None;
            }
            ev.g.push(g);
            ev.grads.push(grad);
            ev.curvature.push(curv);
        }
        Some(ev)
    }

    /// Largest scaled constraint value of the original problem.
    fn max_scaled(&self, x: &[f64]) -> f64 {
        self.p.constraints.iter().map(|c| c.value(x) / c.scale).fold(f64::NEG_INFINITY, |a, v| {
            if v.is_nan() {
                f64::INFINITY
            } else {
                a.max(v)
            }
        })
    }

    /// Lagrangian gradient `c + Σ λ_i ∇g_i`.
    fn dual_residual(&self, ev: &Eval, lambda: &[f64]) -> DVector<f64> {
        let mut r = DVector::zeros(self.dim());
        for (i, c) in self.objective_grad() {
            r[i] += c;
        }
        for (grad, l) in ev.grads.iter().zip(lambda) {
            for &(i, v) in grad {
                r[i] += l * v;
            }
        }
        r
    }

    /// Change of `t·obj − Σ log(slack)` between two evaluated points, summed
    /// termwise so that small decreases survive large merit values.
    fn merit_change(&self, x: &[f64], ex: &Eval, y: &[f64], ey: &Eval, t: f64) -> f64 {
        let obj: f64 = self.objective_grad().iter().map(|&(i, c)| c * (y[i] - x[i])).sum();
        let mut v = t * obj;
        for (a, b) in ex.g.iter().zip(&ey.g) {
            // slacks are −g
            v -= ((a - b) / -a).ln_1p();
        }
        v
    }

    /// Primal-dual Newton matrix and the barrier gradient scaled by `1/t`.
    fn system(&self, ev: &Eval, lambda: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for (i, c) in self.objective_grad() {
            g[i] += c;
        }
        for (k, grad) in ev.grads.iter().enumerate() {
            let slack = -ev.g[k];
            for &(i, v) in grad {
                g[i] += v / (t * slack);
            }
            add_outer(grad, lambda[k] / slack, &mut h);
            if let Some((e, scale)) = &ev.curvature[k] {
                e.add_hessian(lambda[k] / scale, &mut h);
            }
        }
        (g, h)
    }
}

/// Newton direction from `H Δ = −g` with diagonal scaling and increasing
/// regularization when the factorization fails.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let d: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let v = h[(i, i)];
            if v > 0.0 && v.is_finite() {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        }),
    );
    let mut scaled = h.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= d[i] * d[j];
        }
    }
    let rhs = -g.component_mul(&d);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rhs);
            let step = y.component_mul(&d);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
    }
    None
}

enum StopRule {
    /// Optimality phase: run to the gap tolerance.
    Gap,
    /// Phase I: stop once every original constraint is strictly satisfied.
    StrictlyFeasible,
}

struct BarrierRun {
    x: Vec<f64>,
    iterations: usize,
    gap: f64,
    kkt: f64,
    converged: bool,
    early_stop: bool,
}

/// Multipliers stay within this factor of their central value `1/(t·slack)`.
const DUAL_SPREAD: f64 = 1e10;

/// A barrier stage ends once the scaled stationarity and complementarity
/// errors are below this multiple of `1/t`.
const CENTERING: f64 = 10.0;

/// Primal-dual barrier method from a strictly feasible `x`.
///
/// For a fixed barrier weight `t`, Newton steps on the perturbed KKT system
/// (with the multipliers carried explicitly) are taken with an Armijo line
/// search on the barrier merit, which also keeps every iterate strictly
/// feasible. Multipliers take a fraction-to-boundary step and are clamped
/// around their central values. Once centered, `t` grows by
/// [`SolverSettings::growth`].
fn barrier(
    prog: &Program,
    mut x: Vec<f64>,
    settings: &SolverSettings,
    rule: StopRule,
    mut trace: Option<&mut dyn Write>,
) -> BarrierRun {
    let rows = prog.rows();
    let m = rows.len().max(1) as f64;
    let xscale: Vec<f64> = x.iter().map(|v| v.abs().max(1.0)).collect();
    let label = if prog.phase1 { "phase1" } else { "phase2" };
    let mut run = BarrierRun {
        x: Vec::new(),
        iterations: 0,
        gap: f64::INFINITY,
        kkt: f64::INFINITY,
        converged: false,
        early_stop: false,
    };
    let Some(mut ev) = prog.evaluate(&rows, &x) else {
        run.x = x;
        return run;
    };
    let gap_tol = match rule {
        StopRule::Gap => settings.optimality_tol,
        StopRule::StrictlyFeasible => settings.feasibility_tol,
    };
    let mut t = settings.initial_t.unwrap_or(m / prog.objective(&x).abs().max(1e-3));
    let mut lambda: Vec<f64> = ev.g.iter().map(|g| 1.0 / (t * -g)).collect();
    'outer: loop {
        loop {
            if matches!(rule, StopRule::StrictlyFeasible) && prog.max_scaled(&x) < 0.0 {
                run.converged = true;
                run.early_stop = true;
                break 'outer;
            }
            run.gap = ev.g.iter().zip(&lambda).map(|(g, l)| -g * l).sum();
            let r = prog.dual_residual(&ev, &lambda);
            run.kkt = r.iter().zip(&xscale).map(|(v, s)| (v * s).abs()).fold(0.0, f64::max);
            if run.gap <= gap_tol && run.kkt <= settings.kkt_tol {
                run.converged = true;
                break 'outer;
            }
            let cent = ev.g.iter().zip(&lambda).map(|(g, l)| (-g * l - 1.0 / t).abs()).fold(0.0, f64::max);
            if run.kkt.max(cent) <= CENTERING / t {
                break;
            }
            if run.iterations >= settings.max_iterations {
                break 'outer;
            }
            let (g, h) = prog.system(&ev, &lambda, t);
            let Some(dx) = newton_direction(&g, &h) else {
                break;
            };
            // directional derivative of the merit (t times the scaled gradient)
            let slope = t * g.dot(&dx);
            if slope.is_nan() || slope >= 0.0 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-20 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(ev_c) = prog.evaluate(&rows, &cand) {
                    let change = prog.merit_change(&x, &ev, &cand, &ev_c, t);
                    if change <= settings.armijo * step * slope {
                        accepted = Some((cand, ev_c, change));
                        break;
                    }
                }
                step *= settings.backtrack;
            }
            let Some((cand, ev_c, change)) = accepted else {
                break;
            };
            let dlambda: Vec<f64> = (0..rows.len())
                .map(|k| {
                    let lin: f64 = ev.grads[k].iter().map(|&(i, v)| v * dx[i]).sum();
                    (-lambda[k] * ev.g[k] - 1.0 / t - lambda[k] * lin) / ev.g[k]
                })
                .collect();
            let dual_step =
                lambda.iter().zip(&dlambda).filter(|(_, d)| **d < 0.0).map(|(l, d)| -0.99 * l / d).fold(1.0, f64::min);
            for k in 0..rows.len() {
                let central = 1.0 / (t * -ev_c.g[k]);
                lambda[k] = (lambda[k] + dual_step * dlambda[k]).clamp(central / DUAL_SPREAD, central * DUAL_SPREAD);
            }
            x = cand;
            ev = ev_c;
            run.iterations += 1;
            if let Some(w) = trace.as_mut() {
                let _ = writeln!(
                    w,
                    "{label} iter={} t={t:.3e} change={change:.6e} step={step:.3e} obj={:.12e}",
                    run.iterations,
                    prog.objective(&x)
                );
            }
        }
        if t > 1e30 {
            break;
        }
        t *= settings.growth;
    }
    run.x = x;
    run
}

/// Moves a point strictly inside the box bounds.
pub fn project_into_box(p: &ConvexSubproblem, x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let (lo, hi) = (p.lower[i], p.upper[i]);
            let width = hi - lo;
            let margin = if width.is_finite() {
                (1e-6 * width.max(1.0)).min(width / 4.0)
            } else {
                1e-6 * v.abs().max(lo.abs().min(hi.abs())).max(1.0)
            };
            if !v.is_finite() {
                if width.is_finite() {
                    return lo + width / 2.0;
                }
                return if lo.is_finite() {
                    lo + 1.0
                } else if hi.is_finite() {
                    hi - 1.0
                } else {
                    0.0
                };
            }
            v.max(lo + margin).min(hi - margin)
        })
        .collect()
}

fn outcome(p: &ConvexSubproblem, status: SolverStatus, x: Vec<f64>, start: Instant) -> SolverOutcome {
    SolverOutcome {
        status,
        objective: p.objective_value(&x),
        max_violation: p.max_violation(&x),
        x,
        iterations: 0,
        phase1_iterations: 0,
        kkt_residual: f64::NAN,
        gap: f64::NAN,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Finds a strictly feasible point by minimizing the largest scaled
/// violation, starting from `start` projected into the box.
pub fn phase1(p: &ConvexSubproblem, start: &[f64], settings: &SolverSettings) -> SolverOutcome {
    phase1_traced(p, start, settings, None)
}

fn phase1_traced(
    p: &ConvexSubproblem,
    start: &[f64],
    settings: &SolverSettings,
    trace: Option<&mut dyn Write>,
) -> SolverOutcome {
    let clock = Instant::now();
    let x0 = project_into_box(p, start);
    let prog = Program { p, phase1: true };
    let worst = prog.max_scaled(&x0);
    if worst < 0.0 {
        return outcome(p, SolverStatus::Optimal, x0, clock);
    }
    if !worst.is_finite() {
        // outside the domain of some constraint
        return outcome(p, SolverStatus::Infeasible, x0, clock);
    }
    let mut xs = x0;
    xs.push(worst + 1.0);
    let run = barrier(&prog, xs, settings, StopRule::StrictlyFeasible, trace);
    let mut x = run.x;
    x.truncate(p.dim());
    let status = if run.early_stop {
        SolverStatus::Optimal
    } else if run.converged || prog.max_scaled(&x) > 0.0 {
        SolverStatus::Infeasible
    } else {
        SolverStatus::IterationLimit
    };
    let mut out = outcome(p, status, x, clock);
    out.phase1_iterations = run.iterations;
    out
}

pub fn solve(p: &ConvexSubproblem, warm_start: &[f64], settings: &SolverSettings) -> SolverOutcome {
    solve_traced(p, warm_start, settings, None)
}

/// [`solve`] with a line per Newton step written to `trace`.
pub fn solve_traced(
    p: &ConvexSubproblem,
    warm_start: &[f64],
    settings: &SolverSettings,
    mut trace: Option<&mut dyn Write>,
) -> SolverOutcome {
    let clock = Instant::now();
    let start = phase1_traced(p, warm_start, settings, trace.as_mut().map(|w| &mut **w as &mut dyn Write));
    if start.status != SolverStatus::Optimal {
        return SolverOutcome { wall_time_s: clock.elapsed().as_secs_f64(), ..start };
    }
    let prog = Program { p, phase1: false };
    let run = barrier(&prog, start.x, settings, StopRule::Gap, trace);
    let status = if run.converged { SolverStatus::Optimal } else { SolverStatus::IterationLimit };
    let mut out = outcome(p, status, run.x, clock);
    out.iterations = run.iterations;
    out.phase1_iterations = start.phase1_iterations;
    out.kkt_residual = run.kkt;
    out.gap = run.gap;
    out
}

//! Solver-agnostic description of a convex subproblem.
//!
//! Every inequality has the form
//!
//! ```text
//! outer(offset + Σ_j c_j · term_j(x)) + aᵀx + constant ≤ 0
//! ```
//!
//! where each `term_j` touches at most four variables and has analytic first
//! and second derivatives. Convexity is the builder's responsibility: the
//! sign of `c_j` must make `c_j · term_j` convex, and a non-identity outer
//! function must be convex and non-increasing while `S` is concave.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;

/// What the subproblem optimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemKind {
    /// Time allocation.
    P3,
    /// Trajectory.
    P5,
    /// UAV power.
    P7,
}

/// Constraint family, used for reporting and size accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    TimeBudget,
    DataAvailability,
    LearningError,
    Throughput,
    Radar,
    DeviceProxy,
    TargetProxy,
    Mobility,
}

/// A waypoint either optimized (`Var(x index, y index)`) or pinned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointRef {
    Var(usize, usize),
    Fixed(Point2),
}

impl PointRef {
    pub fn resolve(&self, x: &[f64]) -> Point2 {
        match *self {
            PointRef::Var(i, j) => Point2::new(x[i], x[j]),
            PointRef::Fixed(p) => p,
        }
    }

    fn slots(&self) -> [Option<usize>; 2] {
        match *self {
            PointRef::Var(i, j) => [Some(i), Some(j)],
            PointRef::Fixed(_) => [None, None],
        }
    }
}

/// Lower surrogate of the uplink SINR (or rate) as a function of the waypoint
/// and the target-distance proxy `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLower {
    pub q: PointRef,
    pub u: usize,
    pub device: Point2,
    pub h2: f64,
    /// Squared device distance at the expansion point.
    pub d0: f64,
    pub lambda_k: f64,
    pub rho: f64,
    pub sqrt_lambda_t: f64,
    pub sqrt_lambda_si: f64,
    pub power: f64,
    pub noise: f64,
    pub bandwidth: f64,
    /// `true`: rate in bits/s; `false`: the SINR surrogate itself.
    pub log: bool,
}

/// Upper surrogate of the uplink rate as a function of the waypoint and the
/// device-distance proxy `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateUpper {
    pub q: PointRef,
    pub e: usize,
    pub target: Point2,
    pub h2: f64,
    /// Squared target distance at the expansion point.
    pub d0: f64,
    pub lambda_t: f64,
    pub lambda_si: f64,
    pub lambda_k: f64,
    pub power: f64,
    pub noise: f64,
    pub mu: f64,
    pub nu: f64,
    pub bandwidth: f64,
}

/// Uplink rate `B log2(1 + κ/(ζp + σ²))`, convex in the UAV power `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRate {
    pub p: usize,
    pub kappa: f64,
    pub zeta: f64,
    pub noise: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(usize),
    /// `1 / x_i`, convex for `x_i > 0`.
    Reciprocal(usize),
    /// Concave lower bound `2/D0 − d²(q, g)/D0²` of `d⁻²(q, g)`.
    InvSqTaylor {
        q: PointRef,
        g: Point2,
        h2: f64,
        d0: f64,
    },
    /// `‖a − b‖²`.
    SquaredDistance {
        a: PointRef,
        b: PointRef,
    },
    RateLower(RateLower),
    RateUpper(RateUpper),
    PowerRate(PowerRate),
}

/// Value and derivatives of a term with respect to the variables it touches.
#[derive(Debug, Clone, Copy)]
pub struct Local {
    pub value: f64,
    pub n: usize,
    pub idx: [usize; 4],
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

impl Local {
    fn compact(value: f64, slots: [Option<usize>; 4], grad: [f64; 4], hess: [[f64; 4]; 4]) -> Local {
        let mut out = Local { value, n: 0, idx: [0; 4], grad: [0.0; 4], hess: [[0.0; 4]; 4] };
        let mut map = [usize::MAX; 4];
        for (i, s) in slots.iter().enumerate() {
            if let Some(ix) = *s {
                map[i] = out.n;
                out.idx[out.n] = ix;
                out.grad[out.n] = grad[i];
                out.n += 1;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                if map[i] != usize::MAX && map[j] != usize::MAX {
                    out.hess[map[i]][map[j]] = hess[i][j];
                }
            }
        }
        out
    }

    fn scalar(value: f64, ix: usize, g: f64, h: f64) -> Local {
        let mut hess = [[0.0; 4]; 4];
        hess[0][0] = h;
        Local { value, n: 1, idx: [ix, 0, 0, 0], grad: [g, 0.0, 0.0, 0.0], hess }
    }
}

fn slots3(q: &PointRef, s: usize) -> [Option<usize>; 4] {
    let [a, b] = q.slots();
    [a, b, Some(s), None]
}

impl Term {
    pub fn is_linear(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    /// `None` outside the term's domain.
    pub fn eval(&self, x: &[f64]) -> Option<Local> {
        match self {
            Term::Var(i) => Some(Local::scalar(x[*i], *i, 1.0, 0.0)),
            Term::Reciprocal(i) => {
                let v = x[*i];
                (v > 0.0).then(|| Local::scalar(1.0 / v, *i, -1.0 / (v * v), 2.0 / (v * v * v)))
            }
            Term::InvSqTaylor { q, g, h2, d0 } => {
                let w = q.resolve(x) - *g;
                let c = 1.0 / (d0 * d0);
                let value = 2.0 / d0 - (h2 + w.norm_sq()) * c;
                let [a, b] = q.slots();
                let mut hess = [[0.0; 4]; 4];
                hess[0][0] = -2.0 * c;
                hess[1][1] = -2.0 * c;
                Some(Local::compact(value, [a, b, None, None], [-2.0 * c * w.x, -2.0 * c * w.y, 0.0, 0.0], hess))
            }
            Term::SquaredDistance { a, b } => {
                let d = a.resolve(x) - b.resolve(x);
                let [a0, a1] = a.slots();
                let [b0, b1] = b.slots();
                let mut hess = [[0.0; 4]; 4];
                for i in 0..2 {
                    hess[i][i] = 2.0;
                    hess[i + 2][i + 2] = 2.0;
                    hess[i][i + 2] = -2.0;
                    hess[i + 2][i] = -2.0;
                }
                let g = [2.0 * d.x, 2.0 * d.y, -2.0 * d.x, -2.0 * d.y];
                Some(Local::compact(d.norm_sq(), [a0, a1, b0, b1], g, hess))
            }
            Term::RateLower(t) => t.eval(x),
            Term::RateUpper(t) => t.eval(x),
            Term::PowerRate(t) => t.eval(x),
        }
    }
}

impl RateLower {
    /// SINR surrogate and its derivatives in `(q_x, q_y, u)`.
    fn sinr(&self, x: &[f64]) -> Option<(f64, [f64; 3], [[f64; 3]; 3])> {
        let w = self.q.resolve(x) - self.device;
        let u = x[self.u];
        let c = 1.0 / (self.d0 * self.d0);
        let a = 2.0 / self.d0 - (self.h2 + w.norm_sq()) * c;
        if a <= 0.0 || u <= 0.0 {
            return None;
        }
        let la = self.lambda_k * a;
        let s = la.sqrt();
        // ∇a = −2c w, ∇²a = −2c I
        let ga = [-2.0 * c * w.x, -2.0 * c * w.y];
        let gs = [self.lambda_k * ga[0] / (2.0 * s), self.lambda_k * ga[1] / (2.0 * s)];
        let k2 = self.lambda_k * self.lambda_k / (4.0 * s * s * s);
        let hs = |i: usize, j: usize| {
            let diag = if i == j { self.lambda_k * (-2.0 * c) / (2.0 * s) } else { 0.0 };
            diag - k2 * ga[i] * ga[j]
        };
        let m = self.sqrt_lambda_t / u + self.sqrt_lambda_si;
        let interference = m * m * self.power + self.noise;
        let dm = -self.sqrt_lambda_t / (u * u);
        let ddm = 2.0 * self.sqrt_lambda_t / (u * u * u);
        let d_int = 2.0 * m * dm * self.power;
        let dd_int = 2.0 * (dm * dm + m * ddm) * self.power;

        let r2 = self.rho * self.rho;
        let value = 2.0 * self.rho * s - r2 * interference;
        let grad = [2.0 * self.rho * gs[0], 2.0 * self.rho * gs[1], -r2 * d_int];
        let mut hess = [[0.0; 3]; 3];
        for i in 0..2 {
            for j in 0..2 {
                hess[i][j] = 2.0 * self.rho * hs(i, j);
            }
        }
        hess[2][2] = -r2 * dd_int;
        Some((value, grad, hess))
    }

    fn eval(&self, x: &[f64]) -> Option<Local> {
        let (g, dg, hg) = self.sinr(x)?;
        let (value, grad, hess) = if self.log {
            if g <= -1.0 {
                return None;
            }
            let k = self.bandwidth / std::f64::consts::LN_2;
            let inv = 1.0 / (1.0 + g);
            let mut grad = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            for i in 0..3 {
                grad[i] = k * dg[i] * inv;
                for j in 0..3 {
                    hess[i][j] = k * (hg[i][j] * inv - dg[i] * dg[j] * inv * inv);
                }
            }
            (k * g.ln_1p(), grad, hess)
        } else {
            (g, dg, hg)
        };
        Some(Local::compact(value, slots3(&self.q, self.u), pad(grad), pad_h(hess)))
    }
}

impl RateUpper {
    fn eval(&self, x: &[f64]) -> Option<Local> {
        let w = self.q.resolve(x) - self.target;
        let e = x[self.e];
        if e <= 0.0 {
            return None;
        }
        let d0 = self.d0;
        let d2 = self.h2 + w.norm_sq();
        let cross = 2.0 * (self.lambda_t * self.lambda_si).sqrt();
        // lower bounds of d⁻⁴ and d⁻² at the expansion point
        let lt = 3.0 / (d0 * d0) - 2.0 * d2 / (d0 * d0 * d0);
        let la = 2.0 / d0 - d2 / (d0 * d0);
        let psi = (self.lambda_t * lt + cross * la + self.lambda_si) * self.power + self.noise;
        if psi <= 0.0 {
            return None;
        }
        // ∇psi = coef · w, ∇²psi = coef · I
        let coef = self.power * (self.lambda_t * (-4.0 / (d0 * d0 * d0)) + cross * (-2.0 / (d0 * d0)));
        let gp = [coef * w.x, coef * w.y];
        let s = psi.sqrt();
        let gs = [gp[0] / (2.0 * s), gp[1] / (2.0 * s)];
        let hs = |i: usize, j: usize| {
            let diag = if i == j { coef / (2.0 * s) } else { 0.0 };
            diag - gp[i] * gp[j] / (4.0 * s * s * s)
        };
        let nu2 = self.nu * self.nu;
        let omega = 2.0 * self.nu * s - nu2 * self.lambda_k / e;
        if omega <= 0.0 {
            return None;
        }
        let go = [2.0 * self.nu * gs[0], 2.0 * self.nu * gs[1], nu2 * self.lambda_k / (e * e)];
        let mut ho = [[0.0; 3]; 3];
        for i in 0..2 {
            for j in 0..2 {
                ho[i][j] = 2.0 * self.nu * hs(i, j);
            }
        }
        ho[2][2] = -2.0 * nu2 * self.lambda_k / (e * e * e);

        let k = self.bandwidth / std::f64::consts::LN_2;
        let one_mu = 1.0 - self.mu;
        let value = k * (one_mu / omega - (self.mu + (-self.mu).ln_1p()));
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            grad[i] = -k * one_mu * go[i] / (omega * omega);
            for j in 0..3 {
                hess[i][j] = k * one_mu * (2.0 * go[i] * go[j] / (omega * omega * omega) - ho[i][j] / (omega * omega));
            }
        }
        Some(Local::compact(value, slots3(&self.q, self.e), pad(grad), pad_h(hess)))
    }
}

impl PowerRate {
    fn eval(&self, x: &[f64]) -> Option<Local> {
        let p = x[self.p];
        let a = self.zeta * p + self.noise;
        let b = a + self.kappa;
        if a <= 0.0 {
            return None;
        }
        let k = self.bandwidth / std::f64::consts::LN_2;
        let value = k * (self.kappa / a).ln_1p();
        let g = k * self.zeta * (1.0 / b - 1.0 / a);
        let h = k * self.zeta * self.zeta * (1.0 / (a * a) - 1.0 / (b * b));
        Some(Local::scalar(value, self.p, g, h))
    }
}

fn pad(g: [f64; 3]) -> [f64; 4] {
    [g[0], g[1], g[2], 0.0]
}

fn pad_h(h: [[f64; 3]; 3]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        out[i][..3].copy_from_slice(&h[i]);
    }
    out
}

/// Scalar function wrapped around the inner sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outer {
    Identity,
    /// `a (S·inv_d + shift)^(−b)`: convex and non-increasing for `b ≥ 0`.
    PowerLaw {
        a: f64,
        b: f64,
        inv_d: f64,
        shift: f64,
    },
}

impl Outer {
    /// Value, first and second derivative at `s`.
    pub fn eval(&self, s: f64) -> Option<(f64, f64, f64)> {
        match *self {
            Outer::Identity => Some((s, 1.0, 0.0)),
            Outer::PowerLaw { a, b, inv_d, shift } => {
                if b == 0.0 {
                    return Some((a, 0.0, 0.0));
                }
                let base = s * inv_d + shift;
                if base <= 0.0 {
                    return None;
                }
                let v = a * base.powf(-b);
                Some((v, -b * inv_d * v / base, b * (b + 1.0) * inv_d * inv_d * v / (base * base)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub family: Family,
    pub outer: Outer,
    pub offset: f64,
    pub terms: Vec<(f64, Term)>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
    /// Typical magnitude; the solver works with `value / scale`.
    pub scale: f64,
    /// Slot and device the row belongs to, for diagnostics.
    pub slot: Option<usize>,
    pub device: Option<usize>,
}

impl Constraint {
    pub fn new(family: Family) -> Self {
        Constraint {
            family,
            outer: Outer::Identity,
            offset: 0.0,
            terms: Vec::new(),
            linear: Vec::new(),
            constant: 0.0,
            scale: 1.0,
            slot: None,
            device: None,
        }
    }

    pub fn at(mut self, slot: Option<usize>, device: Option<usize>) -> Self {
        self.slot = slot;
        self.device = device;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.outer == Outer::Identity && self.terms.iter().all(|(_, t)| t.is_linear())
    }

    /// Constraint value; NaN outside the domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).map_or(f64::NAN, |e| e.value)
    }

    pub fn eval(&self, x: &[f64]) -> Option<ConstraintEval> {
        let mut s = self.offset;
        let mut s_grad = Vec::new();
        let mut locals = Vec::new();
        for (c, term) in &self.terms {
            let l = term.eval(x)?;
            s += c * l.value;
            for i in 0..l.n {
                s_grad.push((l.idx[i], c * l.grad[i]));
            }
            if !term.is_linear() {
                locals.push((*c, l));
            }
        }
        let (o, d1, d2) = self.outer.eval(s)?;
        let mut value = o + self.constant;
        for &(i, a) in &self.linear {
            value += a * x[i];
        }
        if !value.is_finite() {
            return None;
        }
        merge(&mut s_grad);
        let mut grad: Vec<(usize, f64)> = s_grad.iter().map(|&(i, g)| (i, d1 * g)).collect();
        grad.extend_from_slice(&self.linear);
        merge(&mut grad);
        Some(ConstraintEval { value, grad, s_grad, d1, d2, locals })
    }
}

fn merge(v: &mut Vec<(usize, f64)>) {
    if v.len() < 2 {
        return;
    }
    v.sort_unstable_by_key(|e| e.0);
    let mut out = 0;
    for i in 1..v.len() {
        if v[i].0 == v[out].0 {
            v[out].1 += v[i].1;
        } else {
            out += 1;
            v[out] = v[i];
        }
    }
    v.truncate(out + 1);
}

/// Constraint value with first and second order information.
#[derive(Debug, Clone)]
pub struct ConstraintEval {
    pub value: f64,
    /// Sparse gradient with unique, sorted indices.
    pub grad: Vec<(usize, f64)>,
    s_grad: Vec<(usize, f64)>,
    d1: f64,
    d2: f64,
    locals: Vec<(f64, Local)>,
}

impl ConstraintEval {
    /// Adds `w · ∇²f` to the dense matrix `h`.
    pub fn add_hessian(&self, w: f64, h: &mut DMatrix<f64>) {
        if self.d2 != 0.0 {
            add_outer(&self.s_grad, w * self.d2, h);
        }
        let w1 = w * self.d1;
        if w1 == 0.0 {
            return;
        }
        for (c, l) in &self.locals {
            for i in 0..l.n {
                for j in 0..l.n {
                    h[(l.idx[i], l.idx[j])] += w1 * c * l.hess[i][j];
                }
            }
        }
    }

    /// Dense Hessian, mostly for tests.
    pub fn hessian(&self, dim: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(dim, dim);
        self.add_hessian(1.0, &mut h);
        h
    }
}

/// `h += w · g gᵀ` for a sparse vector `g`.
pub fn add_outer(g: &[(usize, f64)], w: f64, h: &mut DMatrix<f64>) {
    for &(i, gi) in g {
        let s = w * gi;
        for &(j, gj) in g {
            h[(i, j)] += s * gj;
        }
    }
}

/// Named contiguous slice of the variable vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarBlock {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

/// Size of the subproblem as counted in the IPM complexity analysis: nominal
/// scalar variables plus constraint rows, including rows and variables that
/// the builder eliminated or found to be redundant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeAccount {
    pub variables: usize,
    pub constraints: usize,
    /// Nominal variables fixed to zero and removed from the vector.
    pub eliminated: usize,
}

impl SizeAccount {
    pub fn total(&self) -> usize {
        self.variables + self.constraints
    }
}

/// Minimize `cᵀx` over `lower < x < upper` and `f_i(x) ≤ 0`.
#[derive(Debug, Clone)]
pub struct ConvexSubproblem {
    pub kind: SubproblemKind,
    pub blocks: Vec<VarBlock>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    pub size: SizeAccount,
}

impl ConvexSubproblem {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum()
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    /// Largest scaled violation over constraints and box bounds; negative
    /// means strictly feasible. NaN values count as infinite violation.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for c in &self.constraints {
            let v = c.value(x) / c.scale;
            worst = worst.max(if v.is_nan() { f64::INFINITY } else { v });
        }
        for (i, &xi) in x.iter().enumerate() {
            worst = worst.max(self.lower[i] - xi).max(xi - self.upper[i]);
        }
        worst
    }
}

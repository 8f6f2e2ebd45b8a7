//! Brute-force and finite-difference references for testing.
//!
//! Nothing on the optimization path depends on this module. The signal model
//! is re-derived here from the raw scenario fields instead of reusing
//! [`crate::bound`], so that agreement between the two is a meaningful check.

use serde::{Deserialize, Serialize};

use crate::convexify::{ConvexSubproblem, Family};
use crate::driver::{initialize, run_bcd, BcdSettings};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::scenario::ScenarioConfig;

/// Default limit on the number of grid points.
pub const DEFAULT_GRID_CAP: usize = 10_000_000;

/// Grid points handled by one parallel task.
const CHUNK: usize = 4096;

// ---------------------------------------------------------------------------
// independent signal model

/// `(α_SI N_a, λ0 ξ N_a)`.
pub fn gains(cfg: &ScenarioConfig) -> (f64, f64) {
    let na = cfg.num_antennas as f64;
    (cfg.si_coeff * na, cfg.ref_gain * cfg.rcs * na)
}

pub fn distance(q: [f64; 2], g: [f64; 2], altitude: f64) -> f64 {
    let (dx, dy) = (q[0] - g[0], q[1] - g[1]);
    (altitude * altitude + dx * dx + dy * dy).sqrt()
}

fn pos(p: crate::Point2) -> [f64; 2] {
    [p.x, p.y]
}

/// Uplink SINR lower bound of device `k`.
pub fn comm_sinr(cfg: &ScenarioConfig, q: [f64; 2], power: f64, k: usize) -> f64 {
    let (l_si, l_t) = gains(cfg);
    let dk = distance(q, pos(cfg.devices[k].position), cfg.altitude);
    let dt = distance(q, pos(cfg.target), cfg.altitude);
    let leak = l_t.sqrt() / (dt * dt) + l_si.sqrt();
    cfg.ref_gain * cfg.devices[k].power / (dk * dk) / (leak * leak * power + cfg.noise_power)
}

/// Radar SINR lower bound, with device `interferer` transmitting or nobody.
pub fn radar_sinr(cfg: &ScenarioConfig, q: [f64; 2], power: f64, interferer: Option<usize>) -> f64 {
    let (l_si, l_t) = gains(cfg);
    let dt = distance(q, pos(cfg.target), cfg.altitude);
    let uplink = match interferer {
        Some(k) => {
            let dk = distance(q, pos(cfg.devices[k].position), cfg.altitude);
            cfg.ref_gain * cfg.devices[k].power / (dk * dk)
        }
        None => 0.0,
    };
    l_t * power / dt.powi(4) / (uplink + l_si * power + cfg.noise_power)
}

pub fn rate(cfg: &ScenarioConfig, q: [f64; 2], power: f64, k: usize) -> f64 {
    cfg.bandwidth * (1.0 + comm_sinr(cfg, q, power, k)).log2()
}

fn model_of(cfg: &ScenarioConfig, k: usize) -> usize {
    cfg.models.iter().position(|m| m.devices.contains(&k)).expect("validated scenario")
}

fn cap(cfg: &ScenarioConfig, k: usize) -> f64 {
    cfg.devices[k].samples * cfg.models[model_of(cfg, k)].sample_bits
}

/// Worst error surrogate given collected bits per device.
pub fn worst_error(cfg: &ScenarioConfig, bits: &[f64]) -> f64 {
    cfg.models
        .iter()
        .map(|m| {
            let v: f64 = m.devices.iter().map(|&k| bits[k]).sum::<f64>() / m.sample_bits + m.historical_samples;
            if m.error_exp == 0.0 {
                m.error_coeff
            } else {
                m.error_coeff * v.powf(-m.error_exp)
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// grid search over a built subproblem

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(index: usize, lo: f64, hi: f64, step: f64) -> Self {
        GridAxis { index, lo, hi, step }
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step
    }
}

/// Exhaustive grid over some variables of a [`ConvexSubproblem`].
///
/// Variables not on an axis take their value from `base`, except that
/// variables listed in `raise` are pushed to their tightest linear upper bound
/// (distance proxies, which every other row prefers large) and the
/// `epigraph` variable is lowered onto its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub base: Vec<f64>,
    pub raise: Vec<usize>,
    pub epigraph: Option<usize>,
    pub cap: usize,
    /// Scaled constraint slack accepted as feasible.
    pub tol: f64,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>, base: Vec<f64>) -> Self {
        GridSpec { axes, base, raise: Vec::new(), epigraph: None, cap: DEFAULT_GRID_CAP, tol: 1e-10 }
    }

    pub fn raise(mut self, vars: impl IntoIterator<Item = usize>) -> Self {
        self.raise.extend(vars);
        self
    }

    pub fn epigraph(mut self, var: usize) -> Self {
        self.epigraph = Some(var);
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// Number of grid points, saturating.
    pub fn points(&self) -> usize {
        self.axes.iter().fold(1usize, |n, a| n.saturating_mul(a.len()))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.base.len() != dim {
            return Err(Error::validation(format!("grid base has {} entries, problem has {dim}", self.base.len())));
        }
        for a in &self.axes {
            if !(a.step > 0.0 && a.step.is_finite() && a.hi >= a.lo && a.index < dim) {
                return Err(Error::validation(format!("bad grid axis {a:?}")));
            }
        }
        let n = self.points();
        if n > self.cap {
            return Err(Error::validation(format!("grid has {n} points, cap is {}", self.cap)));
        }
        Ok(())
    }

    /// Coordinates of grid point `index`; the first axis varies slowest.
    fn decode(&self, mut index: usize, x: &mut [f64]) {
        for a in self.axes.iter().rev() {
            let n = a.len();
            x[a.index] = a.value(index % n);
            index /= n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub point: Vec<f64>,
    pub value: f64,
    /// Linear grid index of the optimum.
    pub index: usize,
    pub points: usize,
    pub feasible_points: usize,
}

/// Fills the raised and epigraph variables of `x`.
fn complete(p: &ConvexSubproblem, grid: &GridSpec, x: &mut [f64]) {
    for &i in &grid.raise {
        let mut v = p.upper[i];
        x[i] = 0.0;
        for c in &p.constraints {
            if let Some(&(_, a)) = c.linear.iter().find(|(j, a)| *j == i && *a > 0.0) {
                v = v.min(-c.value(x) / a);
            }
        }
        x[i] = v;
    }
    if let Some(phi) = grid.epigraph {
        x[phi] = 0.0;
        let mut v = p.lower[phi];
        for c in &p.constraints {
            if c.linear.contains(&(phi, -1.0)) {
                v = v.max(c.value(x));
            }
        }
        x[phi] = v;
    }
}

/// Non-strict feasibility with scaled tolerance.
pub fn grid_feasible(p: &ConvexSubproblem, x: &[f64], tol: f64) -> bool {
    let in_box = x.iter().enumerate().all(|(i, &v)| {
        let slack = tol * v.abs().max(1.0);
        v >= p.lower[i] - slack && v <= p.upper[i] + slack
    });
    in_box
        && p.constraints.iter().all(|c| {
            let v = c.value(x) / c.scale;
            v <= tol
        })
}

/// Best feasible grid point by objective value; ties go to the lowest index.
pub fn grid_minimize(p: &ConvexSubproblem, grid: &GridSpec) -> Result<GridOptimum> {
    grid.validate(p.dim())?;
    let points = grid.points();
    let chunks = points.div_ceil(CHUNK);
    let partial = par::map_range(Execution::Parallel, chunks, |c| {
        let mut x = grid.base.clone();
        let mut best: Option<(f64, usize)> = None;
        let mut feasible = 0;
        for index in c * CHUNK..((c + 1) * CHUNK).min(points) {
            grid.decode(index, &mut x);
            complete(p, grid, &mut x);
            if !grid_feasible(p, &x, grid.tol) {
                continue;
            }
            feasible += 1;
            let v = p.objective_value(&x);
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, index));
            }
        }
        (best, feasible)
    });
    let mut best: Option<(f64, usize)> = None;
    let mut feasible_points = 0;
    // chunks arrive in index order, so strict comparison keeps the lowest index
    for (b, f) in partial {
        feasible_points += f;
        if let Some((v, i)) = b {
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, i));
            }
        }
    }
    let (value, index) = best.ok_or(Error::NoFeasibleGridPoint)?;
    let mut point = grid.base.clone();
    grid.decode(index, &mut point);
    complete(p, grid, &mut point);
    Ok(GridOptimum { point, value, index, points, feasible_points })
}

/// Indices of the variables appearing linearly with coefficient `+1` in the
/// rows of `family`, i.e. the proxies those rows bound from above.
pub fn proxies_of(p: &ConvexSubproblem, family: Family) -> Vec<usize> {
    let mut out: Vec<usize> = p
        .constraints
        .iter()
        .filter(|c| c.family == family)
        .filter_map(|c| c.linear.iter().find(|(_, a)| *a == 1.0).map(|(i, _)| *i))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

// ---------------------------------------------------------------------------
// finite differences

/// Central differences with step `h` per coordinate.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "step must be positive");
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// global search on toy instances

/// Resolution of the global search in [`exhaustive_toy_bcd_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGrid {
    /// Power levels on `[0, p_UAV]`, endpoints included.
    pub power_levels: usize,
    /// Time shares are multiples of `1 / share_levels`.
    pub share_levels: usize,
    /// Spacing of the waypoint grid in meters.
    pub waypoint_step: f64,
    /// Allowed amount by which the local solution may beat the grid optimum.
    pub slack: f64,
    pub cap: usize,
}

impl Default for ToyGrid {
    fn default() -> Self {
        ToyGrid { power_levels: 41, share_levels: 10, waypoint_step: 10.0, slack: 1e-3, cap: DEFAULT_GRID_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    /// Final worst error of the local method, `None` when it reported the
    /// scenario infeasible.
    pub bcd_eta: Option<f64>,
    pub bcd_iterations: usize,
    pub bcd_feasible: bool,
    /// Best worst error on the grid, `None` without a feasible grid point.
    pub global_eta: Option<f64>,
    pub grid_points: usize,
    /// Both sides agree on feasibility and the local result is not better
    /// than the grid optimum by more than the slack.
    pub consistent: bool,
    /// The local result falls short of the grid optimum by more than 20% of
    /// the improvement over collecting nothing.
    pub flagged: bool,
}

/// One slot of a toy candidate: time shares and power.
#[derive(Debug, Clone)]
struct SlotChoice {
    beta: Vec<f64>,
    power: f64,
}

fn slot_choices(cfg: &ScenarioConfig, grid: &ToyGrid) -> Vec<SlotChoice> {
    let k_dev = cfg.devices.len();
    let l = grid.share_levels;
    let mut shares: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..k_dev {
        shares = shares
            .into_iter()
            .flat_map(|s| {
                let used: usize = s.iter().sum();
                (0..=l - used).map(move |v| {
                    let mut t = s.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    let levels = grid.power_levels.max(2);
    let mut out = Vec::new();
    for i in 0..levels {
        let power = cfg.uav_power_cap * i as f64 / (levels - 1) as f64;
        for s in &shares {
            out.push(SlotChoice { beta: s.iter().map(|&v| v as f64 / l as f64).collect(), power });
        }
    }
    out
}

/// Worst error of one toy candidate under the relaxed constraints, or `None`
/// when infeasible.
fn toy_value(cfg: &ScenarioConfig, waypoints: &[[f64; 2]], slots: &[&SlotChoice]) -> Option<f64> {
    let k_dev = cfg.devices.len();
    let mut bits = vec![0.0; k_dev];
    for (s, q) in slots.iter().zip(waypoints) {
        let mut worst = radar_sinr(cfg, *q, s.power, None);
        for k in 0..k_dev {
            if s.beta[k] > 0.0 {
                worst = worst.min(radar_sinr(cfg, *q, s.power, Some(k)));
                bits[k] += cfg.slot_len * s.beta[k] * rate(cfg, *q, s.power, k);
            }
        }
        if worst < cfg.sensing_threshold * (1.0 - 1e-12) {
            return None;
        }
    }
    for (k, &b) in bits.iter().enumerate() {
        if b > cap(cfg, k) * (1.0 + 1e-12) {
            return None;
        }
    }
    Some(worst_error(cfg, &bits))
}

/// Runs the block coordinate descent on a toy scenario (at most two devices
/// and two slots) and compares it with an exhaustive grid over time shares,
/// powers and the free waypoint.
pub fn exhaustive_toy_bcd_check(cfg: &ScenarioConfig, grid: &ToyGrid) -> Result<ToyReport> {
    let (k_dev, n_slots) = (cfg.devices.len(), cfg.num_slots);
    if k_dev > 2 || n_slots > 2 {
        return Err(Error::validation("toy check needs at most two devices and two slots"));
    }
    let depot = pos(cfg.depot);
    let step = cfg.v_max * cfg.slot_len;
    // the last waypoint is the depot, so only q_1 of a two-slot flight moves
    let mut middles = vec![depot];
    if n_slots == 2 {
        middles.clear();
        let m = (step / grid.waypoint_step).floor() as i64;
        for i in -m..=m {
            for j in -m..=m {
                let d = [i as f64 * grid.waypoint_step, j as f64 * grid.waypoint_step];
                if (d[0] * d[0] + d[1] * d[1]).sqrt() <= step {
                    middles.push([depot[0] + d[0], depot[1] + d[1]]);
                }
            }
        }
    }
    let choices = slot_choices(cfg, grid);
    let per_q = choices.len().pow(n_slots as u32);
    let grid_points = middles.len() * per_q;
    if grid_points > grid.cap {
        return Err(Error::validation(format!("toy grid has {grid_points} points, cap is {}", grid.cap)));
    }
    let partial = par::map(Execution::Parallel, &middles, |&mid| {
        let waypoints: Vec<[f64; 2]> = if n_slots == 2 { vec![mid, depot] } else { vec![depot] };
        let mut best: Option<f64> = None;
        for idx in 0..per_q {
            let slots: Vec<&SlotChoice> =
                (0..n_slots).map(|n| &choices[(idx / choices.len().pow(n as u32)) % choices.len()]).collect();
            if let Some(v) = toy_value(cfg, &waypoints, &slots) {
                if best.is_none_or(|b| v < b) {
                    best = Some(v);
                }
            }
        }
        best
    });
    let global_eta = partial.into_iter().flatten().reduce(f64::min);

    let sc = crate::Scenario::new(cfg.clone());
    let (bcd_eta, bcd_iterations, bcd_feasible) = match initialize(&sc) {
        Ok(init) => {
            let r = run_bcd(&sc, &init, &BcdSettings::for_scenario(&sc))?;
            (Some(r.eta_relaxed), r.iterations.len(), r.audit_relaxed.feasible)
        }
        Err(Error::Infeasible { .. }) => (None, 0, false),
        Err(e) => return Err(e),
    };
    let nothing = worst_error(cfg, &vec![0.0; k_dev]);
    let (consistent, flagged) = match (bcd_eta, global_eta) {
        (Some(b), Some(g)) => {
            let gap = (b - g) / (nothing - g).max(1e-15);
            (bcd_feasible && b >= g - grid.slack, gap > 0.2)
        }
        (None, None) => (true, false),
        // the grid may miss a thin feasible set, the local method may not
        (Some(_), None) => (bcd_feasible, false),
        (None, Some(_)) => (false, true),
    };
    Ok(ToyReport { bcd_eta, bcd_iterations, bcd_feasible, global_eta, grid_points, consistent, flagged })
}

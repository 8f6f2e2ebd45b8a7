//! Block coordinate descent over time allocation, trajectory and power, the
//! final repair toward the original problem, and the two baselines.

use std::time::Instant;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bound::{audit, data_volume, eta, radar_sinr, AuditReport, Decision, RateModel};
use crate::convexify::{
    build_p3, build_p5, build_p7, BlockSubproblem, Objective, P5Options, SizeAccount, SubproblemKind,
};
use crate::error::{Error, Result};
use crate::geometry::distance_sq;
use crate::par::{self, Execution};
use crate::scenario::Scenario;
use crate::solver::{solve, SolverSettings, SolverStatus};

/// Devices admitted at initialization must clear the radar threshold by
/// this factor, which leaves every barrier subproblem a strict interior.
pub const ADMISSION_MARGIN: f64 = 1.01;

/// Initial devices collect at most this fraction of their stored data.
const INITIAL_FILL: f64 = 0.5;

/// Relative slack under which a device counts as within its data cap when
/// rectifying.
const RECTIFY_SLACK: f64 = 1e-12;

pub type InitialPoint = Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Proposed,
    #[serde(rename = "tmax")]
    TMax,
    #[serde(rename = "constp")]
    ConstP,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::TMax => "tmax",
            Algorithm::ConstP => "constp",
        }
    }

    fn objective(self) -> Objective {
        match self {
            Algorithm::TMax => Objective::MinThroughput,
            _ => Objective::LearningError,
        }
    }

    fn blocks(self) -> &'static [SubproblemKind] {
        match self {
            Algorithm::ConstP => &[SubproblemKind::P3, SubproblemKind::P5],
            _ => &[SubproblemKind::P3, SubproblemKind::P5, SubproblemKind::P7],
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "tmax" => Ok(Algorithm::TMax),
            "constp" => Ok(Algorithm::ConstP),
            other => Err(format!("unknown algorithm `{other}` (expected proposed, tmax or constp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdSettings {
    /// Stop when the objective changes by less than this between iterations.
    pub tol: f64,
    pub max_iterations: usize,
    pub solver: SolverSettings,
    /// Half-width of the waypoint box used when retrying a failed trajectory
    /// update, as a fraction of the per-slot travel `v_max δ`.
    pub retry_trust: f64,
}

impl BcdSettings {
    pub fn for_scenario(sc: &Scenario) -> Self {
        BcdSettings { tol: sc.bcd_tol, max_iterations: 100, solver: SolverSettings::default(), retry_trust: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: SubproblemKind,
    pub status: Option<SolverStatus>,
    pub accepted: bool,
    pub retried: bool,
    pub newton_steps: usize,
    pub phase1_steps: usize,
    /// Optimal epigraph value of the surrogate.
    pub surrogate_objective: f64,
    pub kkt_residual: f64,
    pub size: SizeAccount,
    pub note: Option<String>,
    /// Worst surrogate error of the current decision after this block.
    pub eta_after: f64,
    /// Objective driving the run after this block.
    pub merit_after: f64,
    /// The current decision passes the relaxed audit after this block.
    pub feasible_after: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Worst surrogate error after the iteration.
    pub eta: f64,
    /// Objective driving the run (η, or the negated normalized minimum
    /// throughput for the throughput baseline).
    pub merit: f64,
    /// Devices with a positive collected volume.
    pub served: usize,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    BlockFailure { block: SubproblemKind, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub sensing_threshold: f64,
    pub period: f64,
    pub uav_power_cap: f64,
    pub initial_eta: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    /// Last BCD iterate, feasible for the relaxed problem.
    pub relaxed: Decision,
    /// After capping exact data volumes.
    pub decision: Decision,
    pub audit_relaxed: AuditReport,
    pub audit_original: AuditReport,
    /// Worst surrogate error of the relaxed iterate.
    pub eta_relaxed: f64,
    /// Worst surrogate error of the final decision with exact rates.
    pub eta_original: f64,
    /// Exact collected bits over stored bits, per device.
    pub collected_fraction: Vec<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    /// `η` before the first and after every iteration.
    pub fn eta_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_eta).chain(self.iterations.iter().map(|r| r.eta)).collect()
    }
}

/// Hover at the depot, raise the power until every device whose transmission
/// is compatible with sensing there (with [`ADMISSION_MARGIN`]) is admitted,
/// and give admitted devices equal shares of every slot.
pub fn initialize(sc: &Scenario) -> Result<InitialPoint> {
    let c = &sc.consts;
    let gamma = sc.sensing_threshold;
    let dt = distance_sq(sc.depot, sc.target, sc.altitude);
    let echo = c.lambda_t / (dt * dt);
    let radar_err = |detail: String| Error::Infeasible { constraint: "radar".into(), detail };
    if echo <= gamma * c.lambda_si {
        return Err(radar_err(format!(
            "threshold {gamma:e} exceeds the self-interference ceiling {:e} at the depot",
            echo / c.lambda_si
        )));
    }
    let idle_power = gamma * sc.noise_power / (echo - gamma * c.lambda_si);
    if idle_power > sc.uav_power_cap {
        return Err(radar_err(format!(
            "sensing at the depot needs {idle_power:e} W, above the {:e} W cap",
            sc.uav_power_cap
        )));
    }
    let strict = gamma * ADMISSION_MARGIN;
    let admitted: Vec<usize> =
        (0..sc.num_devices()).filter(|&k| radar_sinr(sc, sc.depot, sc.uav_power_cap, Some(k)) >= strict).collect();
    if admitted.is_empty() {
        return Err(radar_err(format!(
            "no device can transmit at the depot without pushing the radar SINR below {gamma:e}"
        )));
    }
    let power = admitted
        .iter()
        .map(|&k| {
            let interference = crate::bound::device_gain(sc, sc.depot, k);
            strict * (interference + sc.noise_power) / (echo - strict * c.lambda_si)
        })
        .fold(idle_power, f64::max)
        .min(sc.uav_power_cap);

    let mut dec = Decision::hover(sc, power);
    let share = 1.0 / (sc.num_devices() + 1) as f64;
    for &k in &admitted {
        for n in 1..=sc.num_slots {
            dec.beta[k][n] = share;
        }
        let volume = data_volume(sc, &dec, k, RateModel::Bound);
        let limit = INITIAL_FILL * sc.data_cap(k);
        if volume > limit {
            let s = limit / volume;
            dec.beta[k].iter_mut().for_each(|b| *b *= s);
        }
    }
    dec.phi = eta(sc, &dec);
    let report = audit(sc, &dec, false);
    if !report.feasible {
        return Err(Error::Infeasible {
            constraint: report.violated().join(","),
            detail: "initial hover point violates the relaxed constraints".into(),
        });
    }
    Ok(dec)
}

/// Largest sensing threshold for which [`initialize`] succeeds, found by
/// bisection on a log scale.
pub fn largest_initializable_gamma_th(sc: &Scenario) -> Result<f64> {
    let ok = |g: f64| -> Result<bool> {
        let cfg = sc.cfg.with_sensing_threshold(g)?;
        Ok(initialize(&Scenario::new(cfg)).is_ok())
    };
    let dt = distance_sq(sc.depot, sc.target, sc.altitude);
    let mut hi = sc.consts.lambda_t / (dt * dt) / sc.consts.lambda_si;
    let mut lo = hi * 1e-12;
    if !ok(lo)? {
        return Err(Error::Infeasible {
            constraint: "radar".into(),
            detail: "no sensing threshold admits a transmitting device at the depot".into(),
        });
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Scales down the time shares of every device whose exact collected data
/// exceeds its store, so that it collects exactly what it stores.
pub fn rectify(sc: &Scenario, dec: &Decision) -> Decision {
    let mut out = dec.clone();
    for k in 0..sc.num_devices() {
        let exact = data_volume(sc, dec, k, RateModel::Exact);
        let cap = sc.data_cap(k);
        if exact > cap * (1.0 + RECTIFY_SLACK) {
            let s = cap / exact;
            out.beta[k].iter_mut().for_each(|b| *b *= s);
        }
    }
    out
}

/// Objective that drives a run, as (served devices, value to minimize).
fn merit(sc: &Scenario, dec: &Decision, objective: Objective) -> (usize, f64) {
    match objective {
        Objective::LearningError => (0, eta(sc, dec)),
        Objective::MinThroughput => {
            let s = crate::convexify::throughput_scale(sc);
            let served: Vec<f64> =
                (0..sc.num_devices()).map(|k| data_volume(sc, dec, k, RateModel::Bound)).filter(|&a| a > 0.0).collect();
            let worst = served.iter().copied().fold(f64::INFINITY, f64::min);
            (served.len(), if served.is_empty() { 0.0 } else { -worst / s })
        }
    }
}

fn served(sc: &Scenario, dec: &Decision) -> usize {
    (0..sc.num_devices()).filter(|&k| data_volume(sc, dec, k, RateModel::Bound) > 0.0).count()
}

/// `a` is at least as good as `b`: more served devices first, then a lower value.
fn no_worse(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 <= b.1)
}

struct Attempt {
    next: Option<Decision>,
    record: BlockRecord,
    /// No usable solution (as opposed to a solution that did not improve).
    infeasible_result: bool,
}

impl Attempt {
    fn failed(&self) -> bool {
        self.record.status != Some(SolverStatus::Optimal) || self.infeasible_result
    }
}

fn attempt(
    sc: &Scenario,
    cur: &Decision,
    block: SubproblemKind,
    objective: Objective,
    settings: &BcdSettings,
    trust: Option<f64>,
) -> Attempt {
    let clock = Instant::now();
    let built: Result<Box<dyn BlockSubproblem>> = match block {
        SubproblemKind::P3 => build_p3(sc, cur, objective).map(|b| Box::new(b) as Box<dyn BlockSubproblem>),
        SubproblemKind::P5 => build_p5(sc, cur, objective, P5Options { trust }).map(|b| Box::new(b) as _),
        SubproblemKind::P7 => build_p7(sc, cur, objective).map(|b| Box::new(b) as _),
    };
    let mut record = BlockRecord {
        block,
        status: None,
        accepted: false,
        retried: trust.is_some(),
        newton_steps: 0,
        phase1_steps: 0,
        surrogate_objective: f64::NAN,
        kkt_residual: f64::NAN,
        size: SizeAccount::default(),
        note: None,
        eta_after: f64::NAN,
        merit_after: f64::NAN,
        feasible_after: false,
        wall_time_s: 0.0,
    };
    let built = match built {
        Ok(b) => b,
        Err(e) => {
            record.note = Some(e.to_string());
            record.wall_time_s = clock.elapsed().as_secs_f64();
            return Attempt { next: None, record, infeasible_result: true };
        }
    };
    let problem = built.problem();
    record.size = problem.size;
    let out = solve(problem, &built.warm_start(cur), &settings.solver);
    record.status = Some(out.status);
    record.newton_steps = out.iterations;
    record.phase1_steps = out.phase1_iterations;
    record.surrogate_objective = out.objective;
    record.kkt_residual = out.kkt_residual;
    let mut next = None;
    let mut infeasible_result = false;
    if out.status == SolverStatus::Optimal {
        let cand = built.apply(&out.x, cur);
        let report = audit(sc, &cand, false);
        if !report.feasible {
            record.note = Some(format!("solution violates {}", report.violated().join(",")));
            infeasible_result = true;
        } else if no_worse(merit(sc, &cand, objective), merit(sc, cur, objective)) {
            record.accepted = true;
            next = Some(cand);
        } else {
            record.note = Some("no descent; block kept".into());
        }
    } else {
        record.note = Some(format!("solver status {:?}", out.status));
    }
    record.wall_time_s = clock.elapsed().as_secs_f64();
    Attempt { next, record, infeasible_result }
}

fn run(sc: &Scenario, init: &Decision, settings: &BcdSettings, algorithm: Algorithm) -> Result<RunReport> {
    let clock = Instant::now();
    let objective = algorithm.objective();
    let start_audit = audit(sc, init, false);
    if !start_audit.feasible {
        return Err(Error::Infeasible {
            constraint: start_audit.violated().join(","),
            detail: "starting point is not feasible".into(),
        });
    }
    let mut cur = init.clone();
    cur.phi = eta(sc, &cur);
    let initial_eta = cur.phi;
    let mut prev = merit(sc, &cur, objective);
    let mut iterations = Vec::new();
    let mut termination = Termination::MaxIterations;

    'outer: for it in 1..=settings.max_iterations {
        let mut blocks = Vec::new();
        for &block in algorithm.blocks() {
            let mut a = attempt(sc, &cur, block, objective, settings, None);
            if a.failed() && block == SubproblemKind::P5 {
                debug!("iteration {it}: trajectory update failed ({:?}), retrying in a trust box", a.record.note);
                a.record.eta_after = eta(sc, &cur);
                a.record.merit_after = merit(sc, &cur, objective).1;
                a.record.feasible_after = audit(sc, &cur, false).feasible;
                blocks.push(a.record);
                let trust = settings.retry_trust * sc.v_max * sc.slot_len;
                a = attempt(sc, &cur, block, objective, settings, Some(trust));
            }
            let failed = a.failed();
            let detail = a.record.note.clone().unwrap_or_default();
            if let Some(next) = a.next {
                cur = next;
            }
            a.record.eta_after = eta(sc, &cur);
            a.record.merit_after = merit(sc, &cur, objective).1;
            a.record.feasible_after = audit(sc, &cur, false).feasible;
            blocks.push(a.record);
            if failed {
                warn!("iteration {it}: block {block:?} failed: {detail}");
                let now = merit(sc, &cur, objective);
                iterations.push(IterationRecord {
                    iteration: it,
                    eta: eta(sc, &cur),
                    merit: now.1,
                    served: served(sc, &cur),
                    blocks,
                });
                termination = Termination::BlockFailure { block, detail };
                break 'outer;
            }
        }
        let now = merit(sc, &cur, objective);
        let eta_now = eta(sc, &cur);
        info!("{} iteration {it}: eta {eta_now:.9}", algorithm.name());
        iterations.push(IterationRecord {
            iteration: it,
            eta: eta_now,
            merit: now.1,
            served: served(sc, &cur),
            blocks,
        });
        if now.0 == prev.0 && (prev.1 - now.1).abs() < settings.tol {
            termination = Termination::Converged;
            break;
        }
        prev = now;
    }

    cur.phi = eta(sc, &cur);
    let decision = rectify(sc, &cur);
    let audit_relaxed = audit(sc, &cur, false);
    let audit_original = audit(sc, &decision, true);
    let collected_fraction = (0..sc.num_devices()).map(|k| audit_original.bits_exact[k] / sc.data_cap(k)).collect();
    Ok(RunReport {
        algorithm,
        sensing_threshold: sc.sensing_threshold,
        period: sc.period,
        uav_power_cap: sc.uav_power_cap,
        initial_eta,
        iterations,
        termination,
        eta_relaxed: audit_relaxed.eta,
        eta_original: audit_original.eta_exact,
        relaxed: cur,
        decision,
        audit_relaxed,
        audit_original,
        collected_fraction,
        wall_time_s: clock.elapsed().as_secs_f64(),
    })
}

pub fn run_bcd(sc: &Scenario, init: &InitialPoint, settings: &BcdSettings) -> Result<RunReport> {
    run(sc, init, settings, Algorithm::Proposed)
}

/// Same block structure, maximizing the smallest collected volume.
pub fn run_tmax(sc: &Scenario, init: &InitialPoint, settings: &BcdSettings) -> Result<RunReport> {
    run(sc, init, settings, Algorithm::TMax)
}

/// Power pinned at the cap; only time allocation and trajectory are updated.
pub fn run_constp(sc: &Scenario, init: &InitialPoint, settings: &BcdSettings) -> Result<RunReport> {
    let mut start = init.clone();
    start.power[1..].iter_mut().for_each(|p| *p = sc.uav_power_cap);
    run(sc, &start, settings, Algorithm::ConstP)
}

pub fn run_algorithm(
    sc: &Scenario,
    algorithm: Algorithm,
    init: &InitialPoint,
    settings: &BcdSettings,
) -> Result<RunReport> {
    match algorithm {
        Algorithm::Proposed => run_bcd(sc, init, settings),
        Algorithm::TMax => run_tmax(sc, init, settings),
        Algorithm::ConstP => run_constp(sc, init, settings),
    }
}

/// Random feasible variation of an initial point: time shares shrunk and
/// power raised toward the cap, both of which keep it feasible.
pub fn perturb_initial(sc: &Scenario, init: &InitialPoint, seed: u64) -> InitialPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = init.clone();
    for row in out.beta.iter_mut() {
        let s: f64 = rng.random_range(0.2..1.0);
        row.iter_mut().for_each(|b| *b *= s);
    }
    let lift: f64 = rng.random_range(0.0..1.0);
    for p in out.power[1..].iter_mut() {
        *p += lift * (sc.uav_power_cap - *p);
    }
    out.phi = eta(sc, &out);
    out
}

/// Runs from the plain initial point and `starts − 1` perturbed ones and
/// keeps the run with the lowest final error (earliest start on ties).
pub fn run_multistart(
    sc: &Scenario,
    algorithm: Algorithm,
    settings: &BcdSettings,
    starts: usize,
    seed: u64,
    exec: Execution,
) -> Result<RunReport> {
    let init = initialize(sc)?;
    let runs = par::map_range(exec, starts.max(1), |i| {
        let start = if i == 0 { init.clone() } else { perturb_initial(sc, &init, seed.wrapping_add(i as u64)) };
        run_algorithm(sc, algorithm, &start, settings)
    });
    let mut best: Option<RunReport> = None;
    for r in runs {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.eta_original < b.eta_original) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    #[test]
    fn unreachable_threshold_names_radar() {
        let sc = Scenario::new(ScenarioConfig::reference(1e12));
        match initialize(&sc) {
            Err(Error::Infeasible { constraint, .. }) => assert_eq!(constraint, "radar"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn initial_point_is_feasible() {
        let sc = Scenario::new(ScenarioConfig::reference(1e-3));
        let init = initialize(&sc).unwrap();
        assert!(audit(&sc, &init, false).feasible);
        assert!(init.power[1] <= sc.uav_power_cap);
    }

    #[test]
    fn rectify_halves_double_volume() {
        let sc = Scenario::new(ScenarioConfig::reference(1e-3));
        let mut dec = initialize(&sc).unwrap();
        let k = 2;
        let exact = data_volume(&sc, &dec, k, RateModel::Exact);
        let s = 2.0 * sc.data_cap(k) / exact;
        dec.beta[k].iter_mut().for_each(|b| *b *= s);
        let fixed = rectify(&sc, &dec);
        let after = data_volume(&sc, &fixed, k, RateModel::Exact);
        assert!((after / sc.data_cap(k) - 1.0).abs() < 1e-9);
        for n in 0..=sc.num_slots {
            assert!((fixed.beta[k][n] - dec.beta[k][n] / 2.0).abs() <= 1e-12 * dec.beta[k][n].max(1e-300));
        }
        assert_eq!(rectify(&sc, &fixed), fixed);
    }

    #[test]
    fn rectify_without_excess_is_identity() {
        let sc = Scenario::new(ScenarioConfig::reference(1e-3));
        let dec = initialize(&sc).unwrap();
        assert_eq!(rectify(&sc, &dec), dec);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [Algorithm::Proposed, Algorithm::TMax, Algorithm::ConstP] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
    }
}

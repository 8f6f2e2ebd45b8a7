//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isl_core::bound::{
    audit, comm_sinr_lb, data_volume, device_gain, error_surrogate, radar_sinr, radar_sinr_lb, rate_lb, Decision,
    RateModel,
};
use isl_core::convexify::transforms::{
    inv_quad_optimal, inv_quad_transform_ub, quad_transform_lb, taylor_inv_quart_lb, taylor_inv_sq_lb, taylor_sq_lb,
};
use isl_core::convexify::{
    build_p3, build_p5, build_p7, rate_tangent, BlockSubproblem, Constraint, ConvexSubproblem, Family, Objective,
    P5Options, SubproblemKind,
};
use isl_core::driver::{initialize, largest_initializable_gamma_th, Algorithm, RunReport, Termination};
use isl_core::exact::{exact_comm_sinr, exact_radar_sinr};
use isl_core::geometry::{distance_sq, Point2};
use isl_core::oracle::{grid_minimize, proxies_of, GridAxis, GridSpec};
use isl_core::output::write_run;
use isl_core::par::{self, Execution};
use isl_core::scenario::{ModelSpec, ScenarioConfig};
use isl_core::solver::{solve, SolverSettings, SolverStatus};
use isl_core::sweep::{run_config, RunOptions};
use isl_core::Scenario;

type Check = Result<String, String>;
type Criterion = fn(&Runs) -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs()).max(f64::MIN_POSITIVE)
    }
}

// ---------------------------------------------------------------------------
// shared runs

struct Runs {
    gamma: f64,
    cfg: ScenarioConfig,
    proposed: Result<RunReport, String>,
    constp: Result<RunReport, String>,
    tmax: Result<RunReport, String>,
    repeat: Result<RunReport, String>,
    /// T = 40, 70, 100.
    periods: Vec<Result<RunReport, String>>,
    /// 0.5, 0.75 and 1 times the largest initializable threshold.
    thresholds: Vec<Result<RunReport, String>>,
}

impl Runs {
    fn all(&self) -> impl Iterator<Item = &Result<RunReport, String>> {
        [&self.proposed, &self.constp, &self.tmax, &self.repeat]
            .into_iter()
            .chain(&self.periods)
            .chain(&self.thresholds)
    }
}

fn get(r: &Result<RunReport, String>) -> Result<&RunReport, String> {
    r.as_ref().map_err(|e| format!("run failed: {e}"))
}

const THRESHOLD_FACTORS: [f64; 3] = [0.5, 0.75, 1.0];
const PERIODS: [f64; 3] = [40.0, 70.0, 100.0];

fn shared_runs() -> Result<Runs, String> {
    let base = ScenarioConfig::reference(1e-3);
    let gamma = largest_initializable_gamma_th(&Scenario::new(base.clone())).map_err(|e| e.to_string())?;
    let cfg = base.with_sensing_threshold(gamma).map_err(|e| e.to_string())?;

    let mut jobs: Vec<(ScenarioConfig, Algorithm)> = vec![
        (cfg.clone(), Algorithm::Proposed),
        (cfg.clone(), Algorithm::ConstP),
        (cfg.clone(), Algorithm::TMax),
        (cfg.clone(), Algorithm::Proposed),
    ];
    for t in PERIODS {
        jobs.push((cfg.with_period(t).map_err(|e| e.to_string())?, Algorithm::Proposed));
    }
    for f in THRESHOLD_FACTORS {
        jobs.push((cfg.with_sensing_threshold(f * gamma).map_err(|e| e.to_string())?, Algorithm::Proposed));
    }
    let mut out = par::map(Execution::Parallel, &jobs, |(c, algorithm)| {
        let opts = RunOptions { algorithm: *algorithm, ..RunOptions::default() };
        run_config(c, &opts).map_err(|e| e.to_string())
    })
    .into_iter();
    let mut next = || out.next().unwrap();
    Ok(Runs {
        gamma,
        cfg,
        proposed: next(),
        constp: next(),
        tmax: next(),
        repeat: next(),
        periods: (0..3).map(|_| next()).collect(),
        thresholds: (0..3).map(|_| next()).collect(),
    })
}

// ---------------------------------------------------------------------------
// 1

fn monotone_descent(runs: &Runs) -> Check {
    let r = get(&runs.proposed)?;
    ensure(r.sensing_threshold == runs.gamma, || {
        format!("report threshold {:e} is not the initializable maximum {:e}", r.sensing_threshold, runs.gamma)
    })?;
    let trace = r.eta_trace();
    let rise = trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(rise <= 1e-9, || format!("eta rises by {rise:e} between iterations: {trace:?}"))?;
    let mut prev = r.initial_eta;
    for it in &r.iterations {
        for b in &it.blocks {
            ensure(b.eta_after <= prev + 1e-9, || {
                format!("iteration {} block {:?} raises eta {prev} -> {}", it.iteration, b.block, b.eta_after)
            })?;
            prev = b.eta_after;
        }
    }
    ensure(r.termination == Termination::Converged, || format!("terminated with {:?}", r.termination))?;
    let last = (trace[trace.len() - 1] - trace[trace.len() - 2]).abs();
    ensure(last < 1e-3, || format!("last change {last:e}"))?;
    ensure(r.iterations.len() <= 100, || format!("{} iterations", r.iterations.len()))?;
    ensure(r.wall_time_s <= 600.0, || format!("wall time {:.1} s", r.wall_time_s))?;
    Ok(format!(
        "gamma_th {:e}, {} iteration(s), eta {:.9} -> {:.9}, last change {last:.3e}, {:.2} s",
        r.sensing_threshold,
        r.iterations.len(),
        r.initial_eta,
        r.eta_relaxed,
        r.wall_time_s
    ))
}

// ---------------------------------------------------------------------------
// 2

fn baseline_ordering(runs: &Runs) -> Check {
    let p = get(&runs.proposed)?.eta_relaxed;
    let c = get(&runs.constp)?.eta_relaxed;
    let t = get(&runs.tmax)?.eta_relaxed;
    ensure(c - p >= -1e-6, || format!("ConstP {c} beats proposed {p}"))?;
    ensure(t - c >= -1e-6, || format!("TMax {t} beats ConstP {c}"))?;
    Ok(format!("proposed {p:.9} <= ConstP {c:.9} <= TMax {t:.9}"))
}

// ---------------------------------------------------------------------------
// 3

fn trends(runs: &Runs) -> Check {
    let by_t: Vec<f64> = runs.periods.iter().map(|r| get(r).map(|r| r.eta_relaxed)).collect::<Result<_, _>>()?;
    let by_g: Vec<f64> = runs.thresholds.iter().map(|r| get(r).map(|r| r.eta_relaxed)).collect::<Result<_, _>>()?;
    ensure(by_t.windows(2).all(|w| w[1] <= w[0]), || format!("eta over T {PERIODS:?} is {by_t:?}"))?;
    ensure(by_g.windows(2).all(|w| w[1] >= w[0]), || {
        format!("eta over gamma factors {THRESHOLD_FACTORS:?} is {by_g:?}")
    })?;
    Ok(format!("eta over T {PERIODS:?}: {by_t:.6?}; over gamma_th x {THRESHOLD_FACTORS:?}: {by_g:.6?}"))
}

// ---------------------------------------------------------------------------
// 4

const DRAWS: usize = 10_000;

fn random_point(rng: &mut ChaCha8Rng) -> Point2 {
    Point2::new(rng.random_range(1000.0..3000.0), rng.random_range(2000.0..3600.0))
}

fn bound_validity(runs: &Runs) -> Check {
    let sc = Scenario::new(runs.cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, excess: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(excess),
        None => worst.push((name, excess)),
    };
    let kdev = sc.num_devices();
    let h = sc.altitude;
    for _ in 0..DRAWS {
        let q = random_point(&mut rng);
        let p = rng.random_range(0.0..sc.uav_power_cap);
        let k = rng.random_range(0..kdev);
        record("comm SINR", comm_sinr_lb(&sc, q, p, k) - exact_comm_sinr(&sc, q, p, k));

        let beta = if rng.random_bool(0.5) { rng.random_range(0.0..1.0) } else { 0.0 };
        let active = (beta > 0.0).then_some(k);
        record("radar SINR", radar_sinr_lb(&sc, q, p, k, beta) - exact_radar_sinr(&sc, q, p, active));

        let g = match rng.random_range(0..3) {
            0 => sc.devices[k].position,
            1 => sc.target,
            _ => random_point(&mut rng),
        };
        let qp = random_point(&mut rng);
        let d2 = distance_sq(q, g, h);
        record("d^-2 expansion", taylor_inv_sq_lb(q, g, h, qp) - 1.0 / d2);
        record("d^2 expansion", taylor_sq_lb(q, g, h, qp) - d2);
        record("d^-4 expansion", taylor_inv_quart_lb(q, g, h, qp) - 1.0 / (d2 * d2));

        let f = rng.random_range(0.0..10.0);
        let gg = rng.random_range(0.01..10.0);
        let alpha = rng.random_range(0.0..10.0);
        record("quadratic transform", quad_transform_lb(f, gg, alpha) - f / gg);

        let f = rng.random_range(1e-6..10.0);
        let theta = rng.random_range(0.0..1.0);
        let rho = rng.random_range(1e-6..1.0) * 2.0 * gg.sqrt() / f;
        if let Some(ub) = inv_quad_transform_ub(f, gg, theta, rho) {
            record("log-rate bound", (f / gg).ln_1p() - ub);
        }

        // rates compared per unit bandwidth
        let p0 = rng.random_range(0.0..sc.uav_power_cap);
        let (r0, slope) = rate_tangent(&sc, q, p0, k);
        record("power tangent", (r0 + slope * (p - p0) - rate_lb(&sc, q, p, k)) / sc.bandwidth);
    }
    let bad: Vec<String> =
        worst.iter().filter(|w| w.1 > 1e-12).map(|w| format!("{} exceeds by {:e}", w.0, w.1)).collect();
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!("{} bounds x {DRAWS} draws, no violation above 1e-12", worst.len()))
}

// ---------------------------------------------------------------------------
// 5

/// Surrogate rows at the expansion point against the quantities they model.
fn row_tightness(sc: &Scenario, dec: &Decision, p: &ConvexSubproblem, x: &[f64]) -> Result<(f64, usize), String> {
    let phi = p.block("phi").ok_or("no phi block")?.start;
    let s = (0..sc.num_devices()).map(|k| sc.data_cap(k)).fold(0.0, f64::max);
    let c = &sc.consts;
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    let mut m = 0;
    for row in &p.constraints {
        let v = row.value(x);
        let (surrogate, truth) = match row.family {
            Family::LearningError => {
                let pair = (v + x[phi], error_surrogate(sc, dec, m));
                m += 1;
                pair
            }
            Family::Throughput => {
                let k = row.device.ok_or("throughput row without device")?;
                (-(v + x[phi]) * s, data_volume(sc, dec, k, RateModel::Bound))
            }
            Family::DataAvailability => {
                let k = row.device.ok_or("data row without device")?;
                (v + sc.data_cap(k), data_volume(sc, dec, k, RateModel::Bound))
            }
            Family::Radar => {
                let n = row.slot.ok_or("radar row without slot")?;
                let (q, pw) = (dec.trajectory[n], dec.power[n]);
                let truth = radar_sinr(sc, q, pw, row.device);
                let surrogate = match p.kind {
                    SubproblemKind::P7 => {
                        let den = row.device.map_or(0.0, |k| device_gain(sc, q, k)) + c.lambda_si * pw + sc.noise_power;
                        sc.sensing_threshold - v / den
                    }
                    _ => sc.sensing_threshold - v,
                };
                (surrogate, truth)
            }
            Family::DeviceProxy | Family::TargetProxy => {
                let n = row.slot.ok_or("proxy row without slot")?;
                let g = match row.device {
                    Some(k) => sc.devices[k].position,
                    None => sc.target,
                };
                let &(i, _) = row.linear.iter().find(|(_, a)| *a == 1.0).ok_or("proxy row without proxy")?;
                (x[i], distance_sq(dec.trajectory[n], g, sc.altitude))
            }
            Family::TimeBudget | Family::Mobility => continue,
        };
        let e = rel(surrogate, truth);
        if e > 1e-9 {
            return Err(format!(
                "{:?} {:?} row (slot {:?}, device {:?}): {surrogate} vs {truth}",
                p.kind, row.family, row.slot, row.device
            ));
        }
        worst = worst.max(e);
        rows += 1;
    }
    Ok((worst, rows))
}

fn tightness(runs: &Runs) -> Check {
    let sc = Scenario::new(runs.cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut check = |name: &str, s: f64, t: f64| -> Result<(), String> {
        let e = rel(s, t);
        worst = worst.max(e);
        ensure(e <= 1e-9, || format!("{name}: {s} vs {t}"))
    };
    for _ in 0..1000 {
        let f = rng.random_range(1e-3..10.0);
        let g = rng.random_range(1e-2..10.0);
        check("quadratic transform", quad_transform_lb(f, g, f.sqrt() / g), f / g)?;
        let (theta, rho) = inv_quad_optimal(f, g);
        check("log-rate bound", inv_quad_transform_ub(f, g, theta, rho).unwrap_or(f64::NAN), (f / g).ln_1p())?;
        let (q, t) = (random_point(&mut rng), random_point(&mut rng));
        let d2 = distance_sq(q, t, sc.altitude);
        check("d^-2 expansion", taylor_inv_sq_lb(q, t, sc.altitude, q), 1.0 / d2)?;
        check("d^2 expansion", taylor_sq_lb(q, t, sc.altitude, q), d2)?;
        check("d^-4 expansion", taylor_inv_quart_lb(q, t, sc.altitude, q), 1.0 / (d2 * d2))?;
        let p0 = rng.random_range(0.0..sc.uav_power_cap);
        let k = rng.random_range(0..sc.num_devices());
        check("power tangent", rate_tangent(&sc, q, p0, k).0, rate_lb(&sc, q, p0, k))?;
    }

    let init = initialize(&sc).map_err(|e| e.to_string())?;
    let later = get(&runs.proposed)?.relaxed.clone();
    let mut rows = 0;
    let mut builders = 0;
    for dec in [&init, &later] {
        for objective in [Objective::LearningError, Objective::MinThroughput] {
            let err = |e: isl_core::Error| e.to_string();
            let p3 = build_p3(&sc, dec, objective).map_err(err)?;
            let p5 = build_p5(&sc, dec, objective, P5Options::default()).map_err(err)?;
            let p7 = build_p7(&sc, dec, objective).map_err(err)?;
            let blocks: [&dyn BlockSubproblem; 3] = [&p3, &p5, &p7];
            for b in blocks {
                let (w, r) = row_tightness(&sc, dec, b.problem(), &b.warm_start(dec))?;
                worst = worst.max(w);
                rows += r;
                builders += 1;
            }
        }
    }
    Ok(format!("6 scalar surrogates x 1000 points, {rows} rows over {builders} builds; worst relative gap {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 6

/// Two devices with separate, data-hungry models, so the error objective
/// trades the devices off against each other.
fn toy(num_slots: usize) -> Result<Scenario, String> {
    let mut cfg = ScenarioConfig::reference(1e-4);
    cfg.devices.truncate(2);
    for d in &mut cfg.devices {
        d.samples = 800.0;
    }
    let model = ModelSpec {
        devices: vec![0],
        sample_bits: 6276.0,
        historical_samples: 10.0,
        error_coeff: 0.82,
        error_exp: 0.22,
    };
    cfg.models = vec![model.clone(), ModelSpec { devices: vec![1], ..model }];
    let cfg = cfg.with_period(num_slots as f64).map_err(|e| e.to_string())?;
    Ok(Scenario::new(cfg))
}

struct Comparison {
    solver_phi: f64,
    solver_x: Vec<f64>,
    grid_phi: f64,
    grid_x: Vec<f64>,
    /// Best value on the lattice cells around the solver point, minus the
    /// solver value.
    cell_slack: f64,
    points: usize,
}

fn compare_with_grid(p: &ConvexSubproblem, warm: &[f64], grid: GridSpec) -> Result<Comparison, String> {
    let out = solve(p, warm, &SolverSettings::default());
    ensure(out.status == SolverStatus::Optimal, || format!("{:?} solver status {:?}", p.kind, out.status))?;
    let best = grid_minimize(p, &grid).map_err(|e| e.to_string())?;
    // lattice points within one cell of the solver optimum
    let axes = grid
        .axes
        .iter()
        .map(|a| {
            let i = ((out.x[a.index] - a.lo) / a.step).floor() - 1.0;
            let lo = (a.lo + a.step * i.max(0.0)).min(a.hi);
            GridAxis::new(a.index, lo, (lo + 3.0 * a.step).min(a.hi), a.step)
        })
        .collect();
    let near = grid_minimize(p, &GridSpec { axes, ..grid })
        .map_err(|e| format!("no feasible lattice point near the optimum: {e}"))?;
    Ok(Comparison {
        solver_phi: out.objective,
        solver_x: out.x,
        grid_phi: best.value,
        grid_x: best.point,
        cell_slack: near.value - out.objective,
        points: best.points,
    })
}

fn common_checks(name: &str, c: &Comparison) -> Result<(), String> {
    ensure(c.solver_phi <= c.grid_phi + 1e-6, || format!("{name}: grid {} beats solver {}", c.grid_phi, c.solver_phi))?;
    ensure(c.grid_phi - c.solver_phi <= c.cell_slack.max(0.0) + 1e-12, || {
        format!(
            "{name}: grid {} further from solver {} than the cell slack {:e}",
            c.grid_phi, c.solver_phi, c.cell_slack
        )
    })
}

fn oracle_equivalence(_: &Runs) -> Check {
    let err = |e: isl_core::Error| e.to_string();
    let mut lines = Vec::new();

    // time shares, one slot, two devices
    let sc = toy(1)?;
    let dec = initialize(&sc).map_err(err)?;
    let p3 = build_p3(&sc, &dec, Objective::LearningError).map_err(err)?;
    let p = p3.problem();
    let beta = p.block("beta").ok_or("no beta block")?.clone();
    ensure(beta.len == 2, || format!("expected 2 share variables, got {}", beta.len))?;
    let warm = p3.warm_start(&dec);
    let axes = (beta.start..beta.start + beta.len).map(|i| GridAxis::new(i, 0.0, 1.0, 1e-3)).collect();
    let grid = GridSpec::new(axes, warm.clone()).epigraph(p.block("phi").unwrap().start);
    let c = compare_with_grid(p, &warm, grid)?;
    common_checks("P3", &c)?;
    ensure((c.solver_phi - c.grid_phi).abs() <= 1e-3, || format!("P3: solver {} grid {}", c.solver_phi, c.grid_phi))?;
    lines.push(format!("P3 phi {:.6} vs grid {:.6} ({} points)", c.solver_phi, c.grid_phi, c.points));

    // one free waypoint
    let sc = toy(2)?;
    let dec = initialize(&sc).map_err(err)?;
    let p5 = build_p5(&sc, &dec, Objective::LearningError, P5Options::default()).map_err(err)?;
    let p = p5.problem();
    let warm = p5.warm_start(&dec);
    let reach = sc.v_max * sc.slot_len;
    let axes = vec![
        GridAxis::new(0, sc.depot.x - reach, sc.depot.x + reach, 0.5),
        GridAxis::new(1, sc.depot.y - reach, sc.depot.y + reach, 0.5),
    ];
    let proxies = proxies_of(p, Family::DeviceProxy).into_iter().chain(proxies_of(p, Family::TargetProxy));
    let grid = GridSpec::new(axes, warm.clone()).raise(proxies).epigraph(p.block("phi").unwrap().start);
    let c = compare_with_grid(p, &warm, grid)?;
    common_checks("P5", &c)?;
    let moved = ((c.solver_x[0] - c.grid_x[0]).powi(2) + (c.solver_x[1] - c.grid_x[1]).powi(2)).sqrt();
    lines.push(format!(
        "P5 phi {:.6} vs grid {:.6} (cell slack {:.1e}, {moved:.2} m apart, {} points)",
        c.solver_phi, c.grid_phi, c.cell_slack, c.points
    ));

    // UAV power, one slot
    let sc = toy(1)?;
    let dec = initialize(&sc).map_err(err)?;
    let p7 = build_p7(&sc, &dec, Objective::LearningError).map_err(err)?;
    let p = p7.problem();
    let warm = p7.warm_start(&dec);
    let grid = GridSpec::new(vec![GridAxis::new(0, 0.0, sc.uav_power_cap, 1e-4)], warm.clone())
        .epigraph(p.block("phi").unwrap().start);
    let c = compare_with_grid(p, &warm, grid)?;
    common_checks("P7", &c)?;
    ensure((c.solver_x[0] - c.grid_x[0]).abs() <= 1e-4 + 1e-12, || {
        format!("P7: power {} vs grid {}", c.solver_x[0], c.grid_x[0])
    })?;
    lines.push(format!("P7 power {:.6e} W vs grid {:.6e} W", c.solver_x[0], c.grid_x[0]));
    Ok(lines.join("; "))
}

// ---------------------------------------------------------------------------
// 7

fn check_family(
    p: &ConvexSubproblem,
    base: &[f64],
    family: Family,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize), String> {
    let rows: Vec<_> = p.constraints.iter().filter(|c| c.family == family).collect();
    let width = |i: usize| {
        let w = p.upper[i] - p.lower[i];
        if w.is_finite() {
            w
        } else {
            1.0
        }
    };
    // scaled coordinates z_i = x_i / s_i
    let s: Vec<f64> = base.iter().enumerate().map(|(i, v)| v.abs().max(1e-2 * width(i))).collect();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..10 {
        let mut spread = 0.02;
        let x = loop {
            let x: Vec<f64> = (0..base.len())
                .map(|i| {
                    let v = base[i] + spread * s[i] * rng.random_range(-1.0..1.0);
                    let pad = 1e-3 * s[i];
                    v.clamp(p.lower[i] + pad, p.upper[i] - pad)
                })
                .collect();
            if rows.iter().all(|r| r.eval(&x).is_some()) {
                break x;
            }
            spread /= 2.0;
            ensure(spread > 1e-6, || format!("{:?} {family:?}: no evaluable point near the base", p.kind))?;
        };
        for &row in &rows {
            // the constant carries no gradient but can swamp the differences
            let row = Constraint { constant: 0.0, ..row.clone() };
            let ev = row.eval(&x).unwrap();
            let mut analytic = vec![0.0; x.len()];
            for &(i, g) in &ev.grad {
                analytic[i] = g * s[i];
            }
            let mut y = x.clone();
            let mut diff: f64 = 0.0;
            let mut norm: f64 = 0.0;
            for i in 0..x.len() {
                y[i] = x[i] + h * s[i];
                let up = row.value(&y);
                y[i] = x[i] - h * s[i];
                let down = row.value(&y);
                y[i] = x[i];
                let fd = (up - down) / (2.0 * h);
                diff = diff.max((fd - analytic[i]).abs());
                norm = norm.max(analytic[i].abs());
            }
            let e = if diff == 0.0 { 0.0 } else { diff / norm.max(f64::MIN_POSITIVE) };
            ensure(e <= 1e-5, || {
                format!(
                    "{:?} {family:?} row (slot {:?}, device {:?}): relative error {e:e}",
                    p.kind, row.slot, row.device
                )
            })?;
            worst = worst.max(e);
            checked += 1;
        }
    }
    Ok((worst, checked))
}

fn gradient_checks(runs: &Runs) -> Check {
    let sc = Scenario::new(runs.cfg.clone());
    let dec = get(&runs.proposed)?.relaxed.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let err = |e: isl_core::Error| e.to_string();
    let mut seen: Vec<Family> = Vec::new();
    let (mut worst, mut rows, mut pairs) = (0.0f64, 0, 0);
    for objective in [Objective::LearningError, Objective::MinThroughput] {
        let p3 = build_p3(&sc, &dec, objective).map_err(err)?;
        let p5 = build_p5(&sc, &dec, objective, P5Options::default()).map_err(err)?;
        let p7 = build_p7(&sc, &dec, objective).map_err(err)?;
        let blocks: [&dyn BlockSubproblem; 3] = [&p3, &p5, &p7];
        for b in blocks {
            let p = b.problem();
            let base = b.warm_start(&dec);
            let mut families: Vec<Family> = p.constraints.iter().map(|c| c.family).collect();
            families.dedup();
            families.sort_by_key(|f| format!("{f:?}"));
            families.dedup();
            for f in families {
                let (w, n) = check_family(p, &base, f, &mut rng)?;
                worst = worst.max(w);
                rows += n;
                pairs += 1;
                if !seen.contains(&f) {
                    seen.push(f);
                }
            }
        }
    }
    ensure(seen.len() == 8, || format!("only {} families were exercised: {seen:?}", seen.len()))?;
    Ok(format!("{pairs} builder/family pairs, {rows} row checks, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 8

fn feasibility(runs: &Runs) -> Check {
    let sc = Scenario::new(runs.cfg.clone());
    let init = initialize(&sc).map_err(|e| e.to_string())?;
    let a = audit(&sc, &init, false);
    ensure(a.feasible, || format!("initial point violates {:?}", a.violated()))?;
    let mut blocks = 0;
    let mut reports = 0;
    for r in runs.all() {
        let r = get(r)?;
        let sc = Scenario::new(
            runs.cfg
                .with_period(r.period)
                .and_then(|c| c.with_sensing_threshold(r.sensing_threshold))
                .map_err(|e| e.to_string())?,
        );
        for it in &r.iterations {
            for b in &it.blocks {
                ensure(b.feasible_after, || {
                    format!(
                        "{} iteration {} block {:?} leaves an infeasible iterate",
                        r.algorithm.name(),
                        it.iteration,
                        b.block
                    )
                })?;
                blocks += 1;
            }
        }
        let relaxed = audit(&sc, &r.relaxed, false);
        ensure(relaxed.feasible, || format!("{} final iterate violates {:?}", r.algorithm.name(), relaxed.violated()))?;
        let full = audit(&sc, &r.decision, true);
        ensure(full.feasible, || format!("{} final decision violates {:?}", r.algorithm.name(), full.violated()))?;
        reports += 1;
    }
    Ok(format!("{blocks} block iterates over {reports} runs feasible; every final decision passes the exact audit"))
}

// ---------------------------------------------------------------------------
// 9

fn size_accounting(runs: &Runs) -> Check {
    let sc = Scenario::new(runs.cfg.clone());
    let dec = initialize(&sc).map_err(|e| e.to_string())?;
    let (k, m, n) = (sc.num_devices(), sc.num_models(), sc.num_slots);
    let r_a = 3 * k * n + m + n + k + 1;
    let r_b = 3 * k * n + m + 3 * n + k + 1;
    let r_c = k * n + m + 2 * n + k + 1;
    let err = |e: isl_core::Error| e.to_string();
    let a = build_p3(&sc, &dec, Objective::LearningError).map_err(err)?.problem().size.total();
    let b = build_p5(&sc, &dec, Objective::LearningError, P5Options::default()).map_err(err)?.problem().size.total();
    let c = build_p7(&sc, &dec, Objective::LearningError).map_err(err)?.problem().size.total();
    ensure((a, b, c) == (r_a, r_b, r_c), || format!("sizes ({a}, {b}, {c}), expected ({r_a}, {r_b}, {r_c})"))?;
    Ok(format!("K={k} M={m} N={n}: r_a={a}, r_b={b}, r_c={c}"))
}

// ---------------------------------------------------------------------------
// 10

fn determinism(runs: &Runs) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_run(&a, get(&runs.proposed)?).map_err(|e| e.to_string())?;
    write_run(&b, get(&runs.repeat)?).map_err(|e| e.to_string())?;
    let files = ["trajectory.csv", "allocation.csv", "power.csv", "iterations.csv"];
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).map_err(|e| e.to_string());
    let mut bytes = 0;
    for f in files {
        let (x, y) = (read(&a, f)?, read(&b, f)?);
        ensure(x == y, || format!("{f} differs between identical runs"))?;
        bytes += x.len();
    }
    Ok(format!("{} files, {bytes} bytes identical", files.len()))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let start = Instant::now();
    let runs = match shared_runs() {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let criteria: [(&str, Criterion); 10] = [
        ("monotone descent", monotone_descent),
        ("baseline ordering", baseline_ordering),
        ("trend reproduction", trends),
        ("bound validity", bound_validity),
        ("tightness", tightness),
        ("oracle equivalence", oracle_equivalence),
        ("gradient checks", gradient_checks),
        ("feasibility", feasibility),
        ("size accounting", size_accounting),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        match f(&runs) {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.1} s]", i + 1, t.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

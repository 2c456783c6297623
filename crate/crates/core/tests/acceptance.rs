//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use flockadapt::analysis::{max_copy_mismatch, summarize};
use flockadapt::angle::wrap;
use flockadapt::audit::MONOTONE_TOL;
use flockadapt::dynamics::{autonomy_defect, check_coupling_conditions, coupling_fplus, symmetric_grid};
use flockadapt::equilibrium::{predict_for_scenario, solve_equilibrium_numeric, FrozenPattern, SolverOptions};
use flockadapt::fault::{apply_agent_loss, consistency_report};
use flockadapt::integrate::step_rk4;
use flockadapt::pattern::attainability_residual;
use flockadapt::scenario_file::bundled_scenario;
use flockadapt::sim::{InitialPhases, Trace};
use flockadapt::trace_csv::trace_to_csv_string;
use flockadapt::{run_scenario, AgentParams, DesiredCopies, InteractionTopology, PhaseVector, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D1: f64 = 2.0 * PI / 3.0;
const D2: f64 = 9.0 * PI / 13.0;
const D3: f64 = 18.0 * PI / 29.0;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(name: &str) -> Trace {
    run_scenario(&bundled_scenario(name).expect("bundled scenario")).expect("run succeeds")
}

/// Balanced post-loss coupling argument for losing agent 3 of the
/// canonical chain, from the stale formation vector `[D1, D2 - D1, -D3]`.
fn oracle_delta() -> f64 {
    -(D1 + (D2 - D1) - D3) / 3.0
}

fn oracle_speed_offset(delta: f64) -> f64 {
    3.0 * (2.0 / PI) * (5.0 * delta).atan()
}

fn nominal_convergence() -> Outcome {
    let start = Instant::now();
    let trace = run("canonical_4uav");
    let elapsed = start.elapsed().as_secs_f64();
    let s = trace.sample_at(100.0).ok_or("no sample at t = 100")?;
    let err = s.max_abs_shift_error();
    let dv = trace
        .speeds(s)
        .iter()
        .map(|(_, v)| (v - 12.0).abs())
        .fold(0.0, f64::max);
    check(
        err < 1e-3 && dv <= 0.01 && elapsed < 5.0,
        format!("max |error| at t=100 s {err:.3e} rad, max |v-12| {dv:.3e} m/s, runtime {elapsed:.2} s"),
    )
}

fn loss_phenomenon() -> Outcome {
    let trace = run("canonical_loss3_noadapt");
    let last = trace.final_sample();
    let errors: Vec<f64> = last
        .active_edges()
        .flat_map(|e| {
            let (a, b) = e.errors();
            [a, b]
        })
        .collect();
    let min_err = errors.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let sum = summarize(&trace);
    let delta = oracle_delta();
    let offset = oracle_speed_offset(delta);
    let mean_speed = sum.speeds.iter().map(|(_, v)| v).sum::<f64>() / sum.speeds.len() as f64;
    let speed_gap = ((mean_speed - 12.0) - offset).abs();
    let pred = predict_for_scenario(&trace.scenario).map_err(|e| e.to_string())?;
    let shift_gap = trace
        .final_order_shifts(last)
        .iter()
        .zip(&pred.steady_shifts)
        .map(|(e, p)| e.map_or(f64::INFINITY, |e| (e - p).abs()))
        .fold(0.0, f64::max);
    let delta_gap = (pred.delta - delta).abs();
    check(
        min_err > 0.05 && sum.speed_spread() <= 0.01 && speed_gap <= 0.02 && shift_gap <= 1e-3 && delta_gap < 1e-12,
        format!(
            "min |error| {min_err:.4} rad, speed spread {:.2e} m/s, cruise {mean_speed:.5} m/s vs {:.5} (gap {speed_gap:.2e}), shift gap {shift_gap:.2e} rad, δ {:.6}",
            sum.speed_spread(),
            12.0 + offset,
            pred.delta
        ),
    )
}

fn adaptation_cure(trace: &Trace) -> Outcome {
    let last = trace.final_sample();
    let sum = summarize(trace);
    let dv = sum.max_speed_deviation(12.0);
    let max_interaction = last.max_abs_interaction();
    let mismatch = max_copy_mismatch(last);
    check(
        dv <= 0.05 && max_interaction < 1e-3 && mismatch <= 1e-3,
        format!("max |v-12| {dv:.3e} m/s, max |I| {max_interaction:.3e} rad, max copy mismatch {mismatch:.3e} rad"),
    )
}

fn lyapunov_property(trace: &Trace) -> Outcome {
    let start = trace.scenario.adaptation.start_time;
    let after: Vec<_> = trace.samples.iter().filter(|s| s.time >= start).collect();
    let max_increase = after
        .windows(2)
        .map(|w| w[1].e - w[0].e)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_rate = after.iter().map(|s| s.lyapunov_rate).fold(f64::NEG_INFINITY, f64::max);
    check(
        max_increase <= MONOTONE_TOL && max_rate <= 0.0,
        format!(
            "{} samples, largest E step {max_increase:.3e}, largest lyapunov_rate {max_rate:.3e}",
            after.len()
        ),
    )
}

fn stability_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chain = InteractionTopology::chain(&[1, 2, 3, 4]).unwrap();
    let consistent = DesiredCopies::consistent(&[D1, D2, D3]).unwrap();
    let (_, stale) = apply_agent_loss(&chain, &consistent, 3).unwrap();
    let params = vec![AgentParams::default(); 4];
    let mut worst_defect = 0.0f64;
    for i in 0..100 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
        let d = if i % 2 == 0 {
            consistent.clone()
        } else {
            let pd: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.5)).collect();
            DesiredCopies::consistent(&pd).unwrap()
        };
        let defect = autonomy_defect(&chain, &PhaseVector::new(q).unwrap(), &d, &params).unwrap();
        worst_defect = worst_defect.max(defect);
    }
    // the stale post-loss system must satisfy it as well
    let t3 = InteractionTopology::chain(&[1, 2, 4]).unwrap();
    for _ in 0..10 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
        let defect = autonomy_defect(&t3, &PhaseVector::new(q).unwrap(), &stale, &params[..3]).unwrap();
        worst_defect = worst_defect.max(defect);
    }

    let mut worst_v_step = f64::NEG_INFINITY;
    for k in 0..20 {
        let n = rng.random_range(3..=6usize);
        let mut s = Scenario::canonical();
        s.name = format!("random_{k}");
        s.agents = (1..=n as u32).collect();
        s.desired_shifts = (0..n - 1).map(|_| rng.random_range(0.3..2.8)).collect();
        s.params = (0..n)
            .map(|_| AgentParams {
                v_f: rng.random_range(1.0..4.0),
                k_theta: rng.random_range(1.0..8.0),
                ..AgentParams::default()
            })
            .collect();
        s.initial_phases = InitialPhases::Explicit((0..n).map(|_| rng.random_range(-PI..PI)).collect());
        s.duration = 60.0;
        if n > 3 && k % 2 == 0 {
            s = s.with_loss(2, 30.0);
        }
        let t = run_scenario(&s).map_err(|e| e.to_string())?;
        // V is a function of the current topology; compare only samples
        // that straddle no loss event
        let step = t
            .samples
            .windows(2)
            .filter(|w| !s.events.iter().any(|e| e.time > w[0].time && e.time <= w[1].time))
            .map(|w| w[1].v - w[0].v)
            .fold(f64::NEG_INFINITY, f64::max);
        worst_v_step = worst_v_step.max(step);
    }

    let pd_params = vec![AgentParams::default(); 4];
    let system = FrozenPattern {
        topology: &chain,
        copies: &consistent,
        params: &pd_params,
    };
    let opts = SolverOptions {
        starts: 50,
        ..SolverOptions::default()
    };
    let report = solve_equilibrium_numeric(&system, &opts).map_err(|e| e.to_string())?;
    let root_gap = report
        .roots
        .first()
        .map(|r| {
            r.iter()
                .zip([D1, D2, D3])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);

    let a = AgentParams::default();
    let grid = symmetric_grid(PI, 200);
    let arctan = check_coupling_conditions(|u| coupling_fplus(u, &a), &grid);
    let deadzone = check_coupling_conditions(|u: f64| if u.abs() < 0.2 { 0.0 } else { u - 0.2 * u.signum() }, &grid);
    let deadzone_fails_3 = deadzone.zero_at_origin && !deadzone.sign_condition;

    check(
        worst_defect <= 1e-6
            && worst_v_step <= MONOTONE_TOL
            && report.roots.len() == 1
            && report.converged_starts == 50
            && root_gap < 1e-6
            && arctan.passed()
            && deadzone_fails_3,
        format!(
            "autonomy defect {worst_defect:.2e}; largest V step {worst_v_step:.2e}; {} root(s) from {} converged starts, gap {root_gap:.2e}; arctan {}; deadzone condition 3 {}",
            report.roots.len(),
            report.converged_starts,
            if arctan.passed() { "passes" } else { "fails" },
            if deadzone_fails_3 { "fails" } else { "passes" },
        ),
    )
}

fn attainability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=12u32);
        let ids: Vec<u32> = (1..=n).collect();
        let t = InteractionTopology::chain(&ids).unwrap();
        let pd: Vec<f64> = (1..n).map(|_| rng.random_range(-PI..PI)).collect();
        let r = attainability_residual(&t, &pd).unwrap();
        worst = worst.max(r.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let cycle = InteractionTopology::from_edges(&[1, 2, 3], &[(1, 2), (2, 3), (3, 1)]).unwrap();
    let r = attainability_residual(&cycle, &[1.0, 1.0, 1.0]).unwrap();
    let cycle_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    // least squares over the cycle leaves the mean circulation: [1, 1, 1]
    check(
        worst <= 1e-10 && (cycle_norm - 3f64.sqrt()).abs() < 1e-10,
        format!("worst chain residual {worst:.2e}; cycle residual norm {cycle_norm:.6}"),
    )
}

fn benign_end_loss() -> Outcome {
    let trace = run("endloss_benign");
    let (topology, copies, _) = trace.scenario.final_configuration().map_err(|e| e.to_string())?;
    let sigma = consistency_report(&copies, &topology)
        .map_err(|e| e.to_string())?
        .imbalance;
    let pred = predict_for_scenario(&trace.scenario).map_err(|e| e.to_string())?;
    let sum = summarize(&trace);
    let dv = sum.max_speed_deviation(12.0);
    check(
        sigma == 0.0 && pred.delta == 0.0 && sum.max_shift_error < 1e-3 && dv <= 0.01,
        format!(
            "σ {sigma}, δ {}, final max |error| {:.2e} rad, max |v-12| {dv:.2e} m/s",
            pred.delta, sum.max_shift_error
        ),
    )
}

fn vehicle_agreement() -> Outcome {
    let vehicle = run("vehicle_4uav");
    let phase = run("canonical_4uav");
    let (lv, lp) = (vehicle.final_sample(), phase.final_sample());
    let shift_gap = lv
        .active_edges()
        .zip(lp.active_edges())
        .map(|(a, b)| wrap(a.shift - b.shift).abs())
        .fold(0.0, f64::max);
    let settle = 100.0;
    let radius_dev = vehicle
        .samples
        .iter()
        .filter(|s| s.time >= settle)
        .flat_map(|s| {
            s.active_agents()
                .map(|a| (a.radius - 100.0).abs() / 100.0)
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    check(
        shift_gap <= 0.01 && radius_dev <= 0.01,
        format!(
            "final shift gap {shift_gap:.2e} rad; max radius deviation after t={settle} s {:.3}%",
            100.0 * radius_dev
        ),
    )
}

fn determinism_and_numerics() -> Outcome {
    let s = bundled_scenario("canonical_loss3_noadapt").unwrap();
    let a = trace_to_csv_string(&run_scenario(&s).unwrap());
    let b = trace_to_csv_string(&run_scenario(&s).unwrap());
    let identical = a == b;

    let mut fine = s.clone();
    fine.dt = s.dt / 2.0;
    let coarse_t = run_scenario(&s).unwrap();
    let fine_t = run_scenario(&fine).unwrap();
    let (c, f) = (summarize(&coarse_t), summarize(&fine_t));
    let speed_change = c
        .speeds
        .iter()
        .zip(&f.speeds)
        .map(|((_, x), (_, y))| (x - y).abs())
        .fold(0.0, f64::max);
    let err_change = (c.max_shift_error - f.max_shift_error).abs();

    let err = |dt: f64| {
        let n = (1.0 / dt).round() as usize;
        let mut y = vec![1.0];
        for i in 0..n {
            y = step_rk4(|_, y, dy| dy[0] = -y[0], i as f64 * dt, &y, dt).unwrap();
        }
        (y[0] - (-1.0f64).exp()).abs()
    };
    let order = (err(0.02) / err(0.01)).log2();

    check(
        identical && speed_change < 1e-5 && err_change < 1e-5 && (order - 4.0).abs() < 0.1,
        format!(
            "bit-identical CSV: {identical}; dt-halving speed change {speed_change:.2e} m/s, error change {err_change:.2e} rad; RK4 observed order {order:.3}"
        ),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let adapted = run("canonical_loss3_adapt");
    let criteria: Vec<Criterion<'_>> = vec![
        ("nominal convergence", Box::new(nominal_convergence)),
        ("loss without adaptation", Box::new(loss_phenomenon)),
        (
            "adaptation restores cruise speed",
            Box::new(|| adaptation_cure(&adapted)),
        ),
        (
            "Lyapunov property under adaptation",
            Box::new(|| lyapunov_property(&adapted)),
        ),
        ("stability suite", Box::new(stability_suite)),
        ("attainability", Box::new(attainability)),
        ("benign end loss", Box::new(benign_end_loss)),
        ("vehicle-layer agreement", Box::new(vehicle_agreement)),
        ("determinism and numerics", Box::new(determinism_and_numerics)),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

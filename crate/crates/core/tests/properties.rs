use std::f64::consts::PI;

use flockadapt::adaptation::{desired_rates, lyapunov_rate, AdaptationParams, Sigmoid};
use flockadapt::angle::wrap;
use flockadapt::dynamics::{autonomy_defect, pattern_rates, phase_rates, potential_v};
use flockadapt::equilibrium::predict_post_loss_equilibrium;
use flockadapt::fault::{apply_agent_loss, consistency_report};
use flockadapt::pattern::{attainability_residual, formation_vectors, interactions, objective_e, pattern_of};
use flockadapt::scenario_file::{scenario_from_str, scenario_to_string};
use flockadapt::sim::{InitialLayout, InitialPhases, ModelKind, VehicleModel};
use flockadapt::trace_csv::trace_to_csv_string;
use flockadapt::{
    run_scenario, AgentParams, DesiredCopies, EdgeCopies, InteractionTopology, PatternVector, PhaseVector, Scenario,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn chain(n: usize) -> InteractionTopology {
    let ids: Vec<u32> = (1..=n as u32).collect();
    InteractionTopology::chain(&ids).unwrap()
}

fn chain_and_pattern() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=12).prop_flat_map(|n| (Just(n), prop::collection::vec(-PI..PI, n - 1)))
}

fn chain_phases_copies() -> impl Strategy<Value = (usize, Vec<f64>, Vec<(f64, f64)>)> {
    (2usize..=8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec((-PI..PI, -PI..PI), n - 1),
        )
    })
}

fn copies_of(pairs: &[(f64, f64)]) -> DesiredCopies {
    DesiredCopies::from_edge_copies(pairs.iter().map(|&(tail, head)| EdgeCopies { tail, head }).collect()).unwrap()
}

fn params_strategy(n: usize) -> impl Strategy<Value = Vec<AgentParams>> {
    prop::collection::vec((50.0..200.0f64, 8.0..16.0f64, 0.5..5.0f64, 0.5..10.0f64), n).prop_map(|v| {
        v.into_iter()
            .map(|(rho, speed, v_f, k)| AgentParams::uniform_cruise(speed, rho, v_f, k))
            .collect()
    })
}

proptest! {
    #[test]
    fn pseudoinverse_identities((n, _) in chain_and_pattern()) {
        let t = chain(n);
        let l = t.incidence();
        let p = t.pinv();
        prop_assert!((l * p * l - l).amax() <= 1e-10);
        prop_assert!((p * l * p - p).amax() <= 1e-10);
        prop_assert!(t.has_full_row_rank());
    }

    #[test]
    fn chains_attain_every_pattern((n, pd) in chain_and_pattern()) {
        let r = attainability_residual(&chain(n), &pd).unwrap();
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn pattern_is_translation_invariant((n, q, _) in chain_phases_copies(), c in -50.0..50.0f64) {
        let t = chain(n);
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let a = pattern_of(&t, &PhaseVector::new(q.clone()).unwrap()).unwrap();
        let b = pattern_of(&t, &PhaseVector::new(shifted).unwrap()).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + c.abs() + x.abs()) * 4.0);
        }
    }

    #[test]
    fn interactions_antisymmetric_for_equal_copies((n, q, pairs) in chain_phases_copies()) {
        let t = chain(n);
        let consistent: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let d = DesiredCopies::consistent(&consistent).unwrap();
        let p = pattern_of(&t, &PhaseVector::new(q).unwrap()).unwrap();
        let it = interactions(&t, &p, &d).unwrap();
        for (k, e) in it.per_edge().iter().enumerate() {
            prop_assert_eq!(e.tail, -e.head, "edge {}", k);
        }
        // with consistent copies E is a quarter of the summed squared interactions
        let quarter: f64 = 0.25 * it.per_edge().iter().map(|e| e.tail * e.tail + e.head * e.head).sum::<f64>();
        let e = objective_e(&p, &d).unwrap();
        prop_assert!((e - quarter).abs() <= 1e-12 * (1.0 + e));
        let half: f64 = 0.5 * p.as_slice().iter().zip(&consistent).map(|(a, b)| wrap(a - b).powi(2)).sum::<f64>();
        prop_assert!((e - half).abs() <= 1e-12 * (1.0 + e));
    }

    #[test]
    fn formation_vector_sums_to_zero((n, q, pairs) in chain_phases_copies()) {
        let t = chain(n);
        let p = pattern_of(&t, &PhaseVector::new(q).unwrap()).unwrap();
        let fv = formation_vectors(&t, &p, &copies_of(&pairs)).unwrap();
        let scale: f64 = p.as_slice().iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(fv.x.iter().sum::<f64>().abs() <= 1e-12 * scale);
    }

    #[test]
    fn coupling_is_bounded(
        (n, q, pairs) in chain_phases_copies(),
        seed_params in params_strategy(8),
    ) {
        let t = chain(n);
        let params = &seed_params[..n];
        let rates = phase_rates(&t, &PhaseVector::new(q).unwrap(), &copies_of(&pairs), params).unwrap();
        for (r, a) in rates.iter().zip(params) {
            prop_assert!((r - a.omega).abs() < a.v_f / a.rho);
        }
    }

    #[test]
    fn pattern_rates_equal_incidence_times_phase_rates(
        (n, q, pairs) in chain_phases_copies(),
        seed_params in params_strategy(8),
    ) {
        let t = chain(n);
        let params = &seed_params[..n];
        let qv = PhaseVector::new(q).unwrap();
        let d = copies_of(&pairs);
        let qdot = DVector::from_vec(phase_rates(&t, &qv, &d, params).unwrap());
        let via_matrix = t.incidence() * qdot;
        let direct = pattern_rates(&t, &qv, &d, params).unwrap();
        for (a, b) in direct.as_slice().iter().zip(via_matrix.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn dynamics_are_autonomous_in_pattern_space((n, q, pairs) in chain_phases_copies()) {
        let t = chain(n);
        let params = vec![AgentParams::default(); n];
        let d = copies_of(&pairs);
        let defect = autonomy_defect(&t, &PhaseVector::new(q).unwrap(), &d, &params).unwrap();
        prop_assert!(defect <= 1e-6, "defect {}", defect);
    }

    #[test]
    fn potential_is_even_and_minimal_at_zero(u in -3.0..3.0f64) {
        let a = AgentParams::default();
        let v = potential_v(&[u], &a);
        prop_assert!((v - potential_v(&[-u], &a)).abs() <= 1e-15);
        prop_assert!(v >= 0.0);
        prop_assert!(u == 0.0 || v > 0.0);
    }

    #[test]
    fn copy_rates_vanish_exactly_at_measured_shift(
        p in -PI..PI,
        copy in -PI..PI,
        turns in -3i32..=3,
        tau_p in 0.01..0.99f64,
        tanh in any::<bool>(),
    ) {
        let params = AdaptationParams {
            tau_p,
            sigmoid: if tanh { Sigmoid::Tanh } else { Sigmoid::Arctan },
            enabled: true,
            ..AdaptationParams::default()
        };
        let pv = PatternVector::new(vec![p]).unwrap();
        let at = DesiredCopies::consistent(&[p + 2.0 * PI * turns as f64]).unwrap();
        let r = desired_rates(&pv, &at, &params, 0.0).unwrap();
        prop_assert!(r[0].tail.abs() <= 1e-12 && r[0].head.abs() <= 1e-12);
        let off = DesiredCopies::from_edge_copies(vec![EdgeCopies { tail: copy, head: p }]).unwrap();
        let r = desired_rates(&pv, &off, &params, 0.0).unwrap();
        let u = wrap(p - copy);
        if u.abs() > 1e-9 {
            prop_assert!(r[0].tail != 0.0 && r[0].tail.signum() == u.signum());
        }
        prop_assert!(r[0].tail.abs() <= params.max_rate());
        prop_assert!(r[0].tail.abs() <= 1.0 + 1e-15 || tanh);
    }

    #[test]
    fn lyapunov_rate_is_never_positive((n, q, pairs) in chain_phases_copies(), tau_p in 0.01..0.99f64) {
        let t = chain(n);
        let params = AdaptationParams { tau_p, enabled: true, ..AdaptationParams::default() };
        let p = pattern_of(&t, &PhaseVector::new(q).unwrap()).unwrap();
        let d = copies_of(&pairs);
        let rate = lyapunov_rate(&p, &d, &params).unwrap();
        prop_assert!(rate <= 0.0);
        let matched = d.edges().iter().zip(p.as_slice()).all(|(c, pk)| wrap(pk - c.tail) == 0.0 && wrap(pk - c.head) == 0.0);
        prop_assert_eq!(rate == 0.0, matched);
    }

    #[test]
    fn interior_loss_leaves_one_inconsistent_edge(
        n in 3usize..=10,
        pd in prop::collection::vec(0.2..3.0f64, 9),
        lost_offset in 0usize..8,
    ) {
        let t = chain(n);
        let pd = &pd[..n - 1];
        let lost_idx = 1 + lost_offset % (n - 2);
        prop_assume!((pd[lost_idx - 1] - pd[lost_idx]).abs() > 1e-6);
        let d = DesiredCopies::consistent(pd).unwrap();
        let lost = t.agent_ids()[lost_idx];
        let (t2, d2) = apply_agent_loss(&t, &d, lost).unwrap();
        let report = consistency_report(&d2, &t2).unwrap();
        prop_assert_eq!(report.inconsistent_edges(1e-12), 1);
        prop_assert!(report.imbalance.abs() > 1e-7);
        let pred = predict_post_loss_equilibrium(&t2, &d2, &vec![AgentParams::default(); n - 1]).unwrap();
        prop_assert!(pred.delta.abs() > 1e-7);

        // survivors' incidence rows are still (-1, +1) pairs and of full rank
        for row in t2.incidence().row_iter() {
            prop_assert_eq!(row.iter().filter(|v| **v == -1.0).count(), 1);
            prop_assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
            prop_assert_eq!(row.sum(), 0.0);
        }
        prop_assert!(t2.has_full_row_rank());

        // stale x_d is the old x_d with the lost agent's entry removed
        let zero = |m: usize| PatternVector::new(vec![0.0; m]).unwrap();
        let before = formation_vectors(&t, &zero(n - 1), &d).unwrap().x_d;
        let after = formation_vectors(&t2, &zero(n - 2), &d2).unwrap().x_d;
        let mut expected = before.clone();
        expected.remove(lost_idx);
        for (a, b) in after.iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn end_loss_keeps_pattern_attainable(n in 3usize..=10, pd in prop::collection::vec(0.2..3.0f64, 9), first in any::<bool>()) {
        let t = chain(n);
        let d = DesiredCopies::consistent(&pd[..n - 1]).unwrap();
        let lost = if first { 1 } else { n as u32 };
        let (t2, d2) = apply_agent_loss(&t, &d, lost).unwrap();
        let report = consistency_report(&d2, &t2).unwrap();
        prop_assert_eq!(report.imbalance, 0.0);
        prop_assert!(d2.is_consistent(0.0));
        let r = attainability_residual(&t2, &d2.tail_values()).unwrap();
        prop_assert!(r.iter().all(|v| v.abs() <= 1e-10));
    }
}

fn random_scenario() -> impl Strategy<Value = Scenario> {
    (
        3usize..=6,
        any::<u64>(),
        prop::collection::vec(0.3..2.8f64, 5),
        any::<bool>(),
        0.0..0.5f64,
    )
        .prop_map(|(n, seed, shifts, equispaced, jitter)| {
            let mut s = Scenario::canonical();
            s.name = "random".into();
            s.agents = (1..=n as u32).collect();
            s.params = vec![AgentParams::default(); n];
            s.desired_shifts = shifts[..n - 1].to_vec();
            s.seed = seed;
            s.initial_phases = InitialPhases::Perturbed {
                layout: if equispaced {
                    InitialLayout::Equispaced
                } else {
                    InitialLayout::Pattern
                },
                max_jitter: jitter,
            };
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_deterministic(mut s in random_scenario()) {
        s.duration = 5.0;
        let a = trace_to_csv_string(&run_scenario(&s).unwrap());
        let b = trace_to_csv_string(&run_scenario(&s).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn survivors_are_continuous_across_loss(mut s in random_scenario(), which in 0usize..6, vehicle in any::<bool>()) {
        let n = s.agents.len();
        let lost = s.agents[which % n];
        s.duration = 4.0;
        s.record_period = s.dt;
        if vehicle {
            s.model = ModelKind::Vehicle(VehicleModel::default());
        }
        let s = s.with_loss(lost, 2.0);
        let trace = run_scenario(&s).unwrap();
        let before = trace.sample_at(2.0 - s.dt).unwrap();
        let at = trace.sample_at(2.0).unwrap();
        for (b, a) in before.agents.iter().zip(&at.agents) {
            let (Some(b), Some(a)) = (b, a) else { continue };
            prop_assert!((a.phase - b.phase).abs() <= 1.01 * b.rate.abs().max(a.rate.abs()) * s.dt + 1e-12);
            if vehicle {
                // speed is a state of the vehicle plant: it cannot jump
                prop_assert!((a.speed - b.speed).abs() <= 2.0 / 0.3 * 20.0 * s.dt);
            }
        }
    }

    #[test]
    fn scenario_text_round_trips(s in random_scenario(), adapt in any::<bool>(), tau_p in 0.01..0.99f64) {
        let mut s = s.with_loss(2, 100.0);
        s.adaptation.enabled = adapt;
        s.adaptation.tau_p = tau_p;
        s.adaptation.start_time = 100.0;
        let text = scenario_to_string(&s);
        let loaded = scenario_from_str(&text).unwrap();
        prop_assert_eq!(&loaded, &s);
        prop_assert_eq!(scenario_from_str(&scenario_to_string(&loaded)).unwrap(), loaded);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn steady_state_matches_oracle_on_chains(
        n in 4usize..=6,
        shifts in prop::collection::vec(0.8..2.6f64, 5),
        lost_offset in 0usize..4,
    ) {
        let mut s = Scenario::canonical();
        s.agents = (1..=n as u32).collect();
        s.params = vec![AgentParams::default(); n];
        s.desired_shifts = shifts[..n - 1].to_vec();
        s.duration = 900.0;
        s.record_period = 1.0;
        let lost = s.agents[1 + lost_offset % (n - 2)];
        let s = s.with_loss(lost, 100.0);
        let trace = run_scenario(&s).unwrap();
        let pred = flockadapt::equilibrium::predict_for_scenario(&s).unwrap();
        let last = trace.final_sample();
        let shifts = trace.final_order_shifts(last);
        prop_assert_eq!(shifts.len(), pred.steady_shifts.len());
        for (e, p) in shifts.iter().zip(&pred.steady_shifts) {
            let e = e.unwrap();
            prop_assert!((e - p).abs() <= 1e-3, "shift {} vs {}", e, p);
        }
        let offset = pred.common_speed_offset(1e-12).unwrap();
        for a in last.active_agents() {
            prop_assert!((a.speed - (12.0 + offset)).abs() <= 0.02);
        }
    }
}

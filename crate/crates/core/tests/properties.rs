use proptest::prelude::*;

use distcache::discrepancy::{
    bound_report, discrepancy_estimate, discrepancy_sup, mismatch_estimate, psi_table,
};
use distcache::federated::{federated_objective, federated_solve};
use distcache::io::{load_trace, save_catalog, save_trace, TraceShape};
use distcache::optimizer::{prepare_windows, run_subroutine, OptimizerConfig, WindowSpec};
use distcache::regret::{hit_matrix, realized_regret, regret_sequence, DemandView, HitMatrix, RegretMode, Window};
use distcache::sim::{run_simulation, PolicyKind, SimConfig};
use distcache::strategy::{blend, hit_rate, per_slot_optimal, project_budget};
use distcache::synth::{generate_synthetic, SyntheticConfig};
use distcache::trace::normalize_slot;
use distcache::{CachingStrategy, Catalog, DemandTrace, ProjectionMode, Topology};

fn catalog_strategy() -> impl Strategy<Value = Catalog> {
    (prop::collection::vec(0.5f64..20.0, 1..8), 0.05f64..1.2).prop_map(|(sizes, frac)| {
        let total: f64 = sizes.iter().sum();
        Catalog::new(sizes, frac * total).unwrap()
    })
}

/// Catalog with a demand vector and a raw vector of matching length.
fn instance() -> impl Strategy<Value = (Catalog, Vec<f64>, Vec<f64>)> {
    catalog_strategy().prop_flat_map(|c| {
        let n = c.n_files();
        (
            Just(c),
            prop::collection::vec(0.0f64..50.0, n),
            prop::collection::vec(-0.5f64..1.5, n),
        )
    })
}

fn feasible(pi: &[f64], catalog: &Catalog) -> bool {
    pi.iter().all(|p| (0.0..=1.0).contains(p))
        && pi.iter().zip(catalog.sizes()).map(|(p, l)| p * l).sum::<f64>() <= catalog.budget() * (1.0 + 1e-9)
}

fn small_trace(seed: u64, n_files: usize, topology: Topology, n_slots: usize) -> (Catalog, DemandTrace) {
    let catalog = Catalog::synthetic(n_files, 1.0, 20.0, false, 0.3, seed).unwrap();
    let cfg = SyntheticConfig {
        n_regimes: 2,
        regime_length: 4,
        requests_per_slot: 200,
        seed,
        ..SyntheticConfig::default()
    };
    let trace = generate_synthetic(&catalog, &topology, n_slots, &cfg).unwrap();
    (catalog, trace)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_sums_to_one_and_ignores_scale(d in prop::collection::vec(0.0f64..100.0, 1..20), c in 0.01f64..100.0) {
        let p = normalize_slot(&d).unwrap();
        let total: f64 = d.iter().sum();
        if total > 0.0 {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
            let q = normalize_slot(&scaled).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        } else {
            prop_assert!(p.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn per_slot_optimal_beats_random_feasible_points((catalog, demand, raw) in instance()) {
        let best = per_slot_optimal(&demand, &catalog).unwrap();
        prop_assert!(feasible(best.fractions(), &catalog));
        let other = project_budget(&raw, &catalog, ProjectionMode::OnlyIfExceeded).unwrap().strategy;
        let h_best = hit_rate(&best, &demand, &catalog).unwrap();
        prop_assert!(h_best >= hit_rate(&other, &demand, &catalog).unwrap() - 1e-9 * h_best.max(1.0));
    }

    #[test]
    fn per_slot_optimal_argmax_ignores_demand_scale((catalog, demand, _) in instance(), c in 0.1f64..10.0) {
        let scaled: Vec<f64> = demand.iter().map(|x| x * c).collect();
        let a = per_slot_optimal(&demand, &catalog).unwrap();
        let b = per_slot_optimal(&scaled, &catalog).unwrap();
        let (ha, hb) = (hit_rate(&a, &demand, &catalog).unwrap(), hit_rate(&b, &demand, &catalog).unwrap());
        prop_assert!((ha - hb).abs() <= 1e-9 * ha.max(1.0));
    }

    #[test]
    fn hit_rate_is_linear_in_blends((catalog, demand, raw) in instance(), w in 0.0f64..1.0) {
        let p1 = per_slot_optimal(&demand, &catalog).unwrap();
        let p2 = project_budget(&raw, &catalog, ProjectionMode::AlwaysScale).unwrap().strategy;
        let mixed = blend(&[&p1, &p2], &[w, 1.0 - w]).unwrap();
        let lhs = hit_rate(&mixed, &demand, &catalog).unwrap();
        let rhs = w * hit_rate(&p1, &demand, &catalog).unwrap() + (1.0 - w) * hit_rate(&p2, &demand, &catalog).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn projection_is_idempotent_and_feasible((catalog, _, raw) in instance()) {
        for mode in [ProjectionMode::OnlyIfExceeded, ProjectionMode::AlwaysScale] {
            let once = project_budget(&raw, &catalog, mode).unwrap().strategy;
            prop_assert!(feasible(once.fractions(), &catalog));
            let twice = project_budget(once.fractions(), &catalog, mode).unwrap().strategy;
            for (a, b) in once.fractions().iter().zip(twice.fractions()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn federated_solution_dominates_test_points((catalog, estimate, raw) in instance(), lambda in 0.05f64..20.0) {
        let anchor = project_budget(&raw, &catalog, ProjectionMode::OnlyIfExceeded).unwrap().strategy;
        let pi = federated_solve(&estimate, &anchor, lambda, &catalog).unwrap();
        prop_assert!(feasible(pi.fractions(), &catalog));
        let obj = |p: &[f64]| federated_objective(p, &estimate, anchor.fractions(), lambda, &catalog);
        let at = obj(pi.fractions());
        let tol = 1e-7 * at.abs().max(1.0);
        prop_assert!(at <= obj(anchor.fractions()) + tol);
        prop_assert!(at <= obj(per_slot_optimal(&estimate, &catalog).unwrap().fractions()) + tol);
    }

    #[test]
    fn federated_contracts_toward_anchor_as_lambda_grows((catalog, estimate, raw) in instance(), l1 in 0.05f64..5.0, factor in 1.0f64..10.0) {
        let anchor = project_budget(&raw, &catalog, ProjectionMode::OnlyIfExceeded).unwrap().strategy;
        let dist = |l: f64| {
            let pi = federated_solve(&estimate, &anchor, l, &catalog).unwrap();
            pi.fractions().iter().zip(anchor.fractions()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        prop_assert!(dist(l1 * factor) <= dist(l1) + 1e-7);
    }

    #[test]
    fn bound_report_is_monotone(
        tau in 1usize..8,
        reg in 0.0f64..10.0,
        d in 0.0f64..10.0,
        m in -5.0f64..10.0,
        h in 0.0f64..10.0,
        bump in 0.0f64..3.0,
    ) {
        let alpha = vec![1.0 / tau as f64; tau];
        let base = bound_report(&alpha, reg, d, m, h, 0.05).unwrap();
        for r in [
            bound_report(&alpha, reg + bump, d, m, h, 0.05).unwrap(),
            bound_report(&alpha, reg, d + bump, m, h, 0.05).unwrap(),
            bound_report(&alpha, reg, d, m + bump, h, 0.05).unwrap(),
            bound_report(&alpha, reg, d, m, h + bump, 0.05).unwrap(),
        ] {
            prop_assert!(r.epsilon1 >= base.epsilon1 - 1e-12);
            prop_assert!(r.epsilon2 >= base.epsilon2 - 1e-12);
        }
    }

    #[test]
    fn mismatch_is_antisymmetric(
        tau in 1usize..5,
        vals in prop::collection::vec(0.0f64..10.0, 32),
        raw_a in prop::collection::vec(0.01f64..1.0, 5),
        raw_b in prop::collection::vec(0.01f64..1.0, 5),
    ) {
        let w = Window::new(tau - 1, tau).unwrap();
        let matrix = |off: usize| -> HitMatrix {
            let rows = (0..tau).map(|l| (0..tau).map(|s| vals[(off + l * tau + s) % vals.len()]).collect()).collect();
            HitMatrix::from_values(0, w, rows).unwrap()
        };
        let simplex = |r: &[f64]| -> Vec<f64> {
            let s: f64 = r[..tau].iter().sum();
            r[..tau].iter().map(|x| x / s).collect()
        };
        let (ha, hb) = (matrix(0), matrix(7));
        let (aa, ab) = (simplex(&raw_a), simplex(&raw_b));
        let m1 = mismatch_estimate(&[1.0], &aa, &[ab.clone()], &ha, &[hb.clone()]).unwrap();
        let m2 = mismatch_estimate(&[1.0], &ab, &[aa], &hb, &[ha]).unwrap();
        prop_assert!((m1 + m2).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trace_csv_round_trip(seed in 0u64..1000, n_files in 1usize..12, n_slots in 1usize..10) {
        let (catalog, trace) = small_trace(seed, n_files, Topology::ring(3), n_slots);
        let dir = tempfile::tempdir().unwrap();
        let (cp, tp) = (dir.path().join("c.csv"), dir.path().join("t.csv"));
        save_catalog(&cp, &catalog).unwrap();
        save_trace(&tp, &trace).unwrap();
        let shape = TraceShape { topology: Topology::ring(3), n_slots: Some(n_slots), cache_fraction: 0.3 };
        let (c2, t2) = load_trace(&cp, &tp, &shape).unwrap();
        prop_assert_eq!(c2.sizes(), catalog.sizes());
        prop_assert_eq!(t2, trace);
    }

    #[test]
    fn synthetic_generation_is_pure(seed in 0u64..1000) {
        let a = small_trace(seed, 10, Topology::five_ring(), 6);
        let b = small_trace(seed, 10, Topology::five_ring(), 6);
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn per_slot_sequence_has_zero_regret(seed in 0u64..1000, tau in 1usize..6) {
        let (catalog, trace) = small_trace(seed, 8, Topology::line(2), tau + 2);
        let w = Window::new(tau + 1, tau).unwrap();
        let seq = regret_sequence(&trace, &catalog, 1, w, RegretMode::PerSlotOpt).unwrap();
        prop_assert_eq!(realized_regret(&seq, &trace, &catalog, 1, w, DemandView::Normalized).unwrap(), 0.0);
    }

    #[test]
    fn hit_matrix_is_permutation_equivariant(seed in 0u64..1000, shift in 1usize..7) {
        let n = 7;
        let (catalog, trace) = small_trace(seed, n, Topology::isolated(1), 4);
        let w = Window::new(3, 3).unwrap();
        let seq = regret_sequence(&trace, &catalog, 0, w, RegretMode::Ftl).unwrap();
        let h = hit_matrix(&seq, &trace, &catalog, 0, w, DemandView::Raw).unwrap();

        let perm = |f: usize| (f + shift) % n;
        let mut sizes = vec![0.0; n];
        for f in 0..n {
            sizes[perm(f)] = catalog.size(f);
        }
        let pcat = Catalog::new(sizes, catalog.budget()).unwrap();
        let ptrace = DemandTrace::from_fn(4, n, Topology::isolated(1), |t, b, f| {
            trace.slot_demand(b, t).unwrap()[(f + n - shift) % n]
        }).unwrap();
        let pseq: Vec<CachingStrategy> = seq.iter().map(|s| {
            let mut v = vec![0.0; n];
            for f in 0..n {
                v[perm(f)] = s.fractions()[f];
            }
            CachingStrategy::new(v, &pcat).unwrap()
        }).collect();
        let ph = hit_matrix(&pseq, &ptrace, &pcat, 0, w, DemandView::Raw).unwrap();
        for (a, b) in h.rows().iter().flatten().zip(ph.rows().iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sup_dominates_sampled_iterates(seed in 0u64..1000, draws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 10), 20)) {
        let (catalog, trace) = small_trace(seed, 10, Topology::isolated(1), 12);
        let w = Window::new(11, 4).unwrap();
        let psi = psi_table(&trace, &catalog, 0, w, 3, 5, DemandView::Normalized).unwrap();
        let alpha = [0.1, 0.2, 0.3, 0.4];
        let (sup, _) = discrepancy_sup(&psi, &alpha, &catalog).unwrap();
        let iterates: Vec<CachingStrategy> = draws.iter().map(|d| {
            project_budget(d, &catalog, ProjectionMode::OnlyIfExceeded).unwrap().strategy
        }).collect();
        for chunk in iterates.chunks(4) {
            let est = discrepancy_estimate(&psi, &alpha, chunk).unwrap();
            prop_assert!(sup >= est - 1e-12);
        }
    }

    #[test]
    fn huge_penalty_gives_uniform_alpha(seed in 0u64..1000) {
        let topology = Topology::five_ring();
        let (catalog, trace) = small_trace(seed, 10, topology.clone(), 12);
        let spec = WindowSpec { tau: 4, tau1: 2, tau2: 3, ..WindowSpec::default() };
        let windows = prepare_windows(&trace, &catalog, 11, &spec).unwrap();
        let cfg = OptimizerConfig { lambda: 1e6, max_iters: 50, ..OptimizerConfig::default() };
        let out = run_subroutine(&windows, &topology, &catalog, &cfg, false).unwrap();
        for st in &out.states {
            prop_assert!(st.alpha.iter().all(|a| (a - 0.25).abs() < 1e-3));
        }
    }

    #[test]
    fn realized_hits_never_exceed_slot_optimum(seed in 0u64..1000) {
        let (catalog, trace) = small_trace(seed, 10, Topology::ring(3), 16);
        let mut cfg = SimConfig::default();
        cfg.window = WindowSpec { tau: 3, tau1: 2, tau2: 2, ..WindowSpec::default() };
        cfg.lrfu.window = 3;
        for policy in PolicyKind::ALL {
            let log = run_simulation(&trace, &catalog, policy, &cfg).unwrap();
            for row in &log.rows {
                let d = trace.slot_demand(row.sbs, row.slot).unwrap();
                let best = hit_rate(&per_slot_optimal(d, &catalog).unwrap(), d, &catalog).unwrap();
                prop_assert!(row.hit <= best * (1.0 + 1e-9) + 1e-9);
            }
        }
    }

    #[test]
    fn zero_w_matches_proposed_on_one_sbs(seed in 0u64..1000) {
        let (catalog, trace) = small_trace(seed, 10, Topology::isolated(1), 16);
        let mut cfg = SimConfig::default();
        cfg.window = WindowSpec { tau: 3, tau1: 2, tau2: 2, ..WindowSpec::default() };
        let a = run_simulation(&trace, &catalog, PolicyKind::Proposed, &cfg).unwrap();
        let b = run_simulation(&trace, &catalog, PolicyKind::ZeroWOptAlpha, &cfg).unwrap();
        let hits = |l: &distcache::metrics::MetricsLog| l.rows.iter().map(|r| r.hit).collect::<Vec<_>>();
        prop_assert_eq!(hits(&a), hits(&b));
    }
}

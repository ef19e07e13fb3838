use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use freq_opf_core::analytic::{nadir_deviation, LowOrderParams};
use freq_opf_core::encode::{encode_network, propagate_bounds, InputBinding, VarRef};
use freq_opf_core::grid::{parse_case, PowerCase};
use freq_opf_core::harness::builtin_case;
use freq_opf_core::lp::{solve_lp, solve_milp, BnbConfig, LpProblem, MilpProblem, Sense, Status};
use freq_opf_core::neural::{
    fold_normalization, forward, forward_trace, MlpParams, MlpSpec, Normalizer,
};
use freq_opf_core::opf::{build_lfcopf, build_topf, solve_variant, OpfConfig};
use freq_opf_core::sim::{build_full_order, compute_metrics, simulate};

fn nine_bus() -> PowerCase {
    builtin_case("ieee9").unwrap()
}

fn dispatch_of(case: &PowerCase, mw: &[f64]) -> BTreeMap<String, f64> {
    case.generators
        .iter()
        .zip(mw)
        .map(|(g, &p)| (g.id.clone(), p))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn case_round_trips_through_json(scale in 0.5f64..1.2, d in 0.1f64..3.0) {
        let mut c = nine_bus().scale_loads(scale).unwrap();
        c.damping_d = d;
        prop_assert_eq!(parse_case(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn load_scaling_composes(a in 0.1f64..2.0, b in 0.1f64..2.0) {
        let c = nine_bus();
        let twice = c.scale_loads(a).unwrap().scale_loads(b).unwrap();
        let once = c.scale_loads(a * b).unwrap();
        for (x, y) in twice.loads.values().zip(once.loads.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn invalid_mutations_rejected(unit in 0usize..9, which in 0usize..9, bad in -5.0f64..0.0) {
        let mut c = nine_bus();
        let g = &mut c.generators[unit];
        match which {
            0 => g.inertia_h = bad,
            1 => g.mva_base = bad,
            2 => g.c2 = bad - 1e-3,
            3 => g.p_min = g.p_max + 1.0 - bad,
            4 => g.governor.r = bad,
            5 => g.governor.t1 = bad,
            6 => g.governor.f_hp = 1.0 - bad,
            7 => g.governor.t2 = bad - 1e-3,
            _ => c.lines[unit].reactance_x = bad,
        }
        prop_assert!(c.validate().is_err());
    }

    #[test]
    fn longer_windows_never_steepen_rocof(p in 10.0f64..60.0) {
        let c = nine_bus();
        let mw = vec![p; 9];
        let trace = simulate(&build_full_order::<f64>(&c, &dispatch_of(&c, &mw)).unwrap(), 8.0, 1e-3).unwrap();
        let mut last = f64::INFINITY;
        for w in [0.001, 0.005, 0.02, 0.05, 0.1, 1.0 / 6.0, 0.3] {
            let r = compute_metrics(&trace, c.f0, w).unwrap().rocof_worst.abs();
            prop_assert!(r <= last + 1e-12);
            last = r;
        }
    }

    #[test]
    fn dropping_a_governor_deepens_the_nadir(k in 0usize..8, p in 10.0f64..60.0) {
        let c = nine_bus();
        let mw = vec![p; 9];
        let full = build_full_order::<f64>(&c, &dispatch_of(&c, &mw)).unwrap();
        let mut less = full.clone();
        less.branches.remove(k);
        let fn_full = compute_metrics(&simulate(&full, 20.0, 1e-3).unwrap(), c.f0, 0.1).unwrap().nadir;
        let fn_less = compute_metrics(&simulate(&less, 20.0, 1e-3).unwrap(), c.f0, 0.1).unwrap().nadir;
        prop_assert!(fn_less <= fn_full + 1e-12);
    }

    #[test]
    fn low_order_identities(h in 2.0f64..10.0, d in 0.5f64..2.0, r in 10.0f64..30.0, t in 4.0f64..12.0) {
        let f = 0.3 * r;
        let p = LowOrderParams::<f64>::from_aggregates(h, d, f, r, t, 60.0);
        let lhs = 2.0 * h * t * p.omega_n * p.omega_n;
        prop_assert!((lhs - (r + d)).abs() <= 1e-12 * (r + d));
        if p.xi < 1.0 {
            let s = p.omega_d.powi(2) + (p.xi * p.omega_n).powi(2);
            prop_assert!((s - p.omega_n.powi(2)).abs() <= 1e-12 * p.omega_n.powi(2));
        }
    }

    #[test]
    fn nadir_row_is_tight_at_its_boundary(h in 3.0f64..10.0, f_lmt in 59.0f64..59.9) {
        let p = LowOrderParams::<f64>::from_aggregates(h, 1.0, 5.48, 20.0, 8.2, 60.0);
        let dp = p.max_disturbance_for_nadir(f_lmt).unwrap();
        prop_assert!((60.0 + nadir_deviation(&p, dp).unwrap() - f_lmt).abs() < 1e-10);
    }

    #[test]
    fn forward_is_linear_within_a_region(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::<f64>::init_he(&MlpSpec::new(3, vec![6, 5]), &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = |s: f64| -> Vec<f64> { x.iter().zip(&dir).map(|(a, b)| a + s * b).collect() };
        let h = 1e-7;
        let pattern = forward_trace(&net, &x).unwrap().pattern();
        let same = |s: f64| forward_trace(&net, &at(s)).unwrap().pattern() == pattern;
        prop_assume!(same(h) && same(2.0 * h) && same(-h));
        let y = |s: f64| forward(&net, &at(s)).unwrap();
        let (y0, y1, y2, ym) = (y(0.0), y(h), y(2.0 * h), y(-h));
        for o in 0..2 {
            let d1 = y1[o] - y0[o];
            prop_assert!((y2[o] - y1[o] - d1).abs() < 1e-12);
            prop_assert!((y0[o] - ym[o] - d1).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_hidden_units_keeps_outputs(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::<f64>::init_he(&MlpSpec::new(3, vec![5]), &mut rng);
        let perm = [3usize, 0, 4, 1, 2];
        let mut q = net.clone();
        for (new, &old) in perm.iter().enumerate() {
            for i in 0..3 {
                *q.layers[0].weight_mut(i, new) = net.layers[0].weight(i, old);
            }
            q.layers[0].bias[new] = net.layers[0].bias[old];
            for o in 0..2 {
                *q.layers[1].weight_mut(new, o) = net.layers[1].weight(old, o);
            }
        }
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (a, b) = (forward(&net, &x).unwrap(), forward(&q, &x).unwrap());
        for o in 0..2 {
            prop_assert!((a[o] - b[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn folding_preserves_activation_pattern(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::<f64>::init_he(&MlpSpec::new(3, vec![6, 4]), &mut rng);
        let mut norm = Normalizer::<f64>::identity(3, 2);
        norm.input_shift = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
        norm.input_scale = (0..3).map(|_| rng.random_range(0.5..100.0)).collect();
        norm.output_shift = vec![-0.5, 59.5];
        norm.output_scale = vec![0.7, 0.4];
        let folded = fold_normalization(&net, &norm).unwrap();
        let raw: Vec<f64> = (0..3).map(|k| norm.input_shift[k] + norm.input_scale[k] * rng.random_range(0.0..1.0)).collect();
        let a = forward_trace(&net, &norm.normalize_input(&raw)).unwrap();
        let b = forward_trace(&folded, &raw).unwrap();
        prop_assert_eq!(a.pattern(), b.pattern());
    }

    #[test]
    fn tighter_boxes_keep_the_forward_point(seed in 0u64..1000, shrink in 0.0f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpParams::<f64>::init_he(&MlpSpec::new(3, vec![5, 5]), &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let half = 1.0 - shrink;
        let mut p = MilpProblem::<f64>::new();
        let bindings: Vec<InputBinding<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (lo, hi) = ((v - half).max(-1.0), (v + half).min(1.0));
                InputBinding::Variable { id: p.lp.add_var(format!("x{i}"), v, v, 0.0), lower: lo, upper: hi }
            })
            .collect();
        let block = encode_network(&net, &bindings).unwrap();
        prop_assert!(block.num_binaries() <= 10);
        let ids = block.merge_into(&mut p).unwrap();
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        prop_assert_eq!(s.status, Status::Optimal);
        let y = forward(&net, &x).unwrap();
        for (o, &v) in block.outputs.iter().enumerate() {
            let id = match v { VarRef::Local(k) => ids[k], VarRef::External(id) => id };
            prop_assert!((s.values[id] - y[o]).abs() < 1e-7);
        }
        let wide = propagate_bounds(&net, &[(-1.0, 1.0); 3]).unwrap();
        let pre = forward_trace(&net, &x).unwrap().pre_activations;
        for (l, layer) in pre.iter().enumerate() {
            for (k, &z) in layer.iter().enumerate() {
                prop_assert!(wide[l][k].lower <= z + 1e-12 && z <= wide[l][k].upper + 1e-12);
            }
        }
    }

    #[test]
    fn lp_optimum_dominates_dual_bounds(seed in 0u64..1000) {
        // min c'x, Ax >= b, 0 <= x <= 10 with c >= 0
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (4, 3);
        let mut lp = LpProblem::<f64>::new();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        for (j, &cj) in c.iter().enumerate() {
            lp.add_var(format!("x{j}"), 0.0, 10.0, cj);
        }
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0.0..2.0)).collect()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..5.0)).collect();
        for i in 0..m {
            lp.add_row(format!("r{i}"), (0..n).map(|j| (j, a[i][j])).collect(), Sense::Ge, b[i]);
        }
        let s = solve_lp(&lp).unwrap();
        prop_assert_eq!(s.status, Status::Optimal);
        for _ in 0..20 {
            let y0: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let t = (0..n)
                .map(|j| {
                    let aty: f64 = (0..m).map(|i| a[i][j] * y0[i]).sum();
                    if aty > 0.0 { c[j] / aty } else { f64::INFINITY }
                })
                .fold(f64::INFINITY, f64::min);
            let bound: f64 = (0..m).map(|i| b[i] * y0[i] * t.min(1e6)).sum();
            prop_assert!(s.objective >= bound - 1e-9);
        }
    }

    #[test]
    fn milp_beats_rounded_points_and_is_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MilpProblem::<f64>::new();
        let n = 6;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        for (j, vj) in v.iter().enumerate() {
            p.add_binary(format!("b{j}"), -vj);
        }
        let cap = w.iter().sum::<f64>() * 0.5;
        p.lp.add_row("cap", (0..n).map(|j| (j, w[j])).collect(), Sense::Le, cap);
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        let again = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        prop_assert_eq!(&s.values, &again.values);
        prop_assert_eq!(s.stats.nodes, again.stats.nodes);
        prop_assert_eq!(s.stats.monotonicity_violations, 0);
        let relax = solve_lp(&p.lp).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = relax.values.iter().map(|&r| if rng.random_range(0.0..1.0) < r { 1.0 } else { 0.0 }).collect();
            if p.lp.max_violation(&x) <= 1e-9 {
                prop_assert!(s.objective <= p.lp.objective_value(&x) + 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn frequency_rows_never_reduce_cost(scale in 0.8f64..1.2, r_lmt in -0.8f64..-0.2, f_lmt in 59.3f64..59.8) {
        let c = nine_bus().scale_loads(scale).unwrap();
        let cfg = OpfConfig { rocof_limit: r_lmt, nadir_limit: f_lmt, ..OpfConfig::default() };
        let t = solve_variant(&build_topf(&c, &cfg).unwrap(), false).unwrap();
        t.check(&c).unwrap();
        // tight limits may leave the guarded problem infeasible
        if let Ok(l) = solve_variant(&build_lfcopf(&c, &cfg).unwrap(), false) {
            prop_assert!(t.cost <= l.cost + 1e-6);
            l.check(&c).unwrap();
        }
        for group in c.identical_unit_groups() {
            let mw: Vec<f64> = group.iter().map(|&i| t.dispatch[i].1).collect();
            prop_assert!(mw.iter().all(|p| (p - mw[0]).abs() <= 1e-6), "{:?}", mw);
        }
    }
}

//! Randomized structural properties of the replay engine, the dual and the oracle.

use proptest::prelude::*;
use vlcp_core::bd::{mean_tau_rec, occupation_series};
use vlcp_core::duality::pathwise_duality_check;
use vlcp_core::engine::sumtree::SumTree;
use vlcp_core::engine::{check_additivity, generate_event_log, run_coupled_pair, run_cpvl_from_log, Configuration, Envelopes};
use vlcp_core::oracle::{build_generator, transient_distribution, ProcessTag};
use vlcp_core::seeding::{domain, stream_rng};
use vlcp_core::{Graph, GraphKind, InfectionRate, Load, RateModel};

fn small_graph() -> impl Strategy<Value = GraphKind> {
    prop_oneof![
        (3usize..9).prop_map(|n| GraphKind::Cycle { n }),
        (3usize..6).prop_map(|n| GraphKind::Complete { n }),
        (2usize..4, 1usize..3).prop_map(|(degree, depth)| GraphKind::TreeBall { degree, depth }),
        Just(GraphKind::EdgePair),
    ]
}

fn loads(n: usize, top: Load) -> impl Strategy<Value = Vec<Load>> {
    proptest::collection::vec(0..=top, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn join_commutes_with_replay(kind in small_graph(), k in 1u32..4, lambda in 0.1f64..4.0, seed in any::<u64>(), raw in proptest::collection::vec(0u32..5, 32)) {
        let g = Graph::build(kind).unwrap();
        let n = g.vertex_count();
        let m = RateModel::power_law(2.0).unwrap().capped(k).unwrap();
        let inf = InfectionRate::constant(lambda).unwrap();
        let clamp = |off: usize| -> Vec<Load> { (0..n).map(|v| raw[(v + off) % raw.len()].min(k + 1)).collect() };
        let (a, b) = (Configuration::from_loads(clamp(0)), Configuration::from_loads(clamp(7)));
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 4.0, &mut stream_rng(seed, domain::EVENT_LOG, 0)).unwrap();
        prop_assert_eq!(check_additivity(&g, &m, &inf, &a, &b, &log).unwrap(), 0);
        let ta = run_cpvl_from_log(&g, &m, &inf, &a, &log, &[]).unwrap();
        let tb = run_cpvl_from_log(&g, &m, &inf, &b, &log, &[]).unwrap();
        let tj = run_cpvl_from_log(&g, &m, &inf, &a.join(&b), &log, &[]).unwrap();
        prop_assert_eq!(tj.final_config, ta.final_config.join(&tb.final_config));
    }

    #[test]
    fn larger_rate_and_larger_start_stay_above(kind in small_graph(), k in 1u32..4, l1 in 0.1f64..2.0, extra in 0.0f64..2.0, seed in any::<u64>(), hi in loads(16, 4)) {
        let g = Graph::build(kind).unwrap();
        let n = g.vertex_count();
        let m = RateModel::power_law(2.0).unwrap().capped(k).unwrap();
        let lo_inf = InfectionRate::constant(l1).unwrap();
        let hi_inf = InfectionRate::constant(l1 + extra).unwrap();
        let hi: Vec<Load> = (0..n).map(|v| hi[v % hi.len()].min(k + 1)).collect();
        let lo: Vec<Load> = hi.iter().map(|&h| h / 2).collect();
        let env = Envelopes::for_model(&m, &hi_inf).unwrap();
        let log = generate_event_log(&g, env, 4.0, &mut stream_rng(seed, domain::EVENT_LOG, 1)).unwrap();
        let run = run_coupled_pair(&g, (&m, &lo_inf), (&m, &hi_inf), &Configuration::from_loads(lo), &Configuration::from_loads(hi), &log).unwrap();
        prop_assert_eq!(run.ordering_violations, 0);
        prop_assert!(run.lo.final_config.le(&run.hi.final_config));
    }

    #[test]
    fn duality_indicator_is_constant(kind in small_graph(), k in 1u32..3, lambda in 0.1f64..3.0, seed in any::<u64>(), eta in loads(16, 3), xi in loads(16, 3)) {
        let g = Graph::build(kind).unwrap();
        let n = g.vertex_count();
        let m = RateModel::power_law(2.0).unwrap().capped(k).unwrap();
        let inf = InfectionRate::constant(lambda).unwrap();
        let fit = |v: &[Load]| Configuration::from_loads((0..n).map(|i| v[i % v.len()].min(k + 1)).collect());
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let t = 3.0;
        let log = generate_event_log(&g, env, t, &mut stream_rng(seed, domain::EVENT_LOG, 2)).unwrap();
        let rep = pathwise_duality_check(&g, &m, &inf, &fit(&eta), &fit(&xi), t, &log, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        prop_assert!(rep.constant);
        prop_assert!(rep.indicators.iter().all(|&b| b == rep.initial_indicator));
    }

    #[test]
    fn oracle_rows_and_mass(k in 1u32..3, lambda in 0.1f64..3.0, t in 0.05f64..3.0, v in 0usize..3, load in 1u32..3) {
        let g = Graph::build(GraphKind::Cycle { n: 3 }).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(k).unwrap();
        let inf = InfectionRate::constant(lambda).unwrap();
        for tag in [ProcessTag::Cpvl, ProcessTag::Cpli] {
            let gen = build_generator(&g, &m, &inf, tag).unwrap();
            prop_assert!(gen.max_row_sum_error() < 1e-12);
            let init = Configuration::point(3, v, load.min(k + 1));
            let p = transient_distribution(&gen, &gen.delta(&init).unwrap(), t, 1e-12).unwrap();
            let mass: f64 = p.iter().sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            for i in 0..gen.states {
                prop_assert_eq!(gen.encode(&gen.decode(i)), i);
            }
        }
    }

    #[test]
    fn occupation_series_is_linear_in_weight(a in 1.2f64..4.0, c in 0.1f64..10.0) {
        let m = RateModel::power_law(a).unwrap();
        let base = mean_tau_rec(&m, 1e-12).value().unwrap();
        let scaled = occupation_series(&m, |_| c, 1e-12).value().unwrap();
        prop_assert!((scaled - c * base).abs() <= 1e-8 * scaled.abs().max(1.0));
    }

    #[test]
    fn sumtree_find_lands_on_positive_weight(w in proptest::collection::vec(0.0f64..5.0, 1..40), u in 0.0f64..1.0) {
        let tree = SumTree::from_weights(&w);
        let total: f64 = w.iter().sum();
        prop_assert!((tree.total() - total).abs() < 1e-9);
        if total > 0.0 {
            let i = tree.find(u * total).unwrap();
            prop_assert!(w[i] > 0.0);
            let before: f64 = w[..i].iter().sum();
            prop_assert!(before <= u * total + 1e-9 && u * total <= before + w[i] + 1e-9);
        }
    }

    #[test]
    fn configuration_lattice(a in loads(8, 5), b in loads(8, 5)) {
        let (ca, cb) = (Configuration::from_loads(a), Configuration::from_loads(b));
        let j = ca.join(&cb);
        prop_assert!(ca.le(&j) && cb.le(&j));
        prop_assert_eq!(j.clone(), cb.join(&ca));
        prop_assert_eq!(ca.join(&ca), ca.clone());
        prop_assert_eq!(ca.le(&cb) && cb.le(&ca), ca == cb);
    }
}

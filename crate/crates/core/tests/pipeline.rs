use survsel::censoring::build_survival_dataset;
use survsel::evaluation::{evaluate_selector, write_cells_csv, write_instances_csv};
use survsel::forest::ForestParams;
use survsel::loss::{ranges, LossSpec};
use survsel::scenario::{
    generate_synthetic, load_scenario, write_csv, FeatureModel, RuntimeDistribution, Scenario, SyntheticAlgorithm, SyntheticSpec,
    View,
};
use survsel::selectors::{SelectorConfig, SelectorKind};
use survsel::survival::{SurvivalConversion, SurvivalModel};
use survsel::tuning::{tune_surrogate, TuneBudget};

/// Three log-normal algorithms whose speed depends on two of three features.
fn linked(n: usize, seed: u64) -> SyntheticSpec {
    let alg = |name: &str, mu: f64, effects: Vec<f64>| SyntheticAlgorithm {
        name: name.into(),
        distribution: RuntimeDistribution::LogNormal { mu, sigma: 0.5 },
        effects,
    };
    SyntheticSpec {
        name: "linked".into(),
        algorithms: vec![
            alg("a", 3.0, vec![1.5, 0.0, 0.0]),
            alg("b", 3.0, vec![-1.5, 0.0, 0.0]),
            alg("c", 3.3, vec![0.0, 1.0, 0.0]),
        ],
        n_instances: n,
        features: FeatureModel::Linked { dim: 3 },
        cutoff: 60.0,
        feature_cost: 0.0,
        seed,
    }
}

fn small() -> ForestParams {
    ForestParams {
        n_trees: 20,
        ..Default::default()
    }
}

fn scenario(n: usize, seed: u64) -> Scenario {
    generate_synthetic(&linked(n, seed)).unwrap().scenario
}

#[test]
fn synthetic_round_trips_through_csv() {
    let s = scenario(150, 3);
    assert_eq!(s, scenario(150, 3));
    let dir = tempfile::tempdir().unwrap();
    write_csv(&s, dir.path()).unwrap();
    let a = load_scenario(dir.path()).unwrap();
    let b = load_scenario(dir.path()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.runtimes, s.runtimes);
    for (ys, cs) in a.runtimes.iter().zip(&a.censored) {
        for (&y, &c) in ys.iter().zip(cs) {
            assert_eq!(c, y == a.cutoff);
        }
    }
}

#[test]
fn vbs_bounds_every_selector() {
    let s = scenario(200, 11);
    for kind in [
        SelectorKind::RsfExp,
        SelectorKind::RsfPar10,
        SelectorKind::PerAlgorithmRegressor,
        SelectorKind::MultiClass,
        SelectorKind::Sunny { k: 8 },
        SelectorKind::Isac { max_clusters: 5 },
        SelectorKind::Satzilla11,
        SelectorKind::Sbs,
    ] {
        let cfg = SelectorConfig::new(kind.clone()).with_forest(small());
        let rep = evaluate_selector(&cfg, &s, 5, 4).unwrap();
        assert!(rep.is_complete(), "{kind}");
        assert_eq!(rep.records.len(), s.n_instances() - rep.n_unsolvable_removed);
        for r in &rep.records {
            assert!(r.vbs_par10 <= r.par10, "{kind} on {}", r.instance);
        }
        assert!(rep.vbs_par10 <= rep.par10);
    }
}

#[test]
fn survival_selector_beats_sbs_on_linked_features() {
    let s = scenario(400, 5);
    let cfg = SelectorConfig::new(SelectorKind::RsfPar10).with_forest(ForestParams {
        n_trees: 50,
        ..Default::default()
    });
    let rep = evaluate_selector(&cfg, &s, 5, 9).unwrap();
    assert!(rep.npar10 < 1.0, "nPAR10 {}", rep.npar10);
}

#[test]
fn reports_are_deterministic() {
    let s = scenario(120, 2);
    let cfg = SelectorConfig::new(SelectorKind::Satzilla11).with_forest(small());
    let a = evaluate_selector(&cfg, &s, 4, 17).unwrap();
    let b = evaluate_selector(&cfg, &s, 4, 17).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    for (rep, tag) in [(&a, "a"), (&b, "b")] {
        write_cells_csv(std::slice::from_ref(rep), &dir.path().join(format!("cells_{tag}.csv"))).unwrap();
        write_instances_csv(std::slice::from_ref(rep), &dir.path().join(format!("inst_{tag}.csv"))).unwrap();
    }
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("cells_a.csv"), read("cells_b.csv"));
    assert_eq!(read("inst_a.csv"), read("inst_b.csv"));
}

#[test]
fn tuning_stays_inside_its_view() {
    let s = scenario(200, 8);
    let outer_train: Vec<usize> = (0..200).filter(|i| i % 5 != 0).collect();
    let budget = TuneBudget {
        n_evaluations: 8,
        seed: 3,
        ..Default::default()
    };
    let r = tune_surrogate(View::new(&s, &outer_train), &budget, &small(), SurvivalConversion::default()).unwrap();

    let mut seen: Vec<usize> = r.inner_train.iter().chain(&r.inner_validation).copied().collect();
    seen.sort_unstable();
    assert_eq!(seen, outer_train, "inner split must partition the outer training set");

    assert_eq!(r.trace.len(), 8);
    assert!(r.trace.iter().all(|e| r.best_par10 <= e.validation_par10));
    let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
    for e in &r.trace {
        match e.loss {
            LossSpec::Polynomial { alpha } => assert!(within(alpha, ranges::POLY_ALPHA)),
            LossSpec::CappedLog { alpha, beta } => {
                assert!(within(alpha, ranges::LOG_ALPHA) && within(beta, ranges::LOG_BETA))
            }
            other => panic!("unexpected candidate {other}"),
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn forest_ignores_thread_count() {
    let s = scenario(300, 21);
    let ids: Vec<usize> = (0..300).collect();
    let d = build_survival_dataset(&s, 1, &ids).unwrap();
    let params = ForestParams {
        n_trees: 24,
        seed: 5,
        ..Default::default()
    };
    let fit = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| SurvivalModel::fit(&d, &params).unwrap())
    };
    assert_eq!(fit(1), fit(4));
}

#[test]
fn forest_is_seed_reproducible() {
    let s = scenario(200, 21);
    let ids: Vec<usize> = (0..200).collect();
    let d = build_survival_dataset(&s, 0, &ids).unwrap();
    let params = small().with_seed(9);
    assert_eq!(SurvivalModel::fit(&d, &params).unwrap(), SurvivalModel::fit(&d, &params).unwrap());
    assert_ne!(SurvivalModel::fit(&d, &params).unwrap(), SurvivalModel::fit(&d, &params.with_seed(10)).unwrap());
}

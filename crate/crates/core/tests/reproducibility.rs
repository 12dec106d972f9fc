use proptest::prelude::*;
use rayon::ThreadPoolBuilder;

use stoc_order::criteria::Criterion;
use stoc_order::experiments::{emit_report, replay, run_experiment, sidecar_path, ExperimentConfig};
use stoc_order::model::RootConfig;
use stoc_order::qmc::{integrate_sqrt_fim, IntegralTable};
use stoc_order::sobol::{DirectionSet, SobolGenerator, MAX_DIM};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sobol_points_lie_in_the_unit_cube(dim in 1..=MAX_DIM, start in 0u64..100_000, jk in any::<bool>()) {
        let set = if jk { DirectionSet::JoeKuo } else { DirectionSet::BratleyFox };
        let mut gen = SobolGenerator::with_set(dim, set).unwrap();
        gen.seek(start);
        for _ in 0..64 {
            let p = gen.next_point();
            prop_assert_eq!(p.len(), dim);
            prop_assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
    }

    #[test]
    fn sobol_sequence_is_deterministic(dim in 1..=MAX_DIM, skip in 0usize..500) {
        let a: Vec<Vec<f64>> = SobolGenerator::new(dim).unwrap().skip(skip).take(32).collect();
        let b: Vec<Vec<f64>> = SobolGenerator::new(dim).unwrap().skip(skip).take(32).collect();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn integration_is_bit_identical_for_any_pool_size() {
    for config in [RootConfig::new(3, 0, 1, 0).unwrap(), RootConfig::new(2, 2, 0, 0).unwrap()] {
        let values: Vec<(u64, u64)> = [1, 2, 3, 5]
            .iter()
            .map(|&threads| {
                let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
                let est = pool.install(|| integrate_sqrt_fim(config, 123_457)).unwrap();
                (est.value.to_bits(), est.skipped)
            })
            .collect();
        assert!(values.windows(2).all(|w| w[0] == w[1]), "{config:?}: {values:?}");
    }
}

fn small_config(example: u8) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_example(example).unwrap();
    cfg.seed = 77;
    match example {
        1 => {
            cfg.sample_sizes = vec![25, 40];
            cfg.runs_outer = 20;
        }
        2 => {
            cfg.sample_sizes = vec![25, 50];
            cfg.runs_outer = 3;
            cfg.runs_inner = 4;
            cfg.cases = vec![1, 3];
            cfg.criteria = vec![Criterion::Nml, Criterion::Bic, Criterion::Kicc, Criterion::Pls];
        }
        _ => {
            cfg.sample_sizes = vec![25, 50];
            cfg.runs_outer = 4;
            cfg.cases = vec![1, 2];
        }
    }
    cfg
}

#[test]
fn experiments_do_not_depend_on_worker_count() {
    let table = IntegralTable::bundled();
    for example in 1..=3 {
        let cfg = small_config(example);
        let one = run_experiment(&cfg, &table, Some(1)).unwrap();
        let three = run_experiment(&cfg, &table, Some(3)).unwrap();
        assert_eq!(one.to_csv(), three.to_csv(), "example {example}");
        assert_eq!(one.failed_fits, three.failed_fits);
    }
}

#[test]
fn replay_reproduces_the_report_byte_for_byte() {
    let dir = std::env::temp_dir().join(format!("stoc-order-replay-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let table = IntegralTable::bundled();
    for example in 1..=3 {
        let csv = dir.join(format!("example{example}.csv"));
        let report = run_experiment(&small_config(example), &table, Some(2)).unwrap();
        emit_report(&report, &csv).unwrap();
        let written = std::fs::read(&csv).unwrap();
        let again = replay(&sidecar_path(&csv), &table, Some(1)).unwrap();
        assert_eq!(written, again.to_csv().into_bytes(), "example {example}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

mod common;

use common::boolean_optimum;
use sensor_select::Strategy;
use sensor_select::experiments::{
    self, ExperimentConfig, TrialStatus, generate_correlated, generate_instance_with, read_summary_csv,
    read_trials_csv, run_trials, sweep_shared_vectors, trial_rng, write_summary_csv, write_trials_csv,
};

fn pair_products(sigma: f64, instances: u64) -> Vec<f64> {
    let cfg = ExperimentConfig {
        sigma_corr: sigma,
        num_correlated_pairs: 10,
        ..ExperimentConfig::default()
    };
    (0..instances)
        .flat_map(|t| {
            let (p, pairs) = generate_correlated(&cfg, &mut trial_rng(99, t)).unwrap();
            pairs
                .into_iter()
                .map(|(i, j)| p.a1().row(i).dot(&p.a2().row(j)))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn independent_noise_decorrelates_pairs() {
    let cfg = ExperimentConfig {
        sigma_corr: 1.0,
        num_correlated_pairs: 10,
        ..ExperimentConfig::default()
    };
    let normalized: Vec<f64> = (0..100)
        .flat_map(|t| {
            let (p, pairs) = generate_correlated(&cfg, &mut trial_rng(5, t)).unwrap();
            pairs
                .into_iter()
                .map(|(i, j)| {
                    let (a, b) = (p.a1().row(i), p.a2().row(j));
                    a.dot(&b) / (a.norm() * b.norm())
                })
                .collect::<Vec<_>>()
        })
        .collect();
    assert_eq!(normalized.len(), 1000);
    let mean = normalized.iter().sum::<f64>() / 1000.0;
    assert!(mean.abs() < 0.1, "{mean}");
}

#[test]
fn correlated_pairs_have_expected_inner_product() {
    let products = pair_products(0.1, 1000);
    assert_eq!(products.len(), 10_000);
    let (mean, std) = experiments::mean_std(&products);
    let (mean, std) = (mean.unwrap(), std.unwrap());
    let se = std / (products.len() as f64).sqrt();
    let expected = (1.0 - 0.1f64 * 0.1) * 40.0;
    assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
}

fn enumeration_config() -> ExperimentConfig {
    ExperimentConfig {
        m: 12,
        n: 3,
        k_s: 6,
        n_shared: 2,
        num_correlated_pairs: 3,
        trials: 20,
        master_seed: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn recorded_bounds_bracket_boolean_optimum() {
    let cfg = enumeration_config();
    let stats = run_trials(&cfg).unwrap();
    assert_eq!(stats.records.len(), 20 * 4);
    for t in 0..cfg.trials {
        let p = generate_instance_with(&cfg, &mut trial_rng(cfg.master_seed, t as u64)).unwrap();
        let best = boolean_optimum(p.stacked().matrix(), cfg.k_s);
        for r in stats.records.iter().filter(|r| r.trial == t) {
            let upper = r.upper.unwrap();
            assert!(best <= upper + 1e-6, "trial {t}: {best} > {upper}");
            if let Some(l) = r.lower {
                assert!(l <= best + 1e-12, "trial {t} {}: {l} > {best}", r.strategy);
            }
        }
    }
    assert_eq!(stats.inclusion_violations, 0);
}

#[test]
fn sweep_columns_are_paired_and_reproducible() {
    let cfg = ExperimentConfig {
        trials: 12,
        ..enumeration_config()
    };
    let stats = sweep_shared_vectors(&cfg, &[0, 2, 2]).unwrap();
    let column = |s: Strategy, n: usize| -> Vec<_> {
        stats
            .records_for(s, n)
            .map(|r| (r.trial, r.lower.map(f64::to_bits), r.status))
            .collect()
    };
    let naive = column(Strategy::NaiveDecentralized, 0);
    assert_eq!(column(Strategy::Fdm, 0), naive);
    assert_eq!(column(Strategy::Lpm, 0), naive);
    let doubled = |c: Vec<_>| c.iter().flat_map(|x| [*x, *x]).collect::<Vec<_>>();
    assert_eq!(column(Strategy::NaiveDecentralized, 2), doubled(naive));
    assert_eq!(column(Strategy::Centralized, 2), doubled(column(Strategy::Centralized, 0)));
    for s in [Strategy::Fdm, Strategy::Lpm] {
        let c = column(s, 2);
        assert!(c.chunks(2).all(|pair| pair[0] == pair[1]));
    }
    assert!(stats.summary(Strategy::Fdm, 2).is_some());
    assert!(sweep_shared_vectors(&cfg, &[4]).is_err());
}

#[test]
fn csv_outputs_parse_back() {
    let stats = run_trials(&ExperimentConfig {
        trials: 4,
        ..enumeration_config()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_trials_csv(&stats.records, &mut buf).unwrap();
    let records = read_trials_csv(&buf[..]).unwrap();
    assert_eq!(records.len(), stats.records.len());
    for (a, b) in records.iter().zip(&stats.records) {
        assert_eq!((a.trial, a.strategy, a.n_shared, a.status), (b.trial, b.strategy, b.n_shared, b.status));
        assert_eq!(a.lower.map(f64::to_bits), b.lower.map(f64::to_bits));
        assert_eq!(a.gap_rel_percent.map(f64::to_bits), b.gap_rel_percent.map(f64::to_bits));
    }
    assert!(String::from_utf8(buf).unwrap().starts_with("trial,strategy,N,U_cen,L,gap_rel_percent,status\n"));

    let mut buf = Vec::new();
    write_summary_csv(&stats.summaries, &mut buf).unwrap();
    let summaries = read_summary_csv(&buf[..]).unwrap();
    assert_eq!(summaries.len(), 4);
    for (a, b) in summaries.iter().zip(&stats.summaries) {
        assert_eq!((a.strategy, a.trials_ok), (b.strategy, b.trials_ok));
        assert!((a.mean_gap.unwrap() - b.mean_gap.unwrap()).abs() <= 1e-9 * b.mean_gap.unwrap().abs());
    }
}

#[test]
fn expired_budget_is_recorded_as_timeout() {
    let cfg = ExperimentConfig {
        trials: 2,
        trial_timeout_secs: 1e-9,
        ..enumeration_config()
    };
    let stats = run_trials(&cfg).unwrap();
    assert!(stats.records.iter().all(|r| r.status == TrialStatus::Timeout));
    assert!(stats.summaries.iter().all(|s| s.trials_ok == 0 && s.trials_failed == 2 && s.mean_gap.is_none()));
}

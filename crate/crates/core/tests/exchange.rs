mod common;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sensor_select::barrier_solver::SolverParams;
use sensor_select::exchange::{self, SharedVectorMessage, decode_message, encode_message, run_session};
use sensor_select::experiments::{ExperimentConfig, generate_instance};
use sensor_select::strategies::{self, SharedVectorSet, Strategy};

fn random_set(rng: &mut ChaCha8Rng) -> SharedVectorSet {
    let n = rng.random_range(1..8);
    let count = rng.random_range(0..=n);
    let mut vectors: Vec<DVector<f64>> = (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-8..8))))
        .collect();
    vectors.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    SharedVectorSet::new(n, vectors).unwrap()
}

#[test]
fn encoding_round_trips_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let set = random_set(&mut rng);
        let back = decode_message(&encode_message(&set)).unwrap();
        assert_eq!(back, set);
        let msg: SharedVectorMessage = serde_json::from_slice(&encode_message(&set)).unwrap();
        assert_eq!(msg.sender, exchange::LEADER_ONE);
        assert_eq!(msg.payload_scalars(), set.len() * set.n());
    }
}

#[test]
fn session_matches_direct_calls() {
    let cfg = ExperimentConfig {
        m: 20,
        n: 4,
        k_s: 6,
        num_correlated_pairs: 4,
        ..ExperimentConfig::default()
    };
    let params = SolverParams::default();
    for seed in 0..50 {
        let p = generate_instance(&cfg, seed).unwrap();
        let direct = [
            strategies::select_naive(&p, cfg.k_s, &params).unwrap(),
            strategies::select_fdm(&p, cfg.k_s, 2, &params).unwrap(),
            strategies::select_lpm(&p, cfg.k_s, 2, &params).unwrap(),
        ];
        for (strategy, expected) in [Strategy::NaiveDecentralized, Strategy::Fdm, Strategy::Lpm]
            .into_iter()
            .zip(direct)
        {
            let (outcome, transcript) = run_session(&p, cfg.k_s, 2, strategy, &params).unwrap();
            assert_eq!(outcome, expected);
            let scalars = if strategy.shares_vectors() { 2 * cfg.n } else { 0 };
            assert_eq!(transcript.payload_scalars, scalars);
        }
    }
}

#[test]
fn default_instance_transcript_carries_n_times_dimension_scalars() {
    let cfg = ExperimentConfig::default();
    let p = generate_instance(&cfg, 1).unwrap();
    let params = SolverParams::default();
    for strategy in [Strategy::Fdm, Strategy::Lpm] {
        let (_, t) = run_session(&p, cfg.k_s, 5, strategy, &params).unwrap();
        assert_eq!((t.payload_vectors, t.payload_scalars), (5, 200));
        assert_eq!(t.message_bytes, t.message.as_ref().unwrap().len());
    }
    let (_, t) = run_session(&p, cfg.k_s, 5, Strategy::NaiveDecentralized, &params).unwrap();
    assert_eq!((t.payload_scalars, t.message_bytes), (0, 0));
    assert!(run_session(&p, cfg.k_s, 5, Strategy::Centralized, &params).is_err());
}

#[test]
fn malformed_messages_are_rejected() {
    for bad in [
        &b"{\"sender\":1,\"n\":2,\"vectors\":[[1.0]]}"[..],
        b"{\"sender\":1,\"n\":1,\"vectors\":[[1.0],[2.0]]}",
        b"{\"sender\":1,\"n\":2,\"vectors\":[],\"extra\":0}",
        b"not json",
    ] {
        assert!(decode_message(bad).is_err(), "{}", String::from_utf8_lossy(bad));
    }
}

mod common;

use common::{boolean_optimum, gaussian, gaussian_rows, indicator, oracle_log_det, subsets};
use nalgebra::DMatrix;
use proptest::prelude::*;
use sensor_select::barrier_solver::SolverParams;
use sensor_select::experiments::{ExperimentConfig, generate_instance};
use sensor_select::strategies::{
    self, Coupling, SharedVectorSet, extract_shared_vectors, lpm_costs, select_centralized, select_fdm, select_lpm,
    select_naive,
};
use sensor_select::{MeasurementMatrix, Partition, SelectionVector};

fn rows(v: &[[f64; 2]]) -> MeasurementMatrix {
    MeasurementMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        m: 20,
        n: 4,
        k_s: 6,
        num_correlated_pairs: 4,
        ..ExperimentConfig::default()
    }
}

#[test]
fn centralized_bounds_bracket_boolean_optimum() {
    let params = SolverParams::default();
    for seed in 0..3 {
        let a = gaussian_rows(500 + seed, 12, 3);
        let out = select_centralized(&a, 6, &params).unwrap();
        let best = boolean_optimum(a.matrix(), 6);
        assert_eq!(subsets(12, 6).len(), 924);
        assert!(out.bounds.lower <= best + 1e-12);
        assert!(out.bounds.upper - best >= -1e-6, "{} vs {best}", out.bounds.upper);
        let l = oracle_log_det(a.matrix(), out.z_boolean.entries());
        assert!((l - out.bounds.lower).abs() < 1e-10);
    }
}

#[test]
fn leave_one_out_budget_has_small_gap() {
    let m = 20;
    let a = gaussian_rows(77, m, 3);
    let out = select_centralized(&a, m - 1, &SolverParams::default()).unwrap();
    let best = (0..m)
        .map(|drop| {
            let keep: Vec<usize> = (0..m).filter(|&i| i != drop).collect();
            oracle_log_det(a.matrix(), &indicator(m, &keep))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(out.bounds.lower <= best + 1e-12 && best <= out.bounds.upper + 1e-6);
    assert!(out.bounds.upper - out.bounds.lower < 0.1);
}

#[test]
fn naive_on_interleaved_axes() {
    let half = rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
    let p = Partition::new(half.clone(), half).unwrap();
    let out = select_naive(&p, 4, &SolverParams::default()).unwrap();
    assert!(out.z_relaxed.entries().iter().all(|v| (v - 0.5).abs() < 1e-6));
    assert_eq!(out.z_boolean.entries(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let ln4 = 2.0 * 2f64.ln();
    assert!((out.bounds.lower - ln4).abs() < 1e-12);
    assert!((out.bounds.upper - ln4).abs() < 1e-6);
}

#[test]
fn fdm_moves_node_two_away_from_shared_direction() {
    let a1 = rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
    let a2 = rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]);
    let p = Partition::new(a1, a2).unwrap();
    let shared = SharedVectorSet::new(2, vec![nalgebra::dvector![10.0, 0.0]]).unwrap();
    let node2 = strategies::leader_two(&p, 4, Coupling::FocusedDiversity(&shared), &SolverParams::default()).unwrap();
    let z = node2.relaxed.z_star.entries();
    assert!(z[2] + z[3] > z[0] + z[1]);
    assert_eq!(node2.selection.support(), vec![2, 3]);

    // Node-2 Boolean choices under the augmented objective: {2,3} is the best pair.
    let s = shared.augmentation();
    let value = |sel: &[usize]| {
        let info = common::weighted_gram(p.a2().matrix(), &indicator(4, sel)) + &s;
        info.determinant().ln()
    };
    let best = subsets(4, 2).into_iter().max_by(|x, y| value(x).total_cmp(&value(y))).unwrap();
    assert_eq!(best, vec![2, 3]);
}

#[test]
fn lpm_prefers_row_orthogonal_to_shared_direction() {
    let a1 = rows(&[[1.0, 0.0], [0.0, 1.0]]);
    let a2 = rows(&[[1.0, 0.0], [0.0, 1.0]]);
    let p = Partition::new(a1, a2).unwrap();
    let shared = SharedVectorSet::new(2, vec![nalgebra::dvector![3.0, 0.0]]).unwrap();
    let node2 = strategies::leader_two(&p, 2, Coupling::LinearPenalty(&shared), &SolverParams::default()).unwrap();
    assert_eq!(node2.selection.support(), vec![1]);
}

#[test]
fn zero_shared_vectors_reduce_to_naive() {
    let cfg = small_config();
    let params = SolverParams::default();
    for seed in 0..100 {
        let p = generate_instance(&cfg, seed).unwrap();
        let naive = select_naive(&p, cfg.k_s, &params).unwrap();
        for out in [
            select_fdm(&p, cfg.k_s, 0, &params).unwrap(),
            select_lpm(&p, cfg.k_s, 0, &params).unwrap(),
        ] {
            assert_eq!(out.z_relaxed, naive.z_relaxed);
            assert_eq!(out.z_boolean, naive.z_boolean);
            assert_eq!(out.bounds.lower.to_bits(), naive.bounds.lower.to_bits());
            assert_eq!(out.bounds.upper.to_bits(), naive.bounds.upper.to_bits());
        }
    }
}

#[test]
fn decentralized_relaxation_never_exceeds_centralized_bound() {
    let cfg = small_config();
    let params = SolverParams::default();
    for seed in 0..20 {
        let p = generate_instance(&cfg, seed).unwrap();
        for out in [
            select_naive(&p, cfg.k_s, &params).unwrap(),
            select_fdm(&p, cfg.k_s, 2, &params).unwrap(),
            select_lpm(&p, cfg.k_s, 2, &params).unwrap(),
        ] {
            assert!(out.relaxed_value <= out.bounds.upper + 1e-6);
            assert!(out.z_relaxed.entries().iter().sum::<f64>() - cfg.k_s as f64 <= 1e-8);
        }
    }
}

#[test]
fn correlated_halves_hurt_naive_selection() {
    let cfg = ExperimentConfig {
        m: 40,
        n: 8,
        k_s: 12,
        num_correlated_pairs: 20,
        ..ExperimentConfig::default()
    };
    let params = SolverParams::default();
    let mut diff = 0.0;
    for seed in 0..20 {
        let p = generate_instance(&cfg, seed).unwrap();
        let cen = select_centralized(&p.stacked(), cfg.k_s, &params).unwrap();
        let dec = select_naive(&p, cfg.k_s, &params).unwrap();
        diff += cen.bounds.lower - dec.bounds.lower;
    }
    assert!(diff > 0.0, "{diff}");
}

#[test]
fn shared_vectors_are_orthogonal_and_reconstruct_information() {
    let a1 = gaussian_rows(9, 10, 4);
    let z1 = SelectionVector::from_indices(10, &[0, 2, 3, 5, 7, 8]).unwrap();
    let all = extract_shared_vectors(&a1, &z1, 4).unwrap();
    let info = a1.information(&z1, None).unwrap();
    let mut rebuilt = DMatrix::zeros(4, 4);
    for (i, g) in all.vectors().iter().enumerate() {
        let lambda = g.norm();
        rebuilt += g * g.transpose() / lambda;
        for h in &all.vectors()[i + 1..] {
            assert!(g.dot(h).abs() < 1e-10 * info.amax());
        }
    }
    assert!((rebuilt - &info).amax() < 1e-10 * info.amax().max(1.0));
    assert!(extract_shared_vectors(&a1, &z1, 5).is_err());
    assert!(extract_shared_vectors(&a1, &z1, 0).unwrap().is_empty());
}

proptest! {
    #[test]
    fn lpm_costs_are_homogeneous(seed in 0u64..1000, t in 0.01f64..100.0) {
        let a2 = gaussian_rows(seed, 6, 3);
        let g = gaussian(seed + 1, 3, 2);
        let mut cols: Vec<_> = g.column_iter().map(|c| c.into_owned()).collect();
        cols.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
        let shared = SharedVectorSet::new(3, cols).unwrap();
        let c = lpm_costs(&a2, &shared).unwrap();
        let ct = lpm_costs(&a2, &shared.scaled(t)).unwrap();
        for (x, y) in c.iter().zip(ct.iter()) {
            prop_assert!(*x >= 0.0);
            prop_assert!((y - t * x).abs() <= 1e-12 * (t * x).abs().max(1.0));
        }
    }
}

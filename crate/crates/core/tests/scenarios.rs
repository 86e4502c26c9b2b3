use std::sync::Arc;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kcm_core::blocks::{
    block_dims, estimate_block_probs, exact_block_probs, fa2_failure_bound, key_condition_value, lambda_bound_exponent,
    lambda_phi, lambda_phi_exact, phi_map, BlockModel, BlockSpec, ConditionTerm, LambdaPhi, P2Mode,
};
use kcm_core::bootstrap::{estimate_lc, estimate_qc, estimate_span_probability, spanning_probability_curve};
use kcm_core::kcm::{sample_persistence_time, KcmParams, Observable, Start};
use kcm_core::paths::{
    chain_schedule, congestion_constant, cross_schedule, gg_column_moves, path_a, path_b, plant_good, plant_supergood,
    verify_legal, ColumnMove, CongestionMode, LegalPath,
};
use kcm_core::percolation::{estimate_crossing_failure, find_clusters, supercritical_condition_check};
use kcm_core::rng::random_configuration_replica;
use kcm_core::spectral::build_generator;
use kcm_core::{Boundary, Configuration, Error, Geometry, Outside, RegionKind, UpdateFamily};

fn free(dims: &[usize]) -> Arc<Geometry> {
    Arc::new(Geometry::free(dims).unwrap())
}

#[test]
fn fa1f_critical_probability_is_analytic() {
    let fam = UpdateFamily::fa_kf(1, 1).unwrap();
    for n in [4usize, 16] {
        let e = estimate_qc(n, &fam, 1e-3, 4000, 17).unwrap();
        let exact = 1.0 - 2f64.powf(-1.0 / n as f64);
        assert!(e.estimate.lo - 1e-3 <= exact && exact <= e.estimate.hi + 1e-3, "n={n}: {:?} vs {exact}", e.estimate);
        assert!(!e.non_monotone);
    }
}

#[test]
fn fa1f_critical_length_is_analytic() {
    for d in [1usize, 2] {
        let fam = UpdateFamily::fa_kf(d, 1).unwrap();
        for q in [0.02, 0.05, 0.2] {
            let e = estimate_lc(q, &fam, 256, 4000, 3).unwrap();
            let exact = (2f64.ln() / -(1.0 - q).ln()).powf(1.0 / d as f64).ceil() as usize;
            // The estimate may straddle the exact side only when the span
            // probability there is within noise of 1/2.
            let close = |n: usize| {
                let p = 1.0 - (1.0 - q).powf((n as f64).powi(d as i32));
                (p - 0.5).abs() < 0.03
            };
            assert!(e.n == exact || close(e.n) || close(exact), "d={d} q={q}: {} vs {exact}", e.n);
        }
    }
}

#[test]
fn fa2_critical_probability_decreases_with_size() {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let a = estimate_qc(64, &fam, 1e-3, 200, 8).unwrap();
    let b = estimate_qc(128, &fam, 1e-3, 200, 8).unwrap();
    assert!(b.estimate.value <= a.estimate.hi, "{:?} {:?}", a.estimate, b.estimate);
}

#[test]
fn spanning_curves() {
    let fa1 = UpdateFamily::fa_kf(2, 1).unwrap();
    for (l, e) in spanning_probability_curve(&[1, 2, 4, 8], &fa1, 0.05, 4000, 2).unwrap() {
        let exact = 1.0 - 0.95f64.powi((l * l) as i32);
        assert!(e.contains(exact) || (e.value - exact).abs() < 0.02, "L={l}");
    }
    let fa2 = UpdateFamily::fa_kf(2, 2).unwrap();
    let curve = spanning_probability_curve(&[4, 8, 16, 32, 64], &fa2, 0.15, 400, 5).unwrap();
    assert!(curve.windows(2).all(|w| w[1].1.value >= w[0].1.value), "{curve:?}");
    let tiny = spanning_probability_curve(&[1], &fa2, 0.15, 400, 5).unwrap();
    assert!(tiny[0].1.value <= 0.15 + 0.06);
}

#[test]
fn span_probability_edges() {
    let fa2 = UpdateFamily::fa_kf(2, 2).unwrap();
    assert_eq!(estimate_span_probability(6, &fa2, 1.0, 50, 1).unwrap().value, 1.0);
    assert_eq!(estimate_span_probability(6, &fa2, 0.0, 50, 1).unwrap().value, 0.0);
}

#[test]
fn persistence_grows_as_q_falls() {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let g = Arc::new(Geometry::torus(&[16, 16]).unwrap());
    let mean = |q: f64| {
        // Frozen classes exist on a finite torus, so censored samples are
        // counted at the horizon.
        let params = KcmParams::new(fam.clone(), q, g.clone(), 1e4, 4).unwrap();
        let s = sample_persistence_time(&params, 200, Start::Stationary, Observable::ReachEmpty).unwrap();
        assert!(s.censored_fraction < 0.05);
        s.mean_lower_bound
    };
    let (a, b) = (mean(0.3), mean(0.2));
    assert!(a <= b, "{a} vs {b}");
}

#[test]
fn poincare_ratios_are_bounded_by_relaxation() {
    let g = Geometry::torus(&[4]).unwrap();
    let gen = build_generator(&g, &UpdateFamily::fa_kf(1, 1).unwrap(), 0.3).unwrap();
    let gap = gen.gap().unwrap();
    assert_relative_eq!(gen.poincare_ratio(&[gap.eigenfunction.clone()]).unwrap(), gap.t_rel, max_relative = 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fs: Vec<Vec<f64>> =
        (0..1000).map(|_| (0..gen.class_size()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    assert!(gen.poincare_ratio(&fs).unwrap() <= gap.t_rel + 1e-8);

    // The state of a corner of an FA-2f box relaxes only through both of
    // its neighbours: far slower than an unconstrained site (ratio 1).
    let g = Geometry::free(&[3, 3]).unwrap();
    let gen = build_generator(&g, &UpdateFamily::fa_kf(2, 2).unwrap(), 0.3).unwrap();
    let t_rel = gen.relaxation_time().unwrap();
    let f: Vec<f64> = gen.states().iter().map(|s| (s & 1) as f64).collect();
    let r = gen.poincare_ratio(&[f]).unwrap();
    assert!(r > 5.0 && r <= t_rel + 1e-8, "{r} vs {t_rel}");
}

#[test]
fn fa1f_ring_relaxation_matches_dense() {
    let g = Geometry::torus(&[3]).unwrap();
    let gen = build_generator(&g, &UpdateFamily::fa_kf(1, 1).unwrap(), 0.5).unwrap();
    let dense = gen.dense_spectrum().unwrap();
    assert!(dense[0].abs() < 1e-10 && dense[1] > 1e-6);
    assert_relative_eq!(gen.relaxation_time().unwrap(), 1.0 / dense[1], max_relative = 1e-8);
}

#[test]
fn block_formulas_and_edges() {
    let n = block_dims(&BlockModel::Gg, 0.25, 7.0).unwrap();
    assert_eq!(n, vec![(7.0 * 4f64.ln() / 0.0625) as usize, (7.0 * 4f64.ln() / 0.25) as usize]);
    assert!(block_dims(&BlockModel::Fa2 { d: 2 }, 0.99, 3.5).is_err());
    let spec = BlockSpec::with_dims(BlockModel::Gg, vec![6, 4], 1.0).unwrap();
    let probs = estimate_block_probs(&spec, 20, 1).unwrap();
    assert_eq!((probs.p1.value, probs.p2_mc.value, probs.condition_value), (1.0, 1.0, 0.0));
}

#[test]
fn small_fa2_block_probabilities() {
    let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![3, 3], 0.4).unwrap();
    let (p1, p2) = exact_block_probs(&spec).unwrap();
    let est = estimate_block_probs(&spec, 20_000, 9).unwrap();
    assert!(est.p1.contains(p1), "{:?} vs {p1}", est.p1);
    assert_eq!(est.p2_mode, P2Mode::Exact);
    assert_eq!(est.p2, p2);
    assert!(est.p2_mc.value <= est.p1.value);
}

#[test]
fn fa2_failure_bound_at_formula_size() {
    let spec = BlockSpec::from_formula(BlockModel::Fa2 { d: 2 }, 0.2, 3.5).unwrap();
    let n = spec.dims[0];
    let est = estimate_block_probs(&spec, 2000, 4).unwrap();
    let slack = 3.0 * est.p1.half_width();
    assert!(1.0 - est.p1.value <= fa2_failure_bound(2, n, 0.2) + slack);
    assert_eq!(est.p2_mode, P2Mode::LowerBound);
}

#[test]
fn phi_changes_weight_by_flipped_sites() {
    let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![4, 4], 0.3).unwrap();
    let g = free(&[4, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for r in 0..50 {
        let mut c = random_configuration_replica(g.clone(), 0.3, 6, r);
        plant_good(&mut c, &spec, &[0, 0], &mut rng).unwrap();
        let p = phi_map(&c, &spec).unwrap();
        let flipped = c.diff(&p).len() as i32;
        let mu = |x: &Configuration| 0.3f64.powi(x.count_empty() as i32) * 0.7f64.powi(x.count_occupied() as i32);
        assert_relative_eq!(mu(&p) / mu(&c), (0.3f64 / 0.7).powi(flipped), max_relative = 1e-12);
    }
}

#[test]
fn exact_lambda_is_within_bound() {
    for (model, dims) in [(BlockModel::Fa2 { d: 2 }, vec![2, 2]), (BlockModel::Fa2 { d: 2 }, vec![3, 3]), (BlockModel::Gg, vec![4, 2])]
    {
        for q in [0.3, 0.5] {
            let spec = BlockSpec::with_dims(model.clone(), dims.clone(), q).unwrap();
            let exact = lambda_phi_exact(&spec).unwrap();
            assert!(exact >= 1.0);
            assert!(exact.ln() <= lambda_bound_exponent(&spec.model, &spec.dims) * (2.0 / q).ln() + 1e-12);
            assert!(matches!(lambda_phi(&spec).unwrap(), LambdaPhi::Exact(_)));
        }
    }
    let big = BlockSpec::with_dims(BlockModel::Fakf { d: 3, k: 3, ell: 4.0 }, vec![5, 5, 5], 0.2).unwrap();
    match lambda_phi(&big).unwrap() {
        LambdaPhi::LnBound(l) => assert_relative_eq!(l, 3.0 * 25.0 * 10f64.ln(), max_relative = 1e-12),
        other => panic!("{other:?}"),
    }
}

#[test]
fn key_condition_edges() {
    let zero = [ConditionTerm { lambda: 0.5, epsilon: 0.0, overlap: 4.0 }; 3];
    assert_eq!(key_condition_value(&zero).unwrap().value, 0.0);
    assert!(key_condition_value(&[ConditionTerm { lambda: 0.0, epsilon: 0.1, overlap: 1.0 }]).is_err());
}

#[test]
fn path_b_on_fa2_blocks() {
    let spec = BlockSpec::with_dims(BlockModel::Fa2 { d: 2 }, vec![4, 4], 0.4).unwrap();
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 0..200 {
        let axis = (r % 2) as usize;
        let dims = if axis == 0 { [8, 4] } else { [4, 8] };
        let g = free(&dims);
        let mut c = random_configuration_replica(g.clone(), 0.4, 12, r);
        let far = if axis == 0 { [4, 0] } else { [0, 4] };
        plant_good(&mut c, &spec, &[0, 0], &mut rng).unwrap();
        plant_supergood(&mut c, &spec, &far, &mut rng).unwrap();
        let p = path_b(&c, &spec, axis, true).unwrap();
        verify_legal(&p, &fam, Outside::Occupied).unwrap();
        assert!(p.len() <= 8 * 16);
        let block = c.restrict(&kcm_core::Cuboid::new(vec![0, 0], vec![4, 4]), Boundary::Free).unwrap();
        let want = phi_map(&block, &spec).unwrap();
        let got = p.end().restrict(&kcm_core::Cuboid::new(vec![0, 0], vec![4, 4]), Boundary::Free).unwrap();
        assert_eq!(got, want);
        let rest: Vec<usize> = p.end().diff(&c).into_iter().filter(|&v| g.coords(v).iter().zip(&far).any(|(x, f)| x >= f && *f > 0)).collect();
        assert!(rest.is_empty());
    }
}

#[test]
fn path_a_single_net_flip() {
    let spec = BlockSpec::with_dims(BlockModel::Gg, vec![6, 4], 0.5).unwrap();
    let fam = UpdateFamily::gg();
    let g = free(&[12, 8]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for r in 0..100 {
        let mut c = random_configuration_replica(g.clone(), 0.5, 13, r);
        plant_supergood(&mut c, &spec, &[6, 0], &mut rng).unwrap();
        plant_supergood(&mut c, &spec, &[0, 4], &mut rng).unwrap();
        let z = g.index(&[rng.random_range(0..6), rng.random_range(0..4)]).unwrap();
        if r % 2 == 0 {
            c.set_empty(z);
        }
        let p = path_a(&c, &spec, z).unwrap();
        verify_legal(&p, &fam, Outside::Occupied).unwrap();
        assert_eq!(p.end().diff(&c), vec![z]);
    }
}

#[test]
fn chain_degenerate_cases() {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let g = free(&[4, 4]);
    let slices: Vec<_> = (0..4).map(|j| g.region(&RegionKind::Slice { axis: 0, index: j }).unwrap()).collect();
    let mut c = Configuration::occupied(g.clone());
    for v in slices[0].iter() {
        c.set_empty(v);
    }
    assert!(chain_schedule(&c, &fam, &slices[..1]).unwrap().is_empty());
    c.set_empty(slices[1].vertices()[2]);
    let p = chain_schedule(&c, &fam, &slices[..2]).unwrap();
    assert!(p.is_decreasing() && p.len() <= slices[1].len());
    assert!(c.clone().region_is_empty(&slices[0]));
    assert!(p.end().region_is_empty(&slices[1]));
    assert!(matches!(chain_schedule(&c, &fam, &slices[..3]), Err(Error::ChainHypothesis(_))));
}

#[test]
fn cross_moves() {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let g = free(&[4, 4]);
    let mut c = Configuration::occupied(g.clone());
    for v in g.region(&RegionKind::Cross { center: vec![1, 1] }).unwrap().iter() {
        c.set_empty(v);
    }
    let p = cross_schedule(&c, &[1, 1], &[2, 1]).unwrap();
    verify_legal(&p, &fam, Outside::Occupied).unwrap();
    assert!(p.len() <= 16);
    assert!(p.end().region_is_empty(&g.region(&RegionKind::Cross { center: vec![2, 1] }).unwrap()));
    assert!(cross_schedule(&c, &[1, 1], &[2, 2]).is_err());
}

#[test]
fn gg_obs2_needs_top_sites() {
    let g = free(&[4, 5]);
    let mut c = Configuration::occupied(g.clone());
    for col in 0..2 {
        for r in 0..4 {
            c.set_empty(g.index(&[col, r]).unwrap());
        }
    }
    assert!(gg_column_moves(&c, ColumnMove::Obs2, 0, 4, true).is_err());
    c.set_empty(g.index(&[2, 4]).unwrap());
    c.set_empty(g.index(&[3, 4]).unwrap());
    let p = gg_column_moves(&c, ColumnMove::Obs2, 0, 4, true).unwrap();
    verify_legal(&p, &UpdateFamily::gg(), Outside::Occupied).unwrap();
}

#[test]
fn congestion_of_trivial_families() {
    let g = free(&[2, 2]);
    let c = Configuration::occupied(g.clone());
    let r = congestion_constant([&LegalPath::new(c)], 0.3);
    assert_eq!((r.rho, r.n_max, r.mode), (1.0, 0, CongestionMode::Exact));
    // One decreasing path of three flips: the worst state is its end.
    let start = Configuration::with_empty(g.clone(), [0]);
    let p = LegalPath::from_vertices(start, &[1, 2, 3]);
    let r = congestion_constant([&p], 0.3);
    assert_relative_eq!(r.rho, (0.7f64 / 0.3).powi(3), max_relative = 1e-12);
}

#[test]
fn crossing_and_series_regimes() {
    let g = free(&[6, 6]);
    let checker = Configuration::with_empty(g.clone(), (0..36).filter(|v| (v / 6 + v % 6) % 2 == 0));
    let labels = find_clusters(&checker);
    let mut seen: Vec<u32> = checker.empty_vertices().iter().map(|&v| labels[v]).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 18);

    let near_zero = estimate_crossing_failure(4, 0.001, 2000, 3).unwrap();
    assert!(near_zero.rows.iter().all(|(_, _, e)| e.value < 0.01));

    let huge = supercritical_condition_check(0.01, 1e3, 3).unwrap();
    assert_relative_eq!(huge.value, 0.4, max_relative = 1e-9);
    let small = supercritical_condition_check(1e-4, 40.0, 4).unwrap();
    assert!(small.value < 0.25);
    let big = supercritical_condition_check(0.3, 40.0, 4).unwrap();
    assert!(big.value > 0.25);
}

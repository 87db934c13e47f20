//! ALS baseline, separation metrics, synthetic data generation and file
//! formats.

use cpgsu::io::{read_factors, read_tensor, write_factors, write_tensor, write_trace, Payload, TRACE_HEADER};
use cpgsu::*;
use proptest::prelude::*;

fn instance(shape: Vec<usize>, rank: usize, seed: u64) -> Synthetic<f64> {
    let mut spec = SynthSpec::new(shape, rank);
    spec.seed = seed;
    synthesize(&spec).unwrap()
}

#[test]
fn als_recovers_an_exact_low_rank_tensor() {
    let syn = instance(vec![8, 8, 8], 2, 1);
    let out = cp_als(&syn.tensor, 2, 500, 1e-12, 3).unwrap();
    let err = rel_err(&syn.tensor, &out.factors).unwrap();
    assert!(err < 1e-6, "ALS rel err {err:e}");
}

#[test]
fn als_recovers_rank_two_for_most_seeds_and_never_increases_the_error() {
    let mut ok = 0;
    for seed in 0..30u64 {
        let syn = instance(vec![8, 8, 8], 2, 100 + seed);
        let out = cp_als(&syn.tensor, 2, 500, 1e-14, seed).unwrap();
        assert!(out.rel_errs.windows(2).all(|w| w[1] <= w[0] + 1e-10), "seed {seed}");
        if *out.rel_errs.last().unwrap() < 1e-6 {
            ok += 1;
        }
    }
    assert!(ok >= 25, "ALS recovered {ok}/30");
}

#[test]
fn relative_error_matches_the_smooth_objective() {
    for seed in 0..20u64 {
        let syn = instance(vec![5, 4, 6], 2, seed);
        let est: Factors = random_init(&[5, 4, 6], 3, seed).unwrap();
        let f = objective_smooth(&syn.tensor, &est).unwrap();
        let expected = (2.0 * f).sqrt() / syn.tensor.norm();
        let got = rel_err(&syn.tensor, &est).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn als_exact_fit_is_a_fixed_point() {
    let syn = instance(vec![5, 6, 7], 3, 2);
    let out = cp_als_from(&syn.tensor, syn.truth.clone(), 3, 0.0).unwrap();
    assert!(out.rel_errs.iter().all(|&e| e < 1e-10));
    assert!(rel_err(&syn.tensor, &out.factors).unwrap() < 1e-10);
}

#[test]
fn als_does_not_sparsify_an_overestimated_rank() {
    let syn = instance(vec![10, 10, 10], 3, 3);
    let out = cp_als(&syn.tensor, 5, 200, 1e-10, 4).unwrap();
    assert_eq!(support(out.factors.last()).len(), 5);
    assert!(rel_err(&syn.tensor, &out.factors).unwrap() < 1e-3);
}

#[test]
fn alignment_is_invariant_to_permutation_sign_and_scale() {
    let syn = instance(vec![7, 6, 5], 3, 5);
    // permute (2, 0, 1), flip a mode-0 sign compensated in the last mode,
    // and move scale between modes 1 and 2
    let order = [2usize, 0, 1];
    let mut factors: Vec<Mat> = syn.truth.factors().iter().map(|f| f.select_columns(&order).unwrap()).collect();
    factors[0].col_mut(1).iter_mut().for_each(|x| *x = -*x);
    factors[2].col_mut(1).iter_mut().for_each(|x| *x = -*x);
    factors[1].col_mut(2).iter_mut().for_each(|x| *x *= 3.0);
    factors[2].col_mut(2).iter_mut().for_each(|x| *x /= 3.0);
    let est = FactorSet::new(factors).unwrap();

    let al = align_components(&est, &syn.truth).unwrap();
    assert!(al.is_complete());
    assert_eq!(al.permutation(3), vec![Some(2), Some(0), Some(1)]);
    assert!(al.matches.iter().all(|m| (m.similarity - 1.0).abs() < 1e-12));
    let regressed = al.regressed_profiles(&est).unwrap();
    assert!(rmsep(syn.truth.last(), &regressed).unwrap() < 1e-12);
}

#[test]
fn alignment_reports_missing_components() {
    let syn = instance(vec![6, 6, 6], 3, 6);
    let mut est = syn.truth.clone();
    est.factor_mut(2).col_mut(1).iter_mut().for_each(|x| *x = 0.0);
    let al = align_components(&est, &syn.truth).unwrap();
    assert_eq!(al.matched_rank(), 2);
    assert!(!al.is_complete());
    assert!(al.regressed_profiles(&est).is_none());
    let other = instance(vec![6, 6, 7], 3, 6);
    assert!(align_components(&other.truth, &syn.truth).is_err());
}

#[test]
fn synthetic_noise_has_the_requested_relative_level() {
    for (seed, level) in [(1u64, 0.01), (2, 0.1), (3, 0.5)] {
        let mut spec = SynthSpec::new(vec![9, 8, 7], 3);
        spec.seed = seed;
        spec.noise_level = level;
        let syn = synthesize::<f64>(&spec).unwrap();
        let signal = reconstruct(&syn.truth).unwrap();
        let noise = syn.tensor.dist_sq(&signal).unwrap().sqrt();
        assert!((noise / signal.norm() - level).abs() < 1e-12);
        for (j, &w) in syn.weights.iter().enumerate() {
            assert!((1.0..=2.0).contains(&w));
            assert!((norm(syn.truth.last().col(j)) - w).abs() < 1e-12);
            assert!((norm(syn.truth.factor(0).col(j)) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn synthetic_spec_validation() {
    assert!(synthesize::<f64>(&SynthSpec::new(vec![3, 3], 1)).is_err());
    assert!(synthesize::<f64>(&SynthSpec::new(vec![3, 3, 3], 0)).is_err());
    let mut s = SynthSpec::new(vec![3, 3, 3], 1);
    s.weight_range = (2.0, 1.0);
    assert!(synthesize::<f64>(&s).is_err());
    assert!(SynthSpec::new(vec![2, 5, 5], 3).rank_exceeds_dims());
}

#[test]
fn trace_file_has_header_and_one_line_per_record() {
    let syn = instance(vec![5, 5, 5], 2, 7);
    let cfg = SolverConfig { rank_init: 3, ..Default::default() };
    let (_, trace) = outer_solve(&syn.tensor, &cfg).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), trace.records.len());
    assert!(rows.iter().all(|r| r.split(',').count() == 7));
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 3..5).prop_flat_map(|shape| {
        let len: usize = shape.iter().product();
        prop::collection::vec(-1e6f64..1e6, len).prop_map(move |data| DenseTensor::new(shape.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn tensor_files_round_trip(t in tensor_strategy(), binary in any::<bool>()) {
        let payload = if binary { Payload::Binary } else { Payload::Text };
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t, payload).unwrap();
        let back: Tensor = read_tensor(buf.as_slice()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn factor_files_round_trip(seed in any::<u64>(), rank in 1usize..4, dims in prop::collection::vec(1usize..6, 3..5)) {
        let fs: Factors = random_init(&dims, rank, seed).unwrap();
        let mut buf = Vec::new();
        write_factors(&mut buf, &fs).unwrap();
        let back: Factors = read_factors(buf.as_slice()).unwrap();
        prop_assert_eq!(back, fs);
    }

    #[test]
    fn truncated_tensor_files_are_rejected(t in tensor_strategy(), cut in 1usize..8) {
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t, Payload::Binary).unwrap();
        buf.truncate(buf.len() - cut.min(buf.len() - 1));
        prop_assert!(read_tensor::<f64, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn rmsep_is_a_scaled_euclidean_metric(
        a in prop::collection::vec(-10f64..10.0, 6),
        b in prop::collection::vec(-10f64..10.0, 6),
        c in prop::collection::vec(-10f64..10.0, 6),
    ) {
        let m = |v: &Vec<f64>| Mat::from_col_major(3, 2, v.clone()).unwrap();
        let (ma, mb, mc) = (m(&a), m(&b), m(&c));
        let ab = rmsep(&ma, &mb).unwrap();
        prop_assert_eq!(rmsep(&ma, &ma).unwrap(), 0.0);
        prop_assert!((ab - rmsep(&mb, &ma).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= rmsep(&ma, &mc).unwrap() + rmsep(&mc, &mb).unwrap() + 1e-12);
    }
}

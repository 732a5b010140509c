//! Experiment-level consistency checks: classifier-direction agreement on the
//! stock family table, the Fubini cross-check between pair and slice
//! experiments, and the explicit-constant slice behavior for badly and very
//! well approximable matrices.

use dioph::badapprox::{
    bad_constants_weighted, golden_theta, liouville_theta_f64, WeightedProfile,
};
use dioph::experiments::{
    classify_series, fixed_matrix_experiment, stock_families, zero_one_experiment, Convergence,
    SeriesSpec,
};
use dioph::linalg::Mat;
use dioph::weights::{ApproxFunction, WeightSystem};

/// Convergent-family fractions dominate the divergent-family median in every
/// paired comparison at equal budgets.
#[test]
fn theorem_direction_consistency() {
    let table = stock_families();
    let ws = table.weights.build().unwrap();
    let schedule = [100.0, 1000.0];
    let mut convergent_fracs = Vec::new();
    let mut divergent_fracs = Vec::new();
    for fam in &table.families {
        let g = fam.g.build(&ws).unwrap();
        let spec = SeriesSpec::dirichlet_sum(ws.clone(), g.clone());
        let verdict = classify_series(&spec, 2.0, 40).unwrap().verdict;
        assert_eq!(verdict, fam.expected, "family {}", fam.name);
        let est = zero_one_experiment(&ws, &g, 40, 10.0, &schedule, 1, 1 << 22).unwrap();
        match verdict {
            Convergence::Converges => convergent_fracs.push(*est.fractions.last().unwrap()),
            Convergence::Diverges => divergent_fracs.push(*est.fractions.last().unwrap()),
            Convergence::Inconclusive => {}
        }
    }
    divergent_fracs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = divergent_fracs[divergent_fracs.len() / 2];
    for (i, f) in convergent_fracs.iter().enumerate() {
        assert!(
            *f >= median,
            "convergent family {i} fraction {f} below divergent median {median}"
        );
    }
}

/// Both series sides classify consistently on every stock family: a definite
/// verdict on one side is never contradicted by a definite verdict on the
/// other.
#[test]
fn equivalence_consistent_on_stock_table() {
    let table = stock_families();
    let ws = table.weights.build().unwrap();
    for fam in &table.families {
        let g = fam.g.build(&ws).unwrap();
        let f = g.duality_transform().unwrap();
        let report = dioph::experiments::check_series_equivalence(&ws, &f, &g, 2.0, 40).unwrap();
        assert!(report.consistent, "contradiction on family {}", fam.name);
        assert_eq!(report.g_side.verdict, fam.expected, "family {}", fam.name);
    }
}

/// The pair-experiment fraction is the average over Theta of the slice
/// fractions; check the finite analogue over a coarse Theta grid within
/// three standard errors.
#[test]
fn fubini_sanity() {
    let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
    let g = ApproxFunction::scaled_power(0.6, 1.0).unwrap();
    let schedule = [400.0];
    let pairs = zero_one_experiment(&ws, &g, 400, 1.0, &schedule, 5, 1 << 22).unwrap();
    let pair_frac = pairs.fractions[0];

    // a rational grid would be Diophantine-degenerate (rational matrices are
    // atypical for this problem), so the coarse grid is the equidistributed
    // Kronecker sequence of the golden ratio
    let grid = 20usize;
    let per_theta = 40u64;
    let mut acc = 0.0;
    for i in 0..grid {
        let theta = ((i as f64 + 1.0) * golden_theta()).fract();
        let m = Mat::from_rows(&[vec![theta]]).unwrap();
        let est = fixed_matrix_experiment(
            &m,
            &ws,
            &g,
            per_theta,
            1.0,
            &schedule,
            17 + i as u64,
            1 << 22,
            1.0,
        )
        .unwrap();
        acc += est.fractions[0];
    }
    let slice_frac = acc / grid as f64;
    // standard error of the pair estimate plus the slice-grid estimate
    let n_pairs = 400.0f64;
    let n_slices = (grid as u64 * per_theta) as f64;
    let se = (pair_frac * (1.0 - pair_frac) / n_pairs).sqrt()
        + (slice_frac * (1.0 - slice_frac) / n_slices).sqrt();
    assert!(
        (pair_frac - slice_frac).abs() <= 3.0 * se + 0.02,
        "pair {pair_frac} vs slice average {slice_frac}, se {se}"
    );
}

/// Badly approximable matrix with the explicit constant: every slice is
/// K(b) f1-Dirichlet, so the fraction is exactly one.
#[test]
fn golden_with_big_k_covers_every_slice() {
    let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
    let profile = WeightedProfile::new(vec![1.0], vec![1.0]).unwrap();
    // desk-scale bad approximability constant of the golden ratio is
    // min q ||q theta|| = 1 - theta ≈ 0.382
    let b = 1.0 - golden_theta();
    let constants = bad_constants_weighted(&profile, b).unwrap();
    let g = ApproxFunction::scaled_power(constants.big_k, 1.0).unwrap();
    let theta = Mat::from_rows(&[vec![golden_theta()]]).unwrap();
    let est = fixed_matrix_experiment(
        &theta,
        &ws,
        &g,
        100,
        1.0,
        &[100.0, 1000.0, 4000.0],
        11,
        1 << 22,
        1.0,
    )
    .unwrap();
    assert_eq!(est.fractions, vec![1.0, 1.0, 1.0]);
}

/// Deeply approximable matrix below kappa(b): the slice fractions collapse
/// once the window reaches the designed scales (pilot-calibrated).
#[test]
fn liouville_with_kappa_starves() {
    let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
    let profile = WeightedProfile::new(vec![1.0], vec![1.0]).unwrap();
    let b = 1.0 / 5f64.sqrt();
    let constants = bad_constants_weighted(&profile, b).unwrap();
    // kappa(1/sqrt 5) ≈ 0.070
    let g = ApproxFunction::scaled_power(constants.kappa, 1.0).unwrap();
    let theta = Mat::from_rows(&[vec![liouville_theta_f64(3)]]).unwrap();
    let est = fixed_matrix_experiment(
        &theta,
        &ws,
        &g,
        200,
        1.0,
        &[100.0, 1000.0, 4000.0],
        11,
        1 << 22,
        1.0,
    )
    .unwrap();
    // trend nonincreasing and far below the golden K(b) case
    assert!(est.fractions[1] <= est.fractions[0]);
    assert!(est.fractions[2] <= est.fractions[1]);
    assert!(
        1.0 - est.fractions[2] >= 0.5,
        "fraction {} too close to the covered case",
        est.fractions[2]
    );
}

/// Non-approximable matrix with the C-scaled system: the slice set is all of
/// R^n, so every sampled shift is covered.
#[test]
fn jarnik_scaled_slices_are_full() {
    let ws = WeightSystem::equal_power_weights(1, 1).unwrap();
    // f = 0.35 f1 admits no witnesses for the golden ratio at all
    // (min y ||y theta|| ≈ 0.382), so the hypothesis holds with g = dual(f)
    let f = ApproxFunction::scaled_power(0.35, 1.0).unwrap();
    let g = f.duality_transform().unwrap();
    let theta = Mat::from_rows(&[vec![golden_theta()]]).unwrap();
    let d = 2.0;
    let big_c = d * 2.0; // d * d! = 4
    let est = fixed_matrix_experiment(
        &theta,
        &ws,
        &g,
        100,
        1.0,
        &[200.0, 1000.0],
        23,
        1 << 22,
        big_c,
    )
    .unwrap();
    assert_eq!(est.fractions, vec![1.0, 1.0]);
}

//! Tests for Bessel evaluation and FM-index ratio inversion.
//!
//! The reference implementation here is a deliberately naive ascending
//! series with explicit factorials and powers — structurally unrelated to
//! the library's evaluator — so agreement between the two is meaningful.

use afms::bessel::{bessel_j, BesselRatioTable};
use afms::AfmsError;

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| f64::from(k)).product()
}

/// Naive ascending series J_m(x) = Σ_q (−1)^q (x/2)^{p+2q} / (q!·(p+q)!),
/// reduced to p = |m| ≥ 0 and x ≥ 0 via the reflection identities. Sixty
/// terms bound the truncation error far below 1e−15 for |x| ≤ 5, |m| ≤ 10;
/// the largest factorial (69!) stays within f64 range.
fn series_oracle(m: i32, x: f64) -> f64 {
    let p = m.unsigned_abs();
    let mut sign = 1.0;
    if m < 0 && p % 2 == 1 {
        sign = -sign;
    }
    if x < 0.0 && p % 2 == 1 {
        sign = -sign;
    }
    let half = x.abs() / 2.0;
    let mut sum = 0.0;
    for q in 0..60u32 {
        let term = half.powi((p + 2 * q) as i32) / (factorial(q) * factorial(p + q));
        sum += if q % 2 == 0 { term } else { -term };
    }
    sign * sum
}

#[test]
fn matches_independent_series_oracle() {
    let mut worst = 0.0f64;
    for m in -10..=10 {
        for i in 0..=50 {
            let x = 0.1 * f64::from(i);
            let got = bessel_j(m, x).unwrap();
            let want = series_oracle(m, x);
            worst = worst.max((got - want).abs());
        }
    }
    assert!(worst < 1e-12, "max |bessel_j - series oracle| = {worst:e}");
}

#[test]
fn normalization_identity_holds() {
    // J_0(x)^2 + 2 Σ_{m=1..40} J_m(x)^2 = 1 for every real x; orders above
    // 40 contribute < 1e-30 for x ≤ 5.
    for i in 0..=50 {
        let x = 0.1 * f64::from(i);
        let mut total = bessel_j(0, x).unwrap().powi(2);
        for m in 1..=40 {
            total += 2.0 * bessel_j(m, x).unwrap().powi(2);
        }
        assert!(
            (total - 1.0).abs() < 1e-10,
            "normalization off by {:e} at x = {x}",
            (total - 1.0).abs()
        );
    }
}

#[test]
fn reference_values() {
    // High-precision reference values (computed with 20-digit arithmetic).
    let cases: &[(i32, f64, f64)] = &[
        (0, 0.5, 0.938_469_807_240_812_904_23),
        (1, 1.0, 0.440_050_585_744_933_515_96),
        (2, 1.6, 0.256_967_751_437_719_771_29),
        (3, 1.7, 0.085_149_926_948_015_258_315),
        (5, 4.2, 0.156_136_296_960_424_111_27),
        (10, 5.0, 0.001_467_802_647_310_474_131_1),
        (0, 2.404_826, -2.296_211_114_436_532_463_4e-7),
        (7, 11.5, -0.084_624_465_349_975_154_017),
        (20, 30.0, 0.004_831_019_993_404_064_538_6),
        (40, 45.0, 0.126_600_621_268_202_002_67),
        (1, 0.001, 0.000_499_999_937_500_002_614_57),
    ];
    for &(m, x, want) in cases {
        let got = bessel_j(m, x).unwrap();
        assert!(
            (got - want).abs() < 1e-12,
            "J_{m}({x}) = {got:.17e}, want {want:.17e}"
        );
    }
}

#[test]
fn zero_argument_values() {
    assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
    for m in [1, 2, 5, -3, 17, -50] {
        assert_eq!(bessel_j(m, 0.0).unwrap(), 0.0, "J_{m}(0) must vanish");
    }
}

#[test]
fn reflection_identities() {
    // Both identities are exact: negative order and negative argument reduce
    // to the same nonnegative-order evaluation with only a sign flip.
    for m in 0..=10 {
        for i in 1..=25 {
            let x = 0.2 * f64::from(i);
            let base = bessel_j(m, x).unwrap();
            let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(-m, x).unwrap(), parity * base);
            assert_eq!(bessel_j(m, -x).unwrap(), parity * base);
        }
    }
}

#[test]
fn first_zero_of_j0() {
    let v = bessel_j(0, 2.404_826).unwrap();
    assert!(v.abs() < 1e-6, "J_0 near its first zero: {v:e}");
}

#[test]
fn envelope_rejection() {
    assert!(matches!(bessel_j(51, 1.0), Err(AfmsError::OutOfEnvelope(_))));
    assert!(matches!(bessel_j(-51, 1.0), Err(AfmsError::OutOfEnvelope(_))));
    assert!(matches!(bessel_j(0, 50.1), Err(AfmsError::OutOfEnvelope(_))));
    assert!(matches!(bessel_j(0, -50.1), Err(AfmsError::OutOfEnvelope(_))));
    assert!(matches!(
        bessel_j(0, f64::NAN),
        Err(AfmsError::OutOfEnvelope(_))
    ));
    // Envelope corners are inside the supported domain.
    assert!(bessel_j(50, 50.0).unwrap().is_finite());
    assert!(bessel_j(-50, -50.0).unwrap().is_finite());
}

#[test]
fn table_construction_validation() {
    assert!(matches!(
        BesselRatioTable::new(4.0, 0.001),
        Err(AfmsError::InvalidParams(_))
    ));
    assert!(matches!(
        BesselRatioTable::new(5.0, 0.002),
        Err(AfmsError::InvalidParams(_))
    ));
    assert!(matches!(
        BesselRatioTable::new(5.0, 0.0),
        Err(AfmsError::InvalidParams(_))
    ));
    let table = BesselRatioTable::standard();
    let grid = table.grid();
    assert_eq!(grid.len(), 5001);
    assert_eq!(grid[0], 0.0);
    assert!((grid[grid.len() - 1] - 5.0).abs() < 1e-12);
}

#[test]
fn ratio_accessor_clamps_and_rejects() {
    let table = BesselRatioTable::standard();
    // J_1(0)/J_0(0) = 0/1 is well defined; the inverse is clamped.
    assert_eq!(table.ratio(1, 0, 0).unwrap(), 0.0);
    assert_eq!(table.ratio(0, 1, 0).unwrap(), 1e30);
    assert!(matches!(
        table.ratio(3, 0, 0),
        Err(AfmsError::OutOfEnvelope(_))
    ));
}

#[test]
fn invert_exact_ratios() {
    let table = BesselRatioTable::standard();
    let k = 0.8;
    let j0 = bessel_j(0, k).unwrap();
    let j1 = bessel_j(1, k).unwrap();
    let j2 = bessel_j(2, k).unwrap();
    let got = table
        .invert_kf(&[(0, 1, j0 / j1), (0, 2, j0 / j2)])
        .unwrap();
    assert!((got - k).abs() < 1e-3, "inverted {got} for true {k}");
}

#[test]
fn invert_round_trip_grid() {
    let table = BesselRatioTable::standard();
    for i in 1..=20 {
        let k = 0.1 * f64::from(i);
        let j0 = bessel_j(0, k).unwrap();
        let j1 = bessel_j(1, k).unwrap();
        let j2 = bessel_j(2, k).unwrap();
        let got = table
            .invert_kf(&[(0, 1, j0 / j1), (0, 2, j0 / j2)])
            .unwrap();
        assert!(
            (got - k).abs() <= 0.002,
            "round trip at k = {k} returned {got}"
        );
    }
}

#[test]
fn invert_tiny_index_from_single_large_ratio() {
    // J_0/J_1 ≈ 2/k for small k; a ratio of ~2000 pins k_f near 0.001. The
    // answer sits in the first grid cell, so only grid-level accuracy is
    // available.
    let table = BesselRatioTable::standard();
    let k = 0.001;
    let r = bessel_j(0, k).unwrap() / bessel_j(1, k).unwrap();
    let got = table.invert_kf(&[(0, 1, r)]).unwrap();
    assert!((got - k).abs() < 1e-3, "inverted {got} for true {k}");
}

#[test]
fn invert_tolerates_perturbed_ratios() {
    let table = BesselRatioTable::standard();
    let k = 1.2;
    let j0 = bessel_j(0, k).unwrap();
    let j1 = bessel_j(1, k).unwrap();
    let j2 = bessel_j(2, k).unwrap();
    let got = table
        .invert_kf(&[(0, 1, 1.01 * j0 / j1), (0, 2, 1.01 * j0 / j2)])
        .unwrap();
    assert!(
        (got - k).abs() < 0.05,
        "1% ratio perturbation moved k to {got}"
    );
}

#[test]
fn invert_rejects_unreachable_single_ratio() {
    // J_0/J_1 is nonnegative on (0, 2.404]; a negative target drives the
    // scan to its boundary, which must be reported, not returned.
    let table = BesselRatioTable::standard();
    assert!(matches!(
        table.invert_kf(&[(0, 1, -0.5)]),
        Err(AfmsError::Inversion(_))
    ));
}

#[test]
fn invert_rejects_empty_and_nonfinite_input() {
    let table = BesselRatioTable::standard();
    assert!(matches!(
        table.invert_kf(&[]),
        Err(AfmsError::EmptyInput(_))
    ));
    assert!(matches!(
        table.invert_kf(&[(0, 1, f64::NAN)]),
        Err(AfmsError::InvalidParams(_))
    ));
}

#[test]
fn single_ratio_without_order_zero_searches_past_j0_zero() {
    // A (1,2) ratio stays informative beyond the first J_0 zero; inversion
    // must recover k_f ≈ 2.8 > 2.404 from it.
    let table = BesselRatioTable::standard();
    let k = 2.8;
    let r = bessel_j(1, k).unwrap() / bessel_j(2, k).unwrap();
    let got = table.invert_kf(&[(1, 2, r)]).unwrap();
    assert!((got - k).abs() < 0.01, "inverted {got} for true {k}");
}

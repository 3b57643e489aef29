//! Tests for the signal model: synthesis, Bessel-expansion equivalence,
//! admissibility validation, and the ensemble autocorrelation.

use afms::model::{
    ensemble_acf, ensemble_acf_stats, synthesize, synthesize_bessel, synthesize_noisy, SignalBlock,
};
use afms::{AfmsError, AfmsParams};
use std::f64::consts::FRAC_PI_2;

/// The documented example parameter set used across the reference fixtures.
fn example_params() -> AfmsParams {
    AfmsParams {
        a: 1.0,
        omega_c: 0.30,
        theta: 0.7,
        k_f: 0.8,
        omega_f: 0.008,
        k_a: 0.5,
        omega_a: 0.06,
        theta_a: 0.3,
        theta_b: 0.2,
        s: 1.0,
        r: -1.0,
    }
}

/// A valid carrier-only parameter set (no AM, no FM).
fn pure_cosine(a: f64, omega_c: f64, theta: f64) -> AfmsParams {
    AfmsParams {
        a,
        omega_c,
        theta,
        k_f: 0.0,
        omega_f: 0.008,
        k_a: 0.0,
        omega_a: 0.06,
        theta_a: 0.0,
        theta_b: 0.0,
        s: 1.0,
        r: -1.0,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn pure_cosine_collapse_five_samples() {
    let block = synthesize(&pure_cosine(1.0, 0.5, 0.0), 5, 500.0).unwrap();
    let want = [
        (-1.0f64).cos(),
        (-0.5f64).cos(),
        1.0,
        0.5f64.cos(),
        1.0f64.cos(),
    ];
    for (got, want) in block.samples.iter().zip(want) {
        assert_eq!(*got, want);
    }
    assert_eq!(block.center_offset, 2);
}

#[test]
fn shifted_cosine_collapse_three_samples() {
    let block = synthesize(&pure_cosine(2.0, 0.5, FRAC_PI_2), 3, 500.0).unwrap();
    let s = 2.0 * 0.5f64.sin();
    let want = [s, 0.0, -s];
    for (got, want) in block.samples.iter().zip(want) {
        assert!(
            (got - want).abs() < 1e-12,
            "sample {got} differs from {want}"
        );
    }
}

#[test]
fn golden_block_reproduction() {
    let text = include_str!("data/golden_block201.csv");
    let golden: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(golden.len(), 201);
    let block = synthesize(&example_params(), 201, 500.0).unwrap();
    assert!(max_abs_diff(&block.samples, &golden) <= 1e-12);
}

#[test]
fn amplitude_linearity() {
    let base = example_params();
    let doubled = AfmsParams {
        a: 2.0 * base.a,
        ..base
    };
    let x1 = synthesize(&base, 101, 500.0).unwrap();
    let x2 = synthesize(&doubled, 101, 500.0).unwrap();
    // Doubling is a pure exponent shift, so it commutes with every term.
    for (a, b) in x1.samples.iter().zip(&x2.samples) {
        assert_eq!(2.0 * a, *b);
    }
    let scaled = AfmsParams {
        a: 3.7 * base.a,
        ..base
    };
    let x3 = synthesize(&scaled, 101, 500.0).unwrap();
    for (a, b) in x1.samples.iter().zip(&x3.samples) {
        assert!((3.7 * a - b).abs() < 1e-12);
    }
}

#[test]
fn collapse_chain_is_bit_exact() {
    // k_a = 0 leaves the FM carrier; zeroed multiplications preserve the
    // remaining terms exactly, so the collapse admits equality, not tolerance.
    let fm_only = AfmsParams {
        k_a: 0.0,
        ..example_params()
    };
    let block = synthesize(&fm_only, 201, 500.0).unwrap();
    for (j, &got) in block.samples.iter().enumerate() {
        let n = j as f64 - 100.0;
        let psi = fm_only.k_f * (fm_only.omega_f * n).sin();
        assert_eq!(got, fm_only.a * (fm_only.omega_c * n + psi + fm_only.theta).cos());
    }

    let carrier = AfmsParams {
        k_f: 0.0,
        ..fm_only
    };
    let block = synthesize(&carrier, 201, 500.0).unwrap();
    for (j, &got) in block.samples.iter().enumerate() {
        let n = j as f64 - 100.0;
        assert_eq!(got, carrier.a * (carrier.omega_c * n + carrier.theta).cos());
    }
}

#[test]
fn bessel_expansion_matches_directly_without_fm() {
    let p = pure_cosine(1.3, 0.4, 0.9);
    let direct = synthesize(&p, 101, 500.0).unwrap();
    let bessel = synthesize_bessel(&p, 101, 1, 500.0).unwrap();
    assert!(max_abs_diff(&direct.samples, &bessel.samples) < 1e-12);
}

#[test]
fn bessel_expansion_converges_on_example_params() {
    let p = example_params();
    let direct = synthesize(&p, 201, 500.0).unwrap();
    let bessel = synthesize_bessel(&p, 201, 16, 500.0).unwrap();
    assert!(max_abs_diff(&direct.samples, &bessel.samples) < 1e-8);
}

#[test]
fn bessel_truncation_error_decreases() {
    let p = example_params();
    let direct = synthesize(&p, 201, 500.0).unwrap();
    let coarse = synthesize_bessel(&p, 201, 1, 500.0).unwrap();
    let fine = synthesize_bessel(&p, 201, 8, 500.0).unwrap();
    let err_coarse = max_abs_diff(&direct.samples, &coarse.samples);
    let err_fine = max_abs_diff(&direct.samples, &fine.samples);
    assert!(
        err_fine < err_coarse,
        "truncation error must shrink: M=1 gives {err_coarse:e}, M=8 gives {err_fine:e}"
    );
}

#[test]
fn bessel_expansion_rejects_zero_truncation() {
    assert!(matches!(
        synthesize_bessel(&example_params(), 201, 0, 500.0),
        Err(AfmsError::InvalidParams(_))
    ));
}

#[test]
fn validation_names_the_violated_invariant() {
    let ok = example_params();
    ok.validate().unwrap();

    let cases: Vec<(AfmsParams, &str)> = vec![
        (AfmsParams { a: 0.0, ..ok }, "A must be positive"),
        (AfmsParams { a: -1.0, ..ok }, "A must be positive"),
        (AfmsParams { k_f: -0.1, ..ok }, "k_f"),
        (AfmsParams { k_a: -0.1, ..ok }, "k_a"),
        (AfmsParams { r: 1.0, ..ok }, "r is fixed at -1"),
        (AfmsParams { omega_f: 0.0, ..ok }, "ordering"),
        (AfmsParams { omega_f: 0.08, ..ok }, "ordering"),
        (AfmsParams { omega_a: 0.5, ..ok }, "ordering"),
        (AfmsParams { omega_c: 1.49, ..ok }, "Nyquist"),
        (AfmsParams { a: f64::NAN, ..ok }, "finite"),
    ];
    for (params, needle) in cases {
        let err = params.validate().unwrap_err();
        assert!(matches!(err, AfmsError::InvalidParams(_)));
        let msg = err.to_string();
        assert!(msg.contains(needle), "message {msg:?} lacks {needle:?}");
    }
}

#[test]
fn synthesize_rejects_even_or_zero_length() {
    assert!(matches!(
        synthesize(&example_params(), 4, 500.0),
        Err(AfmsError::InvalidLength(_))
    ));
    assert!(matches!(
        synthesize(&example_params(), 0, 500.0),
        Err(AfmsError::InvalidLength(_))
    ));
}

#[test]
fn noisy_synthesis_is_seed_deterministic() {
    let p = example_params();
    let a = synthesize_noisy(&p, 101, 500.0, 0.1, 7).unwrap();
    let b = synthesize_noisy(&p, 101, 500.0, 0.1, 7).unwrap();
    assert_eq!(a.samples, b.samples);
    let c = synthesize_noisy(&p, 101, 500.0, 0.1, 8).unwrap();
    assert_ne!(a.samples, c.samples);

    let clean = synthesize_noisy(&p, 101, 500.0, 0.0, 7).unwrap();
    assert_eq!(clean.samples, synthesize(&p, 101, 500.0).unwrap().samples);

    assert!(matches!(
        synthesize_noisy(&p, 101, 500.0, -0.1, 7),
        Err(AfmsError::InvalidParams(_))
    ));
}

#[test]
fn block_indexing_is_centered() {
    let block = SignalBlock::from_samples(vec![1.0, 2.0, 3.0], 500.0).unwrap();
    assert_eq!(block.center_offset, 1);
    assert_eq!(block.n_of(0), -1);
    assert_eq!(block.n_of(2), 1);
    assert_eq!(block.centered_indices(), vec![-1.0, 0.0, 1.0]);
    assert!(matches!(
        SignalBlock::from_samples(vec![], 500.0),
        Err(AfmsError::EmptyInput(_))
    ));
}

#[test]
fn ensemble_acf_is_stationary_without_modulation() {
    // For a random-phase cosine, E{x[n]x[n+l]} = (A^2/2)·cos(ω_c l) at every n.
    let p = pure_cosine(1.0, 0.5, 0.0);
    let want = 0.5 * 1.5f64.cos();
    for n in [0, 7, 20] {
        let (mean, stderr) = ensemble_acf_stats(&p, n, 3, 100_000, 11).unwrap();
        assert!(
            (mean - want).abs() < 3.0 * stderr,
            "n = {n}: estimate {mean} vs {want} exceeds 3 standard errors ({stderr:e})"
        );
    }
}

#[test]
fn ensemble_acf_zero_lag_is_positive() {
    let p = pure_cosine(1.0, 0.5, 0.0);
    assert!(ensemble_acf(&p, 0, 0, 10_000, 3).unwrap() > 0.0);
}

#[test]
fn ensemble_acf_detects_nonstationarity_with_am() {
    let p = example_params();
    let (r0, se0) = ensemble_acf_stats(&p, 0, 5, 100_000, 21).unwrap();
    let (r40, se40) = ensemble_acf_stats(&p, 40, 5, 100_000, 22).unwrap();
    let pooled = (se0 * se0 + se40 * se40).sqrt();
    assert!(
        (r0 - r40).abs() > 5.0 * pooled,
        "r[0,5] = {r0}, r[40,5] = {r40}, pooled SE {pooled:e}"
    );
}

#[test]
fn ensemble_acf_rejects_zero_draws_and_bad_params() {
    let p = pure_cosine(1.0, 0.5, 0.0);
    assert!(matches!(
        ensemble_acf(&p, 0, 3, 0, 1),
        Err(AfmsError::InvalidParams(_))
    ));
    let bad = AfmsParams { a: -1.0, ..p };
    assert!(matches!(
        ensemble_acf(&bad, 0, 3, 100, 1),
        Err(AfmsError::InvalidParams(_))
    ));
}

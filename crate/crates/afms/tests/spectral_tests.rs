//! Tests for the modified covariance LP fit, PEF root extraction, and the
//! spectrum evaluators.

use afms::model::synthesize;
use afms::spectral::{
    dft_magnitude, dft_magnitude_of, lp_spectrum, modcov_fit, pef_roots, LpModel,
};
use afms::{AfmsError, AfmsParams};

fn cosine_sequence(omega: f64, phase: f64, n: usize) -> Vec<f64> {
    (0..n).map(|t| (omega * t as f64 + phase).cos()).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[test]
fn cosine_satisfies_order_two_recursion() {
    // x[n] = cos(0.7 n) obeys x[n] = 2cos(0.7)·x[n−1] − x[n−2] exactly.
    let model = modcov_fit(&cosine_sequence(0.7, 0.0, 64), 2).unwrap();
    assert_eq!(model.order, 2);
    assert!((model.coefficients[0] + 2.0 * 0.7f64.cos()).abs() < 1e-9);
    assert!((model.coefficients[1] - 1.0).abs() < 1e-9);
    assert!(model.residual_power < 1e-20);
    assert!(!model.degenerate);

    let roots = pef_roots(&model);
    assert_eq!(roots.len(), 1, "conjugate pair collapses to one entry");
    let (freq, radius) = roots[0];
    assert!((freq - 0.7).abs() < 1e-9);
    assert!((radius - 1.0).abs() < 1e-9);
}

#[test]
fn constant_sequence_is_an_exact_order_one_recursion() {
    let model = modcov_fit(&vec![3.0; 32], 1).unwrap();
    assert!((model.coefficients[0] + 1.0).abs() < 1e-12);
    assert!(model.residual_power < 1e-25);
    let roots = pef_roots(&model);
    assert_eq!(roots.len(), 1);
    assert!(roots[0].0.abs() < 1e-12);
    assert!((roots[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn two_sinusoids_recovered_to_machine_grade() {
    let x: Vec<f64> = (0..64)
        .map(|t| {
            let t = t as f64;
            (0.5 * t + 0.3).cos() + 0.8 * (1.1 * t - 0.2).cos()
        })
        .collect();
    let model = modcov_fit(&x, 4).unwrap();
    let roots = pef_roots(&model);
    assert_eq!(roots.len(), 2);
    let mut freqs: Vec<f64> = roots.iter().map(|r| r.0).collect();
    freqs.sort_by(f64::total_cmp);
    assert!((freqs[0] - 0.5).abs() < 1e-6, "got {freqs:?}");
    assert!((freqs[1] - 1.1).abs() < 1e-6, "got {freqs:?}");
    for &(_, radius) in &roots {
        assert!((radius - 1.0).abs() < 1e-6);
    }
}

#[test]
fn modcov_rejects_bad_order_and_short_data() {
    assert!(matches!(
        modcov_fit(&[1.0, 2.0, 3.0], 0),
        Err(AfmsError::InvalidParams(_))
    ));
    // n = p leaves no error rows at all.
    assert!(matches!(
        modcov_fit(&[1.0, 2.0, 3.0, 4.0], 4),
        Err(AfmsError::InsufficientData(_))
    ));
    // 2(n − p) < p leaves an underdetermined system.
    assert!(matches!(
        modcov_fit(&cosine_sequence(0.7, 0.0, 5), 4),
        Err(AfmsError::InsufficientData(_))
    ));
}

#[test]
fn degenerate_normal_equations_are_flagged() {
    let model = modcov_fit(&vec![0.0; 16], 2).unwrap();
    assert!(model.degenerate);
    assert_eq!(model.coefficients.len(), 2);
}

#[test]
fn coefficients_are_scale_invariant() {
    let x: Vec<f64> = (0..64)
        .map(|t| {
            let t = t as f64;
            (0.5 * t + 0.3).cos() + 0.8 * (1.1 * t - 0.2).cos()
        })
        .collect();
    let scaled: Vec<f64> = x.iter().map(|v| 37.5 * v).collect();
    let m1 = modcov_fit(&x, 4).unwrap();
    let m2 = modcov_fit(&scaled, 4).unwrap();
    for (a, b) in m1.coefficients.iter().zip(&m2.coefficients) {
        assert!((a - b).abs() < 1e-9, "coefficients moved under scaling");
    }
}

#[test]
fn lp_spectrum_peaks_at_the_root() {
    let model = modcov_fit(&cosine_sequence(0.7, 0.0, 64), 2).unwrap();
    let spec = lp_spectrum(&model, 4096).unwrap();
    assert_eq!(spec.grid.len(), 4096);
    assert_eq!(spec.grid[0], 0.0);
    assert!((spec.grid[4095] - std::f64::consts::PI).abs() < 1e-12);
    let peak = argmax(&spec.magnitude);
    assert!((spec.grid[peak] - 0.7).abs() <= spec.step());
}

#[test]
fn lp_spectrum_flat_model_is_constant() {
    let model = LpModel {
        order: 2,
        coefficients: vec![0.0, 0.0],
        residual_power: 1.0,
        degenerate: false,
    };
    let spec = lp_spectrum(&model, 512).unwrap();
    for &m in &spec.magnitude {
        assert!((m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lp_spectrum_zero_residual_keeps_peak_locations() {
    let model = LpModel {
        order: 2,
        coefficients: vec![-2.0 * 0.7f64.cos(), 1.0],
        residual_power: 0.0,
        degenerate: false,
    };
    let spec = lp_spectrum(&model, 4096).unwrap();
    assert!(spec.magnitude.iter().all(|m| m.is_finite()));
    let peak = argmax(&spec.magnitude);
    assert!((spec.grid[peak] - 0.7).abs() <= spec.step());
    assert!(matches!(
        lp_spectrum(&model, 1),
        Err(AfmsError::InvalidParams(_))
    ));
}

#[test]
fn lp_spectrum_two_sinusoid_model_has_two_peaks() {
    let x: Vec<f64> = (0..64)
        .map(|t| {
            let t = t as f64;
            (0.5 * t + 0.3).cos() + 0.8 * (1.1 * t - 0.2).cos()
        })
        .collect();
    let model = modcov_fit(&x, 4).unwrap();
    let spec = lp_spectrum(&model, 8192).unwrap();
    // Local maxima of the magnitude grid.
    let mut maxima = Vec::new();
    for i in 1..spec.magnitude.len() - 1 {
        if spec.magnitude[i] > spec.magnitude[i - 1] && spec.magnitude[i] >= spec.magnitude[i + 1] {
            maxima.push(spec.grid[i]);
        }
    }
    assert!(
        maxima.iter().any(|&w| (w - 0.5).abs() < 0.01),
        "no local maximum near 0.5 in {maxima:?}"
    );
    assert!(
        maxima.iter().any(|&w| (w - 1.1).abs() < 0.01),
        "no local maximum near 1.1 in {maxima:?}"
    );
}

#[test]
fn dft_of_pure_cosine_peaks_at_carrier() {
    // At 41 samples the window-image interference shifts the apparent peak
    // by a phase-dependent amount (several bins at unfavorable phases);
    // θ = 0.7 keeps it inside one bin.
    let params = AfmsParams {
        a: 1.0,
        omega_c: 0.45,
        theta: 0.7,
        k_f: 0.0,
        omega_f: 0.008,
        k_a: 0.0,
        omega_a: 0.06,
        theta_a: 0.0,
        theta_b: 0.0,
        s: 1.0,
        r: -1.0,
    };
    let block = synthesize(&params, 41, 500.0).unwrap();
    let spec = dft_magnitude(&block, 4096).unwrap();
    let peak = argmax(&spec.magnitude);
    assert!((spec.grid[peak] - 0.45).abs() <= spec.step());
}

#[test]
fn dft_of_afms_block_shows_three_clusters() {
    let params = AfmsParams {
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
    };
    let block = synthesize(&params, 201, 500.0).unwrap();
    let spec = dft_magnitude(&block, 8192).unwrap();
    let step = spec.step();
    let peak = spec.magnitude.iter().fold(0.0f64, |a, &b| a.max(b));
    let near = |w: f64| -> f64 {
        let lo = ((w - 3.0 * step) / step).floor().max(0.0) as usize;
        let hi = (((w + 3.0 * step) / step).ceil() as usize).min(spec.grid.len() - 1);
        spec.magnitude[lo..=hi].iter().fold(0.0f64, |a, &b| a.max(b))
    };
    for w in [0.24, 0.30, 0.36] {
        assert!(near(w) > 0.05 * peak, "no cluster mass near {w}");
    }
    // The carrier dominates.
    assert!((spec.grid[argmax(&spec.magnitude)] - 0.30).abs() < 0.02);
}

#[test]
fn dft_validation_and_zero_input() {
    assert!(matches!(
        dft_magnitude_of(&[1.0; 64], 32),
        Err(AfmsError::InvalidLength(_))
    ));
    assert!(matches!(
        dft_magnitude_of(&[], 0),
        Err(AfmsError::InvalidLength(_))
    ));
    let spec = dft_magnitude_of(&[0.0; 41], 1024).unwrap();
    assert!(spec.magnitude.iter().all(|&m| m == 0.0));
}

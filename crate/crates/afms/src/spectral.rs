//! Linear-prediction fitting (modified covariance), prediction-error-filter
//! roots, and spectrum evaluation.

use crate::error::{AfmsError, Result};
use crate::model::SignalBlock;
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

/// Linear-prediction model `x̂[n] = -Σ a[i]·x[n-i]` of given order.
#[derive(Clone, Debug)]
pub struct LpModel {
    pub order: usize,
    /// `a[1..p]` stored as `coefficients[0..p-1]`.
    pub coefficients: Vec<f64>,
    /// Mean squared forward+backward prediction error.
    pub residual_power: f64,
    /// Set when the normal equations were rank-deficient and the coefficients
    /// are the minimum-norm least-squares solution.
    pub degenerate: bool,
}

/// A magnitude spectrum on an increasing angular-frequency grid over `[0, π]`.
#[derive(Clone, Debug)]
pub struct SpectrumEstimate {
    pub grid: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl SpectrumEstimate {
    /// Grid step (uniform grids only).
    pub fn step(&self) -> f64 {
        if self.grid.len() >= 2 {
            self.grid[1] - self.grid[0]
        } else {
            0.0
        }
    }

    /// Linear interpolation of the magnitude at angular frequency `w`,
    /// clamped to the grid ends.
    pub fn interp(&self, w: f64) -> f64 {
        let g = &self.grid;
        let m = &self.magnitude;
        if w <= g[0] {
            return m[0];
        }
        if w >= g[g.len() - 1] {
            return m[m.len() - 1];
        }
        let i = match g.binary_search_by(|v| v.partial_cmp(&w).unwrap()) {
            Ok(i) => return m[i],
            Err(i) => i,
        };
        let t = (w - g[i - 1]) / (g[i] - g[i - 1]);
        m[i - 1] + t * (m[i] - m[i - 1])
    }
}

/// Fits a linear-prediction model by the modified covariance method: the
/// coefficients minimize the summed squared forward and backward prediction
/// errors over the valid index range (no windowing of the data ends).
///
/// Rank-deficient systems are solved in the minimum-norm least-squares sense
/// and flagged `degenerate`.
pub fn modcov_fit(sequence: &[f64], order: usize) -> Result<LpModel> {
    let n = sequence.len();
    let p = order;
    if p == 0 {
        return Err(AfmsError::InvalidParams("LP order must be >= 1".into()));
    }
    if n <= p || 2 * (n - p) < p {
        return Err(AfmsError::InsufficientData(format!(
            "modified covariance needs 2(N - p) >= p; N = {n}, p = {p}"
        )));
    }
    let rows = 2 * (n - p);
    let mut design = DMatrix::<f64>::zeros(rows, p);
    let mut rhs = DVector::<f64>::zeros(rows);
    // Forward error rows: predict x[t] from x[t-1] .. x[t-p].
    for (r, t) in (p..n).enumerate() {
        for i in 0..p {
            design[(r, i)] = sequence[t - 1 - i];
        }
        rhs[r] = sequence[t];
    }
    // Backward error rows: predict x[t] from x[t+1] .. x[t+p].
    let base = n - p;
    for (r, t) in (0..n - p).enumerate() {
        for i in 0..p {
            design[(base + r, i)] = sequence[t + 1 + i];
        }
        rhs[base + r] = sequence[t];
    }
    // Minimize ||D a + b||² => solve D a = -b by SVD (minimum-norm on rank
    // deficiency).
    let svd = design.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = sv_max * f64::EPSILON * rows.max(p) as f64;
    let a = svd
        .solve(&(-&rhs), eps)
        .map_err(|e| AfmsError::InsufficientData(format!("modcov solve: {e}")))?;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let resid = &design * &a + &rhs;
    let residual_power = resid.norm_squared() / rows as f64;
    Ok(LpModel {
        order: p,
        coefficients: a.iter().cloned().collect(),
        residual_power,
        degenerate: rank < p,
    })
}

/// Roots of the prediction error filter `1 + Σ a[i] z^{-i}`, computed via the
/// companion-matrix eigenproblem. Conjugate pairs are collapsed to one entry
/// `(frequency = |angle|, radius = |z|)`; sorted by descending radius.
///
/// Exact trailing zero coefficients are deflated to roots at `z = 0` before
/// the eigensolve: the all-zero coefficient vector of a degenerate fit would
/// otherwise hand the QR iteration a nilpotent companion matrix, on which
/// every shift vanishes and the iteration cycles without converging. The
/// remaining eigensolve runs under an iteration cap; on the (pathological)
/// non-converged case the deflated zero roots alone are returned.
pub fn pef_roots(model: &LpModel) -> Vec<(f64, f64)> {
    let a = &model.coefficients;
    let q = a.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    let mut out: Vec<(f64, f64)> = vec![(0.0, 0.0); model.order - q];
    if q > 0 {
        // Companion matrix of the deflated z^q + a1 z^{q-1} + ... + aq.
        let mut c = DMatrix::<f64>::zeros(q, q);
        for i in 0..q {
            c[(0, i)] = -a[i];
        }
        for i in 1..q {
            c[(i, i - 1)] = 1.0;
        }
        if let Some(schur) = Schur::try_new(c, f64::EPSILON, 200 * q.max(8)) {
            out.extend(
                schur
                    .complex_eigenvalues()
                    .iter()
                    .filter(|z| z.im >= -1e-14)
                    .map(|z| (z.arg().abs(), z.norm())),
            );
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    out
}

/// Evaluates the LP model spectrum
/// `sqrt(residual_power) / |1 + Σ a[m] e^{-jωm}|` on a uniform grid over
/// `[0, π]`. A unit numerator is substituted when `residual_power` is zero so
/// peak locations remain meaningful.
pub fn lp_spectrum(model: &LpModel, grid_size: usize) -> Result<SpectrumEstimate> {
    if grid_size < 2 {
        return Err(AfmsError::InvalidParams("grid_size must be >= 2".into()));
    }
    let num = if model.residual_power == 0.0 {
        1.0
    } else {
        model.residual_power.sqrt()
    };
    let mut grid = Vec::with_capacity(grid_size);
    let mut magnitude = Vec::with_capacity(grid_size);
    for i in 0..grid_size {
        let w = PI * i as f64 / (grid_size - 1) as f64;
        let mut den = Complex64::new(1.0, 0.0);
        for (m, &am) in model.coefficients.iter().enumerate() {
            let ph = -(w * (m + 1) as f64);
            den += am * Complex64::new(ph.cos(), ph.sin());
        }
        grid.push(w);
        magnitude.push(num / den.norm().max(1e-300));
    }
    Ok(SpectrumEstimate { grid, magnitude })
}

/// Magnitude of the zero-padded DFT on the nonnegative-frequency half grid
/// `ω_i = 2πi/pad <= π`.
pub fn dft_magnitude(block: &SignalBlock, zero_pad_to: usize) -> Result<SpectrumEstimate> {
    dft_magnitude_of(&block.samples, zero_pad_to)
}

/// [`dft_magnitude`] on a raw sample slice.
pub fn dft_magnitude_of(samples: &[f64], zero_pad_to: usize) -> Result<SpectrumEstimate> {
    if zero_pad_to < samples.len() {
        return Err(AfmsError::InvalidLength(format!(
            "zero_pad_to = {} is below the record length {}",
            zero_pad_to,
            samples.len()
        )));
    }
    if zero_pad_to == 0 {
        return Err(AfmsError::InvalidLength("zero_pad_to must be positive".into()));
    }
    let mut buf: Vec<Complex64> = samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)).take(zero_pad_to - samples.len()))
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(zero_pad_to);
    fft.process(&mut buf);
    let mut grid = Vec::new();
    let mut magnitude = Vec::new();
    for (i, z) in buf.iter().enumerate() {
        let w = TWO_PI * i as f64 / zero_pad_to as f64;
        if w > PI + 1e-12 {
            break;
        }
        grid.push(w);
        magnitude.push(z.norm());
    }
    Ok(SpectrumEstimate { grid, magnitude })
}

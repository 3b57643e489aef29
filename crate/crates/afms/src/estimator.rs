//! Parameter estimation from a single sampled record.
//!
//! The pipeline: product function → mean removal → modified-covariance
//! linear prediction → prediction-error-filter roots → line-magnitude fit →
//! cluster grouping → symmetry-scored cluster centers → center-frequency
//! derivation → frequency polish → least-squares complex amplitudes →
//! Bessel-ratio inversion of `k_f` → parameter recovery → regeneration.

use crate::bessel::{bessel_j, BesselRatioTable};
use crate::error::{AfmsError, Result};
use crate::model::{AfmsParams, SignalBlock};
use crate::pf::product_function;
use crate::spectral::{dft_magnitude_of, modcov_fit, pef_roots, SpectrumEstimate};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

const TWO_PI: f64 = 2.0 * PI;

/// Condition estimate above which an amplitude solve is flagged degenerate.
const ILL_CONDITION: f64 = 1e8;
/// The `(0,2)` Bessel ratio participates only when the `m = 2` term is at
/// least this fraction of the `m = 0` term.
const KF_RATIO_GATE: f64 = 2e-2;
/// Relative threshold below which a solved term counts as numerically zero.
const TERM_NEGLIGIBLE: f64 = 1e-12;
/// Relative threshold below which a sideband amplitude counts as absent.
const SIDEBAND_NEGLIGIBLE: f64 = 1e-9;
/// Nominal `ω_a/ω_f` ratio used when the line spacing is unresolvable.
const OMEGA_F_NOMINAL_RATIO: f64 = 4.84;
/// Truncation used during the frequency polish.
const POLISH_M: i32 = 2;
/// Step schedule of the per-coordinate parabolic frequency polish.
const POLISH_SCHED: [f64; 6] = [2e-3, 2e-3, 1e-3, 3e-4, 1e-4, 3e-5];
/// Local grid-search stages `(span, step)` for short blocks.
const LOCAL_STAGES: [(f64, f64); 2] = [(6e-3, 6e-4), (6e-4, 6e-5)];
/// Wide grid-search stages for the short-block rescue.
const WIDE_STAGES: [(f64, f64); 2] = [(3.2e-2, 8e-4), (8e-4, 8e-5)];
/// Assumed carrier/AM frequency ratio seeding the short-block rescue.
const RESCUE_WC_WA_RATIO: f64 = 2.7;
/// A rescue fit is accepted only below this regeneration error.
const RESCUE_ACCEPT_NRMSE: f64 = 0.10;
/// Blocks shorter than this use the short-block estimation path.
const SHORT_BLOCK_LEN: usize = 101;

/// Wraps a phase to `(-π, π]`.
pub fn wrap_phase(ph: f64) -> f64 {
    let w = (ph + PI).rem_euclid(TWO_PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Normalized root-mean-square error of `regenerated` against `original`.
pub fn nrmse(original: &[f64], regenerated: &[f64]) -> f64 {
    let num: f64 = original
        .iter()
        .zip(regenerated)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = original.iter().map(|a| a * a).sum();
    let n = original.len() as f64;
    (num / n).sqrt() / (den / n).sqrt()
}

/// Median with the even-count convention of averaging the two middle order
/// statistics.
fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn ratio_table() -> &'static BesselRatioTable {
    static TABLE: OnceLock<BesselRatioTable> = OnceLock::new();
    TABLE.get_or_init(BesselRatioTable::standard)
}

/// A run of adjacent spectral lines.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// `(frequency rad/sample, magnitude)` sorted by ascending frequency.
    pub lines: Vec<(f64, f64)>,
    /// Symmetry-scored center, set by [`cluster_center`].
    pub center: Option<f64>,
}

impl Cluster {
    /// Energy-weighted center of mass; squared magnitudes de-emphasize
    /// fringe lines.
    pub fn center_of_mass(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(f, m) in &self.lines {
            let w = m * m;
            num += f * w;
            den += w;
        }
        num / den
    }

    /// Strongest line magnitude in the cluster.
    pub fn max_magnitude(&self) -> f64 {
        self.lines.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Splits lines into maximal runs whose consecutive frequency differences do
/// not exceed `gap`; clusters come back sorted by ascending center of mass.
pub fn group_clusters(lines: &[(f64, f64)], gap: f64) -> Result<Vec<Cluster>> {
    if lines.is_empty() {
        return Err(AfmsError::EmptyInput("line list".into()));
    }
    if !(gap > 0.0) {
        return Err(AfmsError::InvalidParams(format!(
            "cluster gap must be positive, got {gap}"
        )));
    }
    let mut sorted = lines.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut clusters = Vec::new();
    let mut cur = vec![sorted[0]];
    for &ln in &sorted[1..] {
        if ln.0 - cur.last().unwrap().0 > gap {
            clusters.push(Cluster {
                lines: std::mem::take(&mut cur),
                center: None,
            });
        }
        cur.push(ln);
    }
    clusters.push(Cluster {
        lines: cur,
        center: None,
    });
    Ok(clusters)
}

/// Locates a cluster's center by spectrum symmetry: among candidate positions
/// (the cluster's line frequencies plus the grid points between its extreme
/// lines), picks the `c` maximizing
/// `score(c) = -Σ |mag(c+u) - mag(c-u)|·Δu` over a window of half-width
/// `half_width`. Sets the cluster's `center` field and returns the value.
pub fn cluster_center(
    cluster: &mut Cluster,
    spectrum: &SpectrumEstimate,
    half_width: f64,
) -> Result<f64> {
    if cluster.lines.is_empty() {
        return Err(AfmsError::EmptyInput("cluster".into()));
    }
    let lo = cluster.lines[0].0;
    let hi = cluster.lines[cluster.lines.len() - 1].0;
    let g = &spectrum.grid;
    if g.len() < 2 || g[0] > lo || g[g.len() - 1] < hi {
        return Err(AfmsError::InvalidParams(
            "spectrum does not cover the cluster span".into(),
        ));
    }
    if cluster.lines.len() == 1 {
        cluster.center = Some(lo);
        return Ok(lo);
    }
    let step = spectrum.step();
    let mut cands: Vec<f64> = cluster.lines.iter().map(|l| l.0).collect();
    cands.extend(g.iter().cloned().filter(|&gp| lo < gp && gp < hi));
    let noff = ((half_width / step).round() as i64).max(2) as usize;
    let mut best_c = cands[0];
    let mut best_s = f64::NEG_INFINITY;
    for &c in &cands {
        let mut acc = 0.0;
        for i in 1..=noff {
            let off = step * i as f64;
            acc += (spectrum.interp(c + off) - spectrum.interp(c - off)).abs();
        }
        let score = -acc * step;
        if score > best_s {
            best_s = score;
            best_c = c;
        }
    }
    cluster.center = Some(best_c);
    Ok(best_c)
}

/// Derives `(ω_c, ω_a)` from the two highest product-function cluster
/// centers, which sit at `2ω_c + 2ω_a` and `2ω_c + ω_a`.
pub fn derive_center_frequencies(c_top: f64, c_second: f64) -> Result<(f64, f64)> {
    if !(c_top > c_second && c_second > 0.0) {
        return Err(AfmsError::InvalidParams(format!(
            "cluster centers must satisfy c_top > c_second > 0, got ({c_top}, {c_second})"
        )));
    }
    let omega_a = c_top - c_second;
    let omega_c = (2.0 * c_second - c_top) / 2.0;
    if omega_a <= 0.0 || omega_c <= 0.0 {
        return Err(AfmsError::InvalidParams(format!(
            "derived non-positive center frequency (omega_c = {omega_c}, omega_a = {omega_a}); \
             cluster misidentification"
        )));
    }
    Ok((omega_c, omega_a))
}

/// Mean separation of adjacent lines in a cluster, after discarding
/// separations more than 1.5× the median (guard against missed lines).
pub fn estimate_omega_f(cluster: &Cluster) -> Result<f64> {
    if cluster.lines.len() < 2 {
        return Err(AfmsError::InsufficientData(
            "omega_f estimation needs a cluster with at least two lines".into(),
        ));
    }
    let mut f: Vec<f64> = cluster.lines.iter().map(|l| l.0).collect();
    f.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
    // Lower median: with an even separation count, averaging the middle two
    // would let a single missed-line gap inflate the guard threshold past
    // itself; the lower middle keeps the guard anchored to the true spacing.
    let mut ds = d.clone();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = ds[(ds.len() - 1) / 2];
    let keep: Vec<f64> = d.into_iter().filter(|&x| x <= 1.5 * med).collect();
    Ok(keep.iter().sum::<f64>() / keep.len() as f64)
}

/// Least-squares estimates of the Bessel-weighted terms `A_ci·J_m(k_f)` of
/// the three component groups (carrier, upper sideband, lower sideband).
#[derive(Clone, Debug)]
pub struct ComplexAmplitudes {
    /// Design truncation `M` (`m ∈ [-M, M]`).
    pub m: i32,
    /// Terms indexed `[group][m + M]`, flattened group-major.
    terms: Vec<Complex64>,
    /// Euclidean residual of the least-squares solve.
    pub residual_norm: f64,
    /// Condition estimate (σ_max/σ_min) of the design matrix.
    pub condition: f64,
    /// Set when the condition estimate exceeds the degeneracy threshold.
    pub degenerate: bool,
}

impl ComplexAmplitudes {
    /// Term `A_c{group}·J_m(k_f)`; zero outside the solved range. Groups are
    /// 0 = carrier, 1 = upper sideband, 2 = lower sideband.
    pub fn term(&self, group: usize, m: i32) -> Complex64 {
        if group >= 3 || m.abs() > self.m {
            return Complex64::new(0.0, 0.0);
        }
        self.terms[group * (2 * self.m as usize + 1) + (m + self.m) as usize]
    }

    /// Builds the exact term set a parameter vector with analytic amplitudes
    /// `a_c = (A_c1, A_c3, A_c5)` and FM index `k_f` produces:
    /// `T[g, m] = A_c{g}·J_m(k_f)` for `m ∈ [-M, M]`. The forward companion
    /// of the least-squares estimate, for simulation and oracle use.
    pub fn from_analytic(a_c: [Complex64; 3], k_f: f64, m_trunc: i32) -> Result<Self> {
        if m_trunc < 0 {
            return Err(AfmsError::InvalidParams(
                "design truncation M must be nonnegative".into(),
            ));
        }
        let terms_per_group = (2 * m_trunc + 1) as usize;
        let mut terms = Vec::with_capacity(3 * terms_per_group);
        for &amp in &a_c {
            for mm in -m_trunc..=m_trunc {
                terms.push(amp * bessel_j(mm, k_f)?);
            }
        }
        Ok(ComplexAmplitudes {
            m: m_trunc,
            terms,
            residual_norm: 0.0,
            condition: 1.0,
            degenerate: false,
        })
    }

    /// The analytic amplitudes `(A_c1, A_c3, A_c5)`: the `m = 0` terms
    /// divided by `J_0(k_f)`. Their conjugate partners are not free.
    pub fn analytic_amplitudes(&self, k_f: f64) -> Result<[Complex64; 3]> {
        let j0 = bessel_j(0, k_f)?;
        if j0 == 0.0 {
            return Err(AfmsError::Inversion(
                "J_0(k_f) vanishes; analytic amplitudes are indeterminate".into(),
            ));
        }
        Ok([
            self.term(0, 0) / j0,
            self.term(1, 0) / j0,
            self.term(2, 0) / j0,
        ])
    }
}

/// Least-squares solve of the line model
/// `x[k] = 2·Re{ Σ_g Σ_m T[g,m] e^{j(ω_g + m·ω_f)k} }` at the given group
/// frequencies. The design is built in the real field with conjugate symmetry
/// imposed: each complex unknown contributes a `2cos` and a `-2sin` column.
fn solve_groups(
    x: &[f64],
    k: &[f64],
    groups: [f64; 3],
    omega_f: f64,
    m_trunc: i32,
) -> Result<ComplexAmplitudes> {
    let n = x.len();
    let terms_per_group = (2 * m_trunc + 1) as usize;
    let unknowns = 2 * 3 * terms_per_group;
    if n < unknowns {
        return Err(AfmsError::InsufficientData(format!(
            "amplitude solve needs at least {unknowns} samples for M = {m_trunc}, got {n}"
        )));
    }
    let mut design = DMatrix::<f64>::zeros(n, unknowns);
    let mut col = 0usize;
    for &wg in groups.iter() {
        for mm in -m_trunc..=m_trunc {
            let w = wg + mm as f64 * omega_f;
            for (row, &t) in k.iter().enumerate() {
                let ph = w * t;
                design[(row, col)] = 2.0 * ph.cos();
                design[(row, col + 1)] = -2.0 * ph.sin();
            }
            col += 2;
        }
    }
    let rhs = DVector::from_column_slice(x);
    let svd = design.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let sv_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let eps = sv_max * f64::EPSILON * n.max(unknowns) as f64;
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| AfmsError::InsufficientData(format!("amplitude solve: {e}")))?;
    let residual_norm = (&design * &sol - &rhs).norm();
    let condition = if sv_min > 0.0 {
        sv_max / sv_min
    } else {
        f64::INFINITY
    };
    let terms = (0..3 * terms_per_group)
        .map(|j| Complex64::new(sol[2 * j], sol[2 * j + 1]))
        .collect();
    Ok(ComplexAmplitudes {
        m: m_trunc,
        terms,
        residual_norm,
        condition,
        degenerate: condition > ILL_CONDITION,
    })
}

/// [`solve_groups`] at the model's group frequencies
/// `(ω_c, ω_c+ω_a, ω_c−ω_a)` for a centered block.
pub fn solve_amplitudes(
    block: &SignalBlock,
    omega_c: f64,
    omega_a: f64,
    omega_f: f64,
    m_trunc: i32,
) -> Result<ComplexAmplitudes> {
    if m_trunc < 0 {
        return Err(AfmsError::InvalidParams(
            "design truncation M must be nonnegative".into(),
        ));
    }
    let k = block.centered_indices();
    solve_groups(
        &block.samples,
        &k,
        [omega_c, omega_c + omega_a, omega_c - omega_a],
        omega_f,
        m_trunc,
    )
}

/// Largest truncation `M ≤ min(target, cap)` for which every pair of design
/// columns keeps at least 0.75 line-spacings of clearance (`ca = ω_a/ω_f`);
/// never below 2 so the `m = 2` ratio term exists.
fn safe_m(target: i32, ca: f64, cap: i32) -> i32 {
    const GROUP_OFFSETS: [i32; 3] = [0, 1, -1];
    let start = target.min(cap).max(1);
    for m_try in (1..=start).rev() {
        let mut ok = true;
        'pairs: for g in 0..3usize {
            for m in -m_try..=m_try {
                for g2 in 0..3usize {
                    for m2 in -m_try..=m_try {
                        if (g, m) >= (g2, m2) {
                            continue;
                        }
                        let dg = GROUP_OFFSETS[g] - GROUP_OFFSETS[g2];
                        if (dg as f64 * ca + (m - m2) as f64).abs() < 0.75 {
                            ok = false;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if ok {
            return m_try.max(2);
        }
    }
    2
}

/// Signed magnitude ratio `|num|/|den|`, negative when the two terms are
/// phase-opposed.
fn signed_ratio(num: Complex64, den: Complex64) -> f64 {
    let sign = if (num * den.conj()).re >= 0.0 { 1.0 } else { -1.0 };
    sign * num.norm() / den.norm()
}

/// Estimates `k_f` from the carrier group's `m = 0, 1, 2` terms via
/// Bessel-ratio inversion. See [`estimate_kf_detailed`].
pub fn estimate_kf(amps: &ComplexAmplitudes) -> Result<f64> {
    Ok(estimate_kf_detailed(amps, ratio_table())?.0)
}

/// [`estimate_kf`] with an explicit table, also returning the attained
/// inversion objective (the residual reported in fit diagnostics).
///
/// The `(0,1)` ratio always participates; `(0,2)` joins when the `m = 2` term
/// is large enough to be meaningful. All sideline terms negligible against
/// the carrier means `k_f = 0` (`J_m(0) = 0` for `m ≠ 0`). A vanishing
/// `m = 0` term (`k_f` near a `J_0` zero) falls back to the `(1,2)` ratio;
/// the all-degenerate case is rejected.
pub fn estimate_kf_detailed(
    amps: &ComplexAmplitudes,
    table: &BesselRatioTable,
) -> Result<(f64, f64)> {
    let b0 = amps.term(0, 0);
    let b1 = amps.term(0, 1);
    let b2 = amps.term(0, 2);
    let scale = b0.norm().max(b1.norm()).max(b2.norm());
    if scale == 0.0 {
        return Err(AfmsError::Inversion(
            "all carrier Bessel terms vanish".into(),
        ));
    }
    if b0.norm() > TERM_NEGLIGIBLE * scale {
        let mut ratios: Vec<(u32, u32, f64)> = Vec::new();
        if b1.norm() > TERM_NEGLIGIBLE * b0.norm() {
            ratios.push((0, 1, signed_ratio(b0, b1)));
        }
        if b2.norm() >= KF_RATIO_GATE * b0.norm() {
            ratios.push((0, 2, signed_ratio(b0, b2)));
        }
        if ratios.is_empty() {
            return Ok((0.0, 0.0));
        }
        table.invert_kf_detailed(&ratios)
    } else {
        if b1.norm() <= TERM_NEGLIGIBLE * scale || b2.norm() <= TERM_NEGLIGIBLE * scale {
            return Err(AfmsError::Inversion(
                "carrier Bessel terms too degenerate to form any ratio".into(),
            ));
        }
        table.invert_kf_detailed(&[(1, 2, signed_ratio(b1, b2))])
    }
}

/// Recovers the full parameter set from solved amplitudes, `k_f`, and the
/// derived frequencies `(ω_c, ω_a, ω_f)`:
/// `A = 2|A_c1|`, `θ = arg A_c1`, and with `r = -1` fixed,
/// `k_a = 4|A_c5|/A`, `s = |A_c3|/|A_c5|`, `θ_a = arg A_c3 − θ`,
/// `θ_b = θ − θ_a − arg A_c5 − π` (phases wrapped to `(-π, π]`).
///
/// Both sidebands numerically absent means a pure carrier: `k_a = 0` with
/// the indeterminate `s, θ_a, θ_b` reported as identity values. A lower
/// sideband absent while the upper persists is inconsistent with `r = -1`
/// and is rejected.
pub fn recover_parameters(
    amps: &ComplexAmplitudes,
    k_f: f64,
    frequencies: (f64, f64, f64),
) -> Result<AfmsParams> {
    let (omega_c, omega_a, omega_f) = frequencies;
    if !(k_f >= 0.0) {
        return Err(AfmsError::InvalidParams(format!(
            "k_f must be nonnegative, got {k_f}"
        )));
    }
    let [ac1, ac3, ac5] = amps.analytic_amplitudes(k_f)?;
    if ac1.norm() == 0.0 {
        return Err(AfmsError::Inversion(
            "carrier amplitude A_c1 vanishes".into(),
        ));
    }
    let a = 2.0 * ac1.norm();
    let theta = wrap_phase(ac1.arg());
    let tiny = SIDEBAND_NEGLIGIBLE * ac1.norm();
    let (k_a, s, theta_a, theta_b) = if ac5.norm() <= tiny && ac3.norm() <= tiny {
        (0.0, 1.0, 0.0, 0.0)
    } else if ac5.norm() <= tiny {
        return Err(AfmsError::Inversion(
            "lower sideband absent while the upper sideband persists; inconsistent with r = -1"
                .into(),
        ));
    } else {
        let k_a = 4.0 * ac5.norm() / a;
        let s = ac3.norm() / ac5.norm();
        let theta_a = wrap_phase(ac3.arg() - theta);
        let theta_b = wrap_phase(theta - theta_a - ac5.arg() - PI);
        (k_a, s, theta_a, theta_b)
    };
    Ok(AfmsParams {
        a,
        omega_c,
        theta,
        k_f,
        omega_f,
        k_a,
        omega_a,
        theta_a,
        theta_b,
        s,
        r: -1.0,
    })
}

/// Configuration of [`fit_block`]. Every field has a default; partial
/// overrides deserialize cleanly.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Linear-prediction order; defaults to 24 below 101 samples, else 48.
    pub lp_order: Option<usize>,
    /// Minimum prediction-error root radius kept as a line candidate.
    pub root_radius: f64,
    /// Fine clustering gap; when set, replaces the coarse two-pass estimate.
    pub gap_override: Option<f64>,
    /// Design truncation override for the amplitude solves.
    pub m_override: Option<i32>,
    /// Symmetry-window half-width override for cluster centering.
    pub sym_half_width: Option<f64>,
    /// Remove the product-function mean before spectral analysis.
    pub remove_dc: bool,
    /// Lines below this fraction of the strongest line are discarded.
    pub noise_floor: f64,
    /// Zero-padded DFT length for the product-function spectrum.
    pub zero_pad: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lp_order: None,
            root_radius: 0.95,
            gap_override: None,
            m_override: None,
            sym_half_width: None,
            remove_dc: true,
            noise_floor: 1e-5,
            zero_pad: 16384,
        }
    }
}

/// Per-fit diagnostics carried in reports.
#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Linear-prediction order used.
    pub lp_order: usize,
    /// Radii of the prediction-error roots kept as line candidates.
    pub root_radii: Vec<f64>,
    /// Symmetry-scored centers of the two selected clusters (ascending).
    pub cluster_centers: Vec<f64>,
    /// Attained objective of the `k_f` ratio inversion (NaN when unused).
    pub kf_residual: f64,
    /// Condition estimate of the final amplitude solve.
    pub condition: f64,
    /// Design truncation of the final amplitude solve.
    pub design_m: i32,
    /// Set when ω_f came from the nominal ω_a ratio, not measured spacing.
    pub omega_f_nominal: bool,
    /// Set when the short-block wide-search rescue produced the fit.
    pub rescue_used: bool,
}

impl Diagnostics {
    fn new(lp_order: usize) -> Self {
        Diagnostics {
            lp_order,
            root_radii: Vec::new(),
            cluster_centers: Vec::new(),
            kf_residual: f64::NAN,
            condition: f64::NAN,
            design_m: 0,
            omega_f_nominal: false,
            rescue_used: false,
        }
    }
}

/// A completed block fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    /// Estimated parameters (`r` fixed at −1).
    pub params: AfmsParams,
    /// Regeneration of the block from `params` (same length and centering).
    pub regenerated: SignalBlock,
    /// Normalized RMS error of the regeneration.
    pub nrmse: f64,
    pub diagnostics: Diagnostics,
}

fn regenerate(params: &AfmsParams, k: &[f64], template: &SignalBlock) -> SignalBlock {
    SignalBlock {
        samples: k.iter().map(|&t| params.eval(t)).collect(),
        center_offset: template.center_offset,
        sample_rate_hz: template.sample_rate_hz,
    }
}

/// Amplitude-solve residual at trial `(ω_c, ω_a)` with `M = 0` (the grid
/// objective of the short-block search).
fn residual_m0(x: &[f64], k: &[f64], wc: f64, wa: f64) -> f64 {
    solve_groups(x, k, [wc, wc + wa, wc - wa], 1.0, 0)
        .map(|a| a.residual_norm)
        .unwrap_or(f64::INFINITY)
}

/// Staged grid descent of the `M = 0` residual over `(ω_c, ω_a)`.
fn grid_refine(
    x: &[f64],
    k: &[f64],
    mut wc0: f64,
    mut wa0: f64,
    stages: &[(f64, f64)],
) -> (f64, f64) {
    for &(span, step) in stages {
        let npts = (2.0 * span / step).round() as usize + 1;
        let mut best = (wc0, wa0, f64::INFINITY);
        for i in 0..npts {
            let wc = wc0 - span + 2.0 * span * i as f64 / (npts - 1) as f64;
            for j in 0..npts {
                let wa = wa0 - span + 2.0 * span * j as f64 / (npts - 1) as f64;
                if !(0.0 < wa && wa < wc) {
                    continue;
                }
                let r = residual_m0(x, k, wc, wa);
                if r < best.2 {
                    best = (wc, wa, r);
                }
            }
        }
        wc0 = best.0;
        wa0 = best.1;
    }
    (wc0, wa0)
}

/// Short-block recovery at fixed `(ω_c, ω_a)`: the modulation is an
/// unresolvable carrier shift at these lengths, so `k_f` is pinned to 0 and
/// `ω_f` to its nominal ratio; an `M = 0` solve recovers the rest.
fn recover_m0(x: &[f64], k: &[f64], wc: f64, wa: f64) -> Result<(AfmsParams, f64, ComplexAmplitudes)> {
    let wf = wa / OMEGA_F_NOMINAL_RATIO;
    let amps = solve_groups(x, k, [wc, wc + wa, wc - wa], wf, 0)?;
    let params = recover_parameters(&amps, 0.0, (wc, wa, wf))?;
    let reg: Vec<f64> = k.iter().map(|&t| params.eval(t)).collect();
    let nr = nrmse(x, &reg);
    Ok((params, nr, amps))
}

/// Wide-search rescue for short blocks: seed `ω_c` from the record's own DFT
/// peak (the component clusters blend into one hump at these lengths) with an
/// assumed carrier/AM ratio, then descend the grid. Accepted only if the
/// regeneration error clears the acceptance threshold.
fn short_rescue_search(
    x: &[f64],
    k: &[f64],
    pad: usize,
) -> Result<(AfmsParams, f64, ComplexAmplitudes)> {
    let spec = dft_magnitude_of(x, pad)?;
    let mut imax = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (i, &m) in spec.magnitude.iter().enumerate() {
        if m > best {
            best = m;
            imax = i;
        }
    }
    let wc0 = spec.grid[imax];
    let wa0 = wc0 / RESCUE_WC_WA_RATIO;
    let (wc, wa) = grid_refine(x, k, wc0, wa0, &WIDE_STAGES);
    let out = recover_m0(x, k, wc, wa)?;
    if out.1 < RESCUE_ACCEPT_NRMSE {
        Ok(out)
    } else {
        Err(AfmsError::Inversion(
            "rescue fit above the acceptance error".into(),
        ))
    }
}

/// On short blocks, attempts the rescue before surfacing a stage error; long
/// blocks fail directly with the stage name.
fn rescue_or_err(
    block: &SignalBlock,
    k: &[f64],
    pad: usize,
    short: bool,
    diag: &Diagnostics,
    stage: &str,
    detail: String,
) -> Result<FitResult> {
    if short {
        if let Ok((params, nr, amps)) = short_rescue_search(&block.samples, k, pad) {
            let mut d = diag.clone();
            d.rescue_used = true;
            d.condition = amps.condition;
            d.design_m = 0;
            d.omega_f_nominal = true;
            let regenerated = regenerate(&params, k, block);
            return Ok(FitResult {
                params,
                regenerated,
                nrmse: nr,
                diagnostics: d,
            });
        }
    }
    Err(AfmsError::stage(stage, detail))
}

/// Renders a line set as Lorentzian kernels of common width `sigma` on
/// `grid`. Leakage-free and well-sampled, so symmetry scores compare line
/// positions and strengths only.
fn line_spectrum(lines: &[(f64, f64)], grid: &[f64], sigma: f64) -> SpectrumEstimate {
    let mut magnitude = vec![0.0; grid.len()];
    for &(f, m) in lines {
        for (i, &g) in grid.iter().enumerate() {
            let u = (g - f) / sigma;
            magnitude[i] += m / (1.0 + u * u);
        }
    }
    SpectrumEstimate {
        grid: grid.to_vec(),
        magnitude,
    }
}

/// Runs the full estimation pipeline on one odd-length block.
///
/// Stage failures surface as [`AfmsError::Stage`] with the stage name:
/// "root extraction", "root filtering", "cluster grouping",
/// "cluster selection", "frequency derivation", "kf inversion", or
/// "parameter recovery". Blocks shorter than 101 samples take the
/// short-block path (grid descent with `k_f` pinned to 0) and may fall back
/// to a wide-search rescue instead of failing.
pub fn fit_block(block: &SignalBlock, config: &FitConfig) -> Result<FitResult> {
    let n = block.len();
    if n == 0 || n % 2 == 0 {
        return Err(AfmsError::InvalidLength(format!(
            "fit_block requires an odd block length, got {n}"
        )));
    }
    let x = &block.samples;
    let k = block.centered_indices();
    let short = n < SHORT_BLOCK_LEN;
    let order = config
        .lp_order
        .unwrap_or(if short { 24 } else { 48 });
    let pad = config.zero_pad.max(n);
    let mut diag = Diagnostics::new(order);

    // Product function, mean removal, linear prediction.
    let pf = product_function(block)?;
    let mut p = pf.values;
    if config.remove_dc {
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        for v in &mut p {
            *v -= mean;
        }
    }
    let lp = modcov_fit(&p, order)?;
    let mut roots: Vec<(f64, f64)> = pef_roots(&lp)
        .into_iter()
        .filter(|&(f, r)| r >= config.root_radius && f > 1e-6 && f < PI - 1e-6)
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    diag.root_radii = roots.iter().map(|r| r.1).collect();
    if roots.len() < 4 {
        let detail = format!(
            "only {} prediction-error roots in the admissible band",
            roots.len()
        );
        return rescue_or_err(block, &k, pad, short, &diag, "root extraction", detail);
    }

    // True line roots sit much closer to the unit circle than displaced or
    // merged fringe roots; cut adaptively on |1 - radius|.
    let dev: Vec<f64> = roots.iter().map(|&(_, r)| (1.0 - r).abs()).collect();
    let floor = if n >= SHORT_BLOCK_LEN { 1e-3 } else { 6e-2 };
    let cut = (3.0 * median(&dev)).max(floor);
    roots.retain(|&(_, r)| (1.0 - r).abs() <= cut);
    if roots.len() < 4 {
        let detail = format!("only {} roots close enough to the unit circle", roots.len());
        return rescue_or_err(block, &k, pad, short, &diag, "root filtering", detail);
    }
    diag.root_radii = roots.iter().map(|r| r.1).collect();

    let spectrum = dft_magnitude_of(&p, pad)?;

    // Leakage-free line magnitudes: p[k] is even in k, so fit cosines at the
    // root frequencies jointly; each line's energy lands in its own column.
    let f_set: Vec<f64> = roots.iter().map(|r| r.0).collect();
    let mut cos_design = DMatrix::<f64>::zeros(n, f_set.len());
    for (row, &t) in k.iter().enumerate() {
        for (col, &f) in f_set.iter().enumerate() {
            cos_design[(row, col)] = (f * t).cos();
        }
    }
    let rhs = DVector::from_column_slice(&p);
    let svd = cos_design.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = sv_max * f64::EPSILON * n.max(f_set.len()) as f64;
    let alpha = svd
        .solve(&rhs, eps)
        .map_err(|e| AfmsError::InsufficientData(format!("line magnitude solve: {e}")))?;
    let mut lines: Vec<(f64, f64)> = f_set
        .iter()
        .zip(alpha.iter())
        .map(|(&f, &a)| (f, a.abs()))
        .collect();
    // Safety floor only: amplitudes this far down are numerical artifacts.
    // Real dust lines stay in and chain-merge into their parent clusters
    // instead of stranding junk neighbours as separate clusters.
    let peak = lines.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    lines.retain(|l| l.1 >= config.noise_floor * peak);

    // Anchor on the strongest line; if it sits in the low band, jump to the
    // strongest line above 1.6× its frequency (the central cluster). The
    // high band is then a fixed window around the anchor.
    let mut f_star = {
        let mut bi = 0usize;
        let mut bm = f64::NEG_INFINITY;
        for (i, l) in lines.iter().enumerate() {
            if l.1 > bm {
                bm = l.1;
                bi = i;
            }
        }
        lines[bi].0
    };
    {
        let mut best: Option<(f64, f64)> = None;
        for l in &lines {
            if l.0 > 1.6 * f_star && l.1 >= 0.3 * peak {
                match best {
                    Some((_, bm)) if l.1 <= bm => {}
                    _ => best = Some(*l),
                }
            }
        }
        if let Some((bf, _)) = best {
            f_star = bf;
        }
    }
    let high: Vec<(f64, f64)> = lines
        .iter()
        .cloned()
        .filter(|l| 0.48 * f_star < l.0 && l.0 < 2.05 * f_star)
        .collect();
    if high.len() < 2 {
        return rescue_or_err(
            block,
            &k,
            pad,
            short,
            &diag,
            "cluster grouping",
            "high band too sparse".into(),
        );
    }

    // Fine clustering gap: half the separation of the top two coarse cluster
    // centers, the coarse split taken at the first big jump in the sorted
    // consecutive line spacings.
    let gap = if let Some(g) = config.gap_override {
        g
    } else {
        let hf: Vec<f64> = high.iter().map(|l| l.0).collect();
        let mut hdiffs: Vec<f64> = hf.windows(2).map(|w| w[1] - w[0]).collect();
        hdiffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let coarse_gap = if hdiffs.len() >= 2 {
            let dref = hdiffs[hdiffs.len() / 4];
            let mut ib: Option<usize> = None;
            for j in 0..hdiffs.len() - 1 {
                let ratio = hdiffs[j + 1] / hdiffs[j].max(1e-12);
                if ratio > 1.5 && hdiffs[j] >= 0.8 * dref {
                    ib = Some(j);
                    break;
                }
            }
            match ib {
                // Uniform spacing: no within-cluster lines were captured
                // (sidelines unresolvable); every line stands for a cluster.
                None => 0.5 * median(&hdiffs),
                Some(j) => (hdiffs[j] * hdiffs[j + 1]).sqrt(),
            }
        } else {
            0.5 * median(&hdiffs)
        };
        let coarse: Vec<Cluster> = group_clusters(&high, coarse_gap)?
            .into_iter()
            // Same dust rule as the fine pass: an isolated artifact cluster
            // must not become one of the top-two centers that set the gap.
            .filter(|c| c.max_magnitude() >= 2e-3 * peak)
            .collect();
        if coarse.len() < 2 {
            return rescue_or_err(
                block,
                &k,
                pad,
                short,
                &diag,
                "cluster grouping",
                "coarse clustering found fewer than two clusters".into(),
            );
        }
        let mut centers0: Vec<f64> = coarse.iter().map(|c| c.center_of_mass()).collect();
        centers0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (centers0[centers0.len() - 1] - centers0[centers0.len() - 2]) / 2.0
    };

    let clusters: Vec<Cluster> = group_clusters(&high, gap)?
        .into_iter()
        // A genuine cluster contains a line within a couple of orders of
        // magnitude of the strongest; isolated fringe fragments do not.
        .filter(|c| c.max_magnitude() >= 2e-3 * peak)
        .collect();
    let mut centers: Vec<f64> = clusters.iter().map(|c| c.center_of_mass()).collect();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if centers.len() < 2 {
        return rescue_or_err(
            block,
            &k,
            pad,
            short,
            &diag,
            "cluster grouping",
            "only a single cluster in the high band".into(),
        );
    }
    let cgaps: Vec<f64> = centers.windows(2).map(|w| w[1] - w[0]).collect();

    // Low-frequency discard: dc-side clusters sit well below the component
    // comb; the threshold scales with the smallest inter-cluster gap.
    let low_thresh = 3.0 * cgaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi: Vec<Cluster> = clusters
        .into_iter()
        .filter(|c| c.center_of_mass() >= low_thresh)
        .collect();
    if hi.len() < 2 {
        return rescue_or_err(
            block,
            &k,
            pad,
            short,
            &diag,
            "cluster selection",
            "fewer than two clusters above the low-frequency band".into(),
        );
    }
    hi.sort_by(|a, b| {
        a.center_of_mass()
            .partial_cmp(&b.center_of_mass())
            .unwrap()
    });

    // Symmetry spectrum: render the fitted lines with a common narrow kernel.
    let spacing = if lines.len() > 1 {
        let lf: Vec<f64> = lines.iter().map(|l| l.0).collect();
        let d: Vec<f64> = lf.windows(2).map(|w| w[1] - w[0]).collect();
        median(&d)
    } else {
        TWO_PI / n as f64
    };
    let symspec = line_spectrum(&lines, &spectrum.grid, 0.15 * spacing);
    let sym_halfwidth = |cl: &Cluster| -> f64 {
        if let Some(h) = config.sym_half_width {
            return h;
        }
        if cl.lines.len() < 2 {
            return TWO_PI / n as f64;
        }
        let lf: Vec<f64> = cl.lines.iter().map(|l| l.0).collect();
        let d: Vec<f64> = lf.windows(2).map(|w| w[1] - w[0]).collect();
        (lf[lf.len() - 1] - lf[0]) / 2.0 + median(&d)
    };

    let top_i = hi.len() - 1;
    let sec_i = hi.len() - 2;
    let hw_top = sym_halfwidth(&hi[top_i]);
    let hw_sec = sym_halfwidth(&hi[sec_i]);
    let mut c_top = cluster_center(&mut hi[top_i], &symspec, hw_top)
        .map_err(|e| AfmsError::stage("cluster selection", e.to_string()))?;
    let mut c_second = cluster_center(&mut hi[sec_i], &symspec, hw_sec)
        .map_err(|e| AfmsError::stage("cluster selection", e.to_string()))?;

    // Lattice validation: the high-band centers form a uniform comb of
    // spacing ω_a. A cluster captured only through a displaced sideline
    // breaks that by a full line spacing; re-derive its center from the comb.
    let mut ccs: Vec<f64> = hi.iter().map(|c| c.center_of_mass()).collect();
    ccs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdiffs: Vec<f64> = ccs.windows(2).map(|w| w[1] - w[0]).collect();
    if cdiffs.len() >= 3 {
        let wa_lat = median(&cdiffs);
        let anchor = {
            let mut bi = 0usize;
            let mut bm = f64::NEG_INFINITY;
            for (i, c) in hi.iter().enumerate() {
                let m = c.max_magnitude();
                if m > bm {
                    bm = m;
                    bi = i;
                }
            }
            hi[bi].center_of_mass()
        };
        let snap = |c: f64| -> f64 {
            let steps = ((c - anchor) / wa_lat).round();
            let lat = anchor + steps * wa_lat;
            if (c - lat).abs() > 0.12 * wa_lat {
                lat
            } else {
                c
            }
        };
        c_top = snap(c_top);
        c_second = snap(c_second);
        if c_top - c_second < 0.5 * wa_lat {
            c_second = c_top - wa_lat;
        }
    }
    diag.cluster_centers = vec![c_second, c_top];

    let (mut wc, mut wa) = match derive_center_frequencies(c_top, c_second) {
        Ok(v) => v,
        Err(e) => {
            return rescue_or_err(
                block,
                &k,
                pad,
                short,
                &diag,
                "frequency derivation",
                e.to_string(),
            );
        }
    };

    if short {
        // The cluster-derived seed is refined on a local grid; if that basin
        // misses, a wide retry keeps the better of the two.
        let (wc1, wa1) = grid_refine(x, &k, wc, wa, &LOCAL_STAGES);
        let mut cand = recover_m0(x, &k, wc1, wa1);
        let need_wide = match &cand {
            Ok((_, nr, _)) => *nr >= 0.08,
            Err(_) => true,
        };
        if need_wide {
            let (wc2, wa2) = grid_refine(x, &k, wc, wa, &WIDE_STAGES);
            if let Ok(alt) = recover_m0(x, &k, wc2, wa2) {
                let better = match &cand {
                    Ok((_, nr, _)) => alt.1 < *nr,
                    Err(_) => true,
                };
                if better {
                    cand = Ok(alt);
                }
            }
        }
        let (params, nr, amps) =
            cand.map_err(|e| AfmsError::stage("parameter recovery", e.to_string()))?;
        diag.condition = amps.condition;
        diag.design_m = 0;
        diag.omega_f_nominal = true;
        let regenerated = regenerate(&params, &k, block);
        return Ok(FitResult {
            params,
            regenerated,
            nrmse: nr,
            diagnostics: diag,
        });
    }

    // ω_f from the measured line spacing of the cluster nearest 2ω_c (it has
    // the strongest lines); clusters are tried in order of distance.
    let cen_target = 2.0 * wc;
    let mut by_distance: Vec<usize> = (0..hi.len()).collect();
    by_distance.sort_by(|&a, &b| {
        (hi[a].center_of_mass() - cen_target)
            .abs()
            .partial_cmp(&(hi[b].center_of_mass() - cen_target).abs())
            .unwrap()
    });
    let mut wf_meas = None;
    for &ci in &by_distance {
        if hi[ci].lines.len() >= 2 {
            if let Ok(w) = estimate_omega_f(&hi[ci]) {
                if w > 0.0 {
                    wf_meas = Some(w);
                    break;
                }
            }
        }
    }
    let mut wf = match wf_meas {
        Some(w) => w,
        None => {
            // All clusters singleton: the line spacing is unresolvable at
            // this block length; a nominal spacing keeps the design
            // well-conditioned while the sideline columns carry no weight.
            diag.omega_f_nominal = true;
            wa / OMEGA_F_NOMINAL_RATIO
        }
    };

    // Frequency polish: parabolic descent of the amplitude-solve residual,
    // done per component-group frequency (their design columns are nearly
    // orthogonal, so the descents decouple) plus the line spacing. Center
    // errors of a few 1e-4 leak energy across design columns and are the
    // dominant k_f noise source.
    let resid_groups = |groups: [f64; 3], wf_: f64| -> f64 {
        solve_groups(x, &k, groups, wf_, POLISH_M)
            .map(|a| a.residual_norm)
            .unwrap_or(f64::INFINITY)
    };
    let mut vec4 = [wc, wc + wa, wc - wa, wf];
    for &h in &POLISH_SCHED {
        for i in 0..4 {
            let mut ys = [0.0f64; 3];
            for (yi, d) in [-h, 0.0, h].iter().enumerate() {
                let mut v = vec4;
                v[i] += d;
                ys[yi] = resid_groups([v[0], v[1], v[2]], v[3]);
            }
            let (y0, y1, y2) = (ys[0], ys[1], ys[2]);
            let den = y0 - 2.0 * y1 + y2;
            let mut step = if den > 0.0 {
                0.5 * h * (y0 - y2) / den
            } else {
                0.0
            };
            if step.abs() > 2.0 * h {
                step = 0.0;
            }
            if step == 0.0 && y0.min(y2) < y1 {
                step = if y0 < y2 { -h } else { h };
            }
            vec4[i] += step;
        }
    }
    // Project the polished group frequencies back onto (ω_c, ω_c+ω_a,
    // ω_c−ω_a), weighting each group's wish by its solved energy.
    let [g0, g1, g2, wf_p] = vec4;
    wf = wf_p;
    let tw = solve_groups(x, &k, [g0, g1, g2], wf, POLISH_M)?;
    let w: Vec<f64> = (0..3)
        .map(|gi| {
            (-POLISH_M..=POLISH_M)
                .map(|mm| tw.term(gi, mm).norm_sqr())
                .sum()
        })
        .collect();
    let (a11, a12, a22) = (w[0] + w[1] + w[2], w[1] - w[2], w[1] + w[2]);
    let r0 = w[0] * g0 + w[1] * g1 + w[2] * g2;
    let r1v = w[1] * g1 - w[2] * g2;
    let det = a11 * a22 - a12 * a12;
    if det.is_finite() && det != 0.0 {
        wc = (a22 * r0 - a12 * r1v) / det;
        wa = (a11 * r1v - a12 * r0) / det;
    } else {
        wc = g0;
        wa = 0.5 * (g1 - g2);
    }

    // Amplitude solves: a first pass at M ≤ 3 estimates k_f, then the design
    // is rebuilt at M = ceil(k_f)+4; both truncations keep every design
    // column at least 0.75 line-spacings from all others.
    let cap = ((n as f64 / 6.0 - 1.0) / 2.0).floor() as i32;
    let table = ratio_table();
    let m1 = config.m_override.unwrap_or_else(|| safe_m(3, wa / wf, cap));
    let amps1 = solve_groups(x, &k, [wc, wc + wa, wc - wa], wf, m1)?;
    let (kf1, _) = estimate_kf_detailed(&amps1, table)
        .map_err(|e| AfmsError::stage("kf inversion", e.to_string()))?;
    let m2 = config
        .m_override
        .unwrap_or_else(|| safe_m(kf1.ceil() as i32 + 4, wa / wf, cap));
    let amps = if m2 == m1 {
        amps1
    } else {
        solve_groups(x, &k, [wc, wc + wa, wc - wa], wf, m2)?
    };
    let (kf, kf_resid) = estimate_kf_detailed(&amps, table)
        .map_err(|e| AfmsError::stage("kf inversion", e.to_string()))?;

    let params = recover_parameters(&amps, kf, (wc, wa, wf))
        .map_err(|e| AfmsError::stage("parameter recovery", e.to_string()))?;
    let regenerated = regenerate(&params, &k, block);
    let nr = nrmse(x, &regenerated.samples);
    diag.kf_residual = kf_resid;
    diag.condition = amps.condition;
    diag.design_m = m2;
    Ok(FitResult {
        params,
        regenerated,
        nrmse: nr,
        diagnostics: diag,
    })
}

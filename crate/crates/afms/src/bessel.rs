//! Bessel functions of the first kind and FM-index recovery by ratio
//! inversion.

use crate::error::{AfmsError, Result};

/// Supported envelope for [`bessel_j`].
const MAX_ORDER: i32 = 50;
const MAX_ARG: f64 = 50.0;
/// Ascending series below this |x|, Miller backward recurrence above.
const SERIES_SWITCH: f64 = 12.0;

/// Bessel function of the first kind `J_m(x)`, accurate to 1e-12 absolute
/// over the supported envelope `|m| <= 50`, `|x| <= 50`.
pub fn bessel_j(m: i32, x: f64) -> Result<f64> {
    if m.abs() > MAX_ORDER {
        return Err(AfmsError::OutOfEnvelope(format!(
            "bessel_j order |{m}| exceeds {MAX_ORDER}"
        )));
    }
    if !x.is_finite() || x.abs() > MAX_ARG {
        return Err(AfmsError::OutOfEnvelope(format!(
            "bessel_j argument {x} outside |x| <= {MAX_ARG}"
        )));
    }
    // Reduce to m >= 0, x >= 0 via J_{-m}(x) = (-1)^m J_m(x) and
    // J_m(-x) = (-1)^m J_m(x).
    let mut sign = 1.0;
    let mu = if m < 0 {
        if m % 2 != 0 {
            sign = -sign;
        }
        (-m) as u32
    } else {
        m as u32
    };
    let xa = if x < 0.0 {
        if mu % 2 == 1 {
            sign = -sign;
        }
        -x
    } else {
        x
    };
    Ok(sign * bessel_j_core(mu, xa))
}

/// `J_m(x)` for `m >= 0`, `x >= 0`.
fn bessel_j_core(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if x <= SERIES_SWITCH {
        ascending_series(m, x)
    } else {
        miller_backward(m, x)
    }
}

/// Ascending series Σ_q (-1)^q (x/2)^{m+2q} / (q! (m+q)!), summed until the
/// terms fall below 1e-18 of the accumulated value.
fn ascending_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // Leading term (x/2)^m / m!.
    let mut term = 1.0;
    for q in 1..=m {
        term *= half / q as f64;
    }
    let mut sum = term;
    let z = half * half;
    for q in 1..300u32 {
        term *= -z / (q as f64 * (q + m) as f64);
        sum += term;
        if term.abs() < 1e-18 * (sum.abs() + 1e-300) {
            break;
        }
    }
    sum
}

/// Miller's backward recurrence with the normalization
/// `J_0 + 2 Σ J_{2k} = 1`, stable for moderate orders at larger arguments.
fn miller_backward(m: u32, x: f64) -> f64 {
    let start = ((m as f64).max(x) as u32 + 44) & !1; // even start well above both
    let mut jp = 0.0f64; // J_{n+1}
    let mut jc = 1e-30f64; // J_n
    let mut norm = 2.0 * jc; // start is even and > 0
    let mut result = if m == start { jc } else { 0.0 };
    let mut n = start;
    while n > 0 {
        let jm1 = (2.0 * n as f64 / x) * jc - jp; // J_{n-1} from J_n, J_{n+1}
        jp = jc;
        jc = jm1;
        n -= 1;
        if n == 0 {
            norm += jc;
        } else if n % 2 == 0 {
            norm += 2.0 * jc;
        }
        if n == m {
            result = jc;
        }
        // Rescale to avoid overflow on long recurrences.
        if jc.abs() > 1e250 {
            jc /= 1e250;
            jp /= 1e250;
            norm /= 1e250;
            result /= 1e250;
        }
    }
    result / norm
}

/// Lookup table of low-order Bessel values on a uniform `k_f` grid, used to
/// invert measured Bessel-function ratios back to the FM index.
///
/// The grid covers `[0, k_max]` with step `delta`. Ratio entries are formed
/// on demand from the stored `J_0, J_1, J_2` values; a single measured ratio
/// restricts the search to `[0, 2.404]` (before the first zero of `J_0`,
/// where one ratio can no longer disambiguate).
#[derive(Clone, Debug)]
pub struct BesselRatioTable {
    grid: Vec<f64>,
    j: [Vec<f64>; 3],
    delta: f64,
}

/// Largest `k_f` searched when only a single order-0 ratio is available
/// (just below the first zero of `J_0`).
const SINGLE_RATIO_KMAX: f64 = 2.404;
/// Single-ratio bound when order 0 is absent (first zero of `J_1`).
const FIRST_J1_ZERO: f64 = 3.831;
/// Clamp for ratio values at denominator zeros.
const RATIO_CLAMP: f64 = 1e30;

impl BesselRatioTable {
    /// Builds the table over `[0, k_max]` with grid step `delta`.
    pub fn new(k_max: f64, delta: f64) -> Result<Self> {
        if !(k_max >= 5.0) {
            return Err(AfmsError::InvalidParams(
                "ratio table requires k_max >= 5".into(),
            ));
        }
        if !(delta > 0.0 && delta <= 0.001) {
            return Err(AfmsError::InvalidParams(
                "ratio table requires 0 < delta <= 0.001".into(),
            ));
        }
        let len = (k_max / delta).round() as usize + 1;
        let grid: Vec<f64> = (0..len).map(|i| i as f64 * delta).collect();
        let mut j = [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)];
        for &k in &grid {
            for (order, col) in j.iter_mut().enumerate() {
                col.push(bessel_j(order as i32, k)?);
            }
        }
        Ok(BesselRatioTable { grid, j, delta })
    }

    /// Default table: `[0, 5]`, step 0.001.
    pub fn standard() -> Self {
        Self::new(5.0, 0.001).expect("standard table parameters are valid")
    }

    /// Grid of `k_f` sample points.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Tabulated ratio `J_num / J_den` at grid index `i`, clamped at
    /// denominator zeros.
    pub fn ratio(&self, num_order: u32, den_order: u32, i: usize) -> Result<f64> {
        let get = |o: u32| -> Result<&Vec<f64>> {
            self.j
                .get(o as usize)
                .ok_or_else(|| AfmsError::OutOfEnvelope(format!("table holds orders 0..=2, got {o}")))
        };
        let r = get(num_order)?[i] / get(den_order)?[i];
        Ok(if r.is_finite() { r } else { RATIO_CLAMP })
    }

    /// Inverts measured ratios `(numerator order, denominator order, value)`
    /// to the `k_f` minimizing the summed squared ratio differences, refined
    /// by parabolic interpolation between grid points.
    ///
    /// Errors: empty ratio list; objective minimum at the search boundary
    /// (no admissible `k_f`).
    pub fn invert_kf(&self, ratios: &[(u32, u32, f64)]) -> Result<f64> {
        Ok(self.invert_kf_detailed(ratios)?.0)
    }

    /// [`Self::invert_kf`] plus the attained objective value (the inversion
    /// residual reported in fit diagnostics).
    pub fn invert_kf_detailed(&self, ratios: &[(u32, u32, f64)]) -> Result<(f64, f64)> {
        if ratios.is_empty() {
            return Err(AfmsError::EmptyInput("ratio list".into()));
        }
        for &(_, _, r) in ratios {
            if !r.is_finite() {
                return Err(AfmsError::InvalidParams(
                    "measured ratios must be finite".into(),
                ));
            }
        }
        // A single ratio is non-monotone past the first zero of its
        // lowest-order member; stop the scan before it. Joint ratios resolve
        // the ambiguity and may use the full grid.
        let mut last = self.grid.len() - 1;
        if ratios.len() == 1 {
            let (no, de, _) = ratios[0];
            let kmax = if no.min(de) == 0 {
                SINGLE_RATIO_KMAX
            } else {
                FIRST_J1_ZERO
            };
            let lim = (kmax / self.delta).floor() as usize;
            last = last.min(lim);
        }
        let mut best_i = 0usize;
        let mut best = f64::INFINITY;
        let mut obj = vec![0.0f64; last + 1];
        for (i, o) in obj.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(no, de, r) in ratios {
                let t = self.ratio(no, de, i)?;
                let d = t - r;
                acc += d * d;
            }
            *o = acc;
            if acc < best {
                best = acc;
                best_i = i;
            }
        }
        if best_i == last {
            return Err(AfmsError::Inversion(
                "objective minimum at k_f search boundary".into(),
            ));
        }
        if best_i > 0 {
            let (y0, y1, y2) = (obj[best_i - 1], obj[best_i], obj[best_i + 1]);
            let den = y0 - 2.0 * y1 + y2;
            if den > 0.0 {
                let k = self.grid[best_i] + 0.5 * self.delta * (y0 - y2) / den;
                return Ok((k, y1));
            }
        }
        Ok((self.grid[best_i], best))
    }
}

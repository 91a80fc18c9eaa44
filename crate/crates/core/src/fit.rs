//! Least-squares helpers shared by the scaling estimators.

/// Result of an ordinary least-squares line fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination. `1.0` when `y` has no spread.
    pub r2: f64,
}

/// Fits a straight line by ordinary least squares.
///
/// Returns `None` when fewer than two points are given, when the inputs
/// contain non-finite values, or when all `x` coincide.
pub fn ols(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * nf * mx.abs().max(1.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        ((sxy * sxy) / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    Some(LineFit {
        slope,
        intercept,
        r2,
    })
}

/// Orthonormal polynomial basis on the equally spaced abscissae `0..len`.
///
/// Projecting a segment onto this basis gives the least-squares polynomial
/// trend of degree `order` without forming normal equations.
#[derive(Debug, Clone)]
pub struct PolyBasis {
    len: usize,
    order: usize,
    // row-major: (order + 1) vectors of length `len`
    vectors: Vec<f64>,
}

impl PolyBasis {
    /// Builds the basis. Requires `len > order`.
    pub fn new(len: usize, order: usize) -> Option<Self> {
        if len <= order {
            return None;
        }
        let half = (len as f64 - 1.0) / 2.0;
        let scale = if half > 0.0 { half } else { 1.0 };
        let t: Vec<f64> = (0..len).map(|i| (i as f64 - half) / scale).collect();
        let mut vectors = Vec::with_capacity((order + 1) * len);
        for k in 0..=order {
            let mut v: Vec<f64> = t.iter().map(|&ti| ti.powi(k as i32)).collect();
            // modified Gram-Schmidt, two passes
            for _ in 0..2 {
                for j in 0..k {
                    let basis = &vectors[j * len..(j + 1) * len];
                    let dot: f64 = v.iter().zip(basis).map(|(a, b)| a * b).sum();
                    for (vi, bi) in v.iter_mut().zip(basis) {
                        *vi -= dot * bi;
                    }
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm <= 0.0 || !norm.is_finite() {
                return None;
            }
            vectors.extend(v.into_iter().map(|a| a / norm));
        }
        Some(Self {
            len,
            order,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Writes the residual of `segment` after removing its least-squares
    /// polynomial trend into `residual`.
    pub fn residual_into(&self, segment: &[f64], residual: &mut Vec<f64>) {
        debug_assert_eq!(segment.len(), self.len);
        residual.clear();
        residual.extend_from_slice(segment);
        for k in 0..=self.order {
            let basis = &self.vectors[k * self.len..(k + 1) * self.len];
            let coef: f64 = residual.iter().zip(basis).map(|(a, b)| a * b).sum();
            for (r, b) in residual.iter_mut().zip(basis) {
                *r -= coef * b;
            }
        }
    }
}

/// Linear-interpolation quantile of an ascending-sorted sample
/// (the "type 7" definition: `h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

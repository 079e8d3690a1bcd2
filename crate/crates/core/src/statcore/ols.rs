use nalgebra::{DMatrix, DVector};

use super::{cholesky, RngStream, StatError, SymMatrix};

/// Columns whose pivoted-QR diagonal falls below this fraction of the
/// largest column norm are treated as aliased.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Residual variances at or below this value cannot drive a posterior draw.
const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Least-squares fit from a rank-revealing decomposition.
///
/// Aliased columns have their coefficient pinned to zero and a zero row and
/// column in `xtx_inverse`.
#[derive(Debug, Clone)]
pub struct LsFit {
    pub coefficients: DVector<f64>,
    pub residual_variance: f64,
    pub xtx_inverse: SymMatrix,
    pub rank: usize,
    pub n_used: usize,
    pub aliased: Vec<bool>,
    /// `p × rank` square root of `xtx_inverse` (rows of aliased columns are 0).
    pub cov_factor: DMatrix<f64>,
}

impl LsFit {
    pub fn residual_df(&self) -> usize {
        self.n_used.saturating_sub(self.rank)
    }

    /// True when the residual variance is too small for a posterior draw.
    pub fn is_degenerate(&self) -> bool {
        self.residual_variance <= DEGENERATE_VARIANCE
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.coefficients.len()
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        design * &self.coefficients
    }
}

/// Householder QR with column pivoting, applied to the response on the fly
/// so `Q` is never formed.
struct PivotedQr {
    /// Leading `rank × rank` block of R, column-major.
    r11: DMatrix<f64>,
    /// First `rank` entries of `Qᵀy`.
    qty: DVector<f64>,
    /// Squared norm of the remaining entries of `Qᵀy`.
    rss: f64,
    /// perm[k] = original index of the k-th pivoted column
    perm: Vec<usize>,
    rank: usize,
}

fn pivoted_qr(design: &DMatrix<f64>, response: Option<&DVector<f64>>) -> PivotedQr {
    let (n, p) = design.shape();
    // column-major copy: column j is a[j*n..(j+1)*n]
    let mut a: Vec<f64> = design.as_slice().to_vec();
    let mut y: Vec<f64> = response.map_or_else(Vec::new, |r| r.as_slice().to_vec());
    let mut perm: Vec<usize> = (0..p).collect();
    let col_norm = |a: &[f64], j: usize, from: usize| a[j * n + from..(j + 1) * n].iter().map(|v| v * v).sum::<f64>();
    let max_norm = (0..p).map(|j| col_norm(&a, j, 0).sqrt()).fold(0.0_f64, f64::max);
    let tol = RANK_TOLERANCE * max_norm;
    let mut rank = 0;
    let kmax = n.min(p);
    for k in 0..kmax {
        let (best, best_norm) = (k..p)
            .map(|j| (j, col_norm(&a, j, k)))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        let norm = best_norm.sqrt();
        if !(norm > tol) || max_norm == 0.0 {
            break;
        }
        if best != k {
            for i in 0..n {
                a.swap(k * n + i, best * n + i);
            }
            perm.swap(k, best);
        }
        let x0 = a[k * n + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place below the diagonal
        a[k * n + k] = x0 - alpha;
        let vtv: f64 = a[k * n + k..(k + 1) * n].iter().map(|v| v * v).sum();
        let reflect = |target: &mut [f64], v: &[f64]| {
            let d: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * d / vtv;
            for (t, vi) in target.iter_mut().zip(v) {
                *t -= f * vi;
            }
        };
        if vtv > 0.0 {
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let v = &head[k * n + k..];
            for j in 0..p - k - 1 {
                reflect(&mut tail[j * n + k..(j + 1) * n], v);
            }
            if !y.is_empty() {
                reflect(&mut y[k..], v);
            }
        }
        a[k * n + k] = alpha;
        rank = k + 1;
    }
    let r11 = DMatrix::from_fn(rank, rank, |i, j| if i <= j { a[j * n + i] } else { 0.0 });
    let qty = if y.is_empty() {
        DVector::zeros(rank)
    } else {
        DVector::from_iterator(rank, y.iter().take(rank).copied())
    };
    let rss = y.iter().skip(rank).map(|v| v * v).sum();
    PivotedQr {
        r11,
        qty,
        rss,
        perm,
        rank,
    }
}

/// Numerical rank of `design` and the columns a pivoted fit would pin to 0.
pub fn rank_profile(design: &DMatrix<f64>) -> (usize, Vec<bool>) {
    let p = design.ncols();
    if design.nrows() == 0 || p == 0 {
        return (0, vec![true; p]);
    }
    let PivotedQr { perm, rank, .. } = pivoted_qr(design, None);
    let mut aliased = vec![true; p];
    for &c in &perm[..rank] {
        aliased[c] = false;
    }
    (rank, aliased)
}

pub fn ols_fit(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<LsFit, StatError> {
    let (n, p) = design.shape();
    if response.len() != n {
        return Err(StatError::DimensionMismatch(format!(
            "design has {n} rows, response has {}",
            response.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(StatError::InsufficientData { n_used: n, rank: 0 });
    }

    let PivotedQr {
        r11,
        qty,
        rss,
        perm,
        rank,
    } = pivoted_qr(design, Some(response));
    if n <= rank {
        return Err(StatError::InsufficientData { n_used: n, rank });
    }

    let mut coefficients = DVector::zeros(p);
    let mut aliased = vec![true; p];
    let mut xtx_inverse = DMatrix::zeros(p, p);
    let mut cov_factor = DMatrix::zeros(p, rank);
    if rank > 0 {
        let b = r11
            .solve_upper_triangular(&qty)
            .expect("nonzero diagonal on identified block");
        let eye = DMatrix::identity(rank, rank);
        let r11_inv = r11
            .solve_upper_triangular(&eye)
            .expect("nonzero diagonal on identified block");
        let inv = &r11_inv * r11_inv.transpose();
        for a in 0..rank {
            coefficients[perm[a]] = b[a];
            aliased[perm[a]] = false;
            for c in 0..rank {
                xtx_inverse[(perm[a], perm[c])] = inv[(a, c)];
                cov_factor[(perm[a], c)] = r11_inv[(a, c)];
            }
        }
    }
    let residual_variance = rss / (n - rank) as f64;

    Ok(LsFit {
        coefficients,
        residual_variance,
        xtx_inverse: SymMatrix::symmetrize(xtx_inverse),
        rank,
        n_used: n,
        aliased,
        cov_factor,
    })
}

/// Draw `(β*, σ*)` from the normal/inverse-chi-square posterior of a linear
/// regression under the noninformative reference prior.
///
/// `σ*² = s²·ν/g` with `g ~ χ²_ν`, then `β* = β̂ + σ*·L·z` where
/// `L·Lᵀ = (XᵀX)⁻¹` on the identified columns. Aliased coefficients stay 0.
pub fn bayes_regression_draw(
    fit: &LsFit,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, f64), StatError> {
    let df = fit.residual_df();
    if df < 1 {
        return Err(StatError::InsufficientData {
            n_used: fit.n_used,
            rank: fit.rank,
        });
    }
    if fit.is_degenerate() {
        return Err(StatError::DegenerateVariance(fit.residual_variance));
    }

    let g = rng.chi_square(df as u64);
    let sigma = (fit.residual_variance * df as f64 / g).sqrt();

    let identified: Vec<usize> = (0..fit.aliased.len())
        .filter(|&i| !fit.aliased[i])
        .collect();
    let k = identified.len();
    let block = DMatrix::from_fn(k, k, |a, b| {
        fit.xtx_inverse.get(identified[a], identified[b])
    });
    let z = DVector::from_fn(k, |_, _| rng.normal());
    // Nearly collinear designs can leave (XᵀX)⁻¹ too ill-conditioned for a
    // Cholesky pivot test even though it is positive definite; R⁻¹ from the
    // fit's QR is an equally valid square root and needs no factorisation.
    let shift = match cholesky(&SymMatrix::symmetrize(block)) {
        Ok(l) => {
            let local = l * z * sigma;
            let mut full = DVector::zeros(fit.coefficients.len());
            for (a, &i) in identified.iter().enumerate() {
                full[i] = local[a];
            }
            full
        }
        Err(_) => &fit.cov_factor * z * sigma,
    };
    Ok((&fit.coefficients + shift, sigma))
}

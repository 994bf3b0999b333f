//! Principal component analysis with a Gram-matrix path for wide data.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Fitted principal subspace. Eigenvalues are sample variances (`n - 1` normalization).
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `D x k`, orthonormal columns, ordered by descending eigenvalue.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
    pub kept_variance_ratio: f64,
    /// All samples identical (zero total variance).
    pub degenerate: bool,
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        (0..self.n_components())
            .map(|j| {
                let col = self.components.column(j);
                (0..d).map(|i| (x[i] - self.mean[i]) * col[i]).sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (j, w) in weights.iter().enumerate() {
            let col = self.components.column(j);
            for (o, c) in out.iter_mut().zip(col.iter()) {
                *o += w * c;
            }
        }
        out
    }
}

/// Relative eigenvalue threshold below which a direction counts as numerically null.
const RANK_TOL: f64 = 1e-10;

/// Fits a PCA model keeping `min(max_components, rank)` components, further truncated to
/// the smallest count whose cumulative variance reaches `variance_cap` of the total.
pub fn pca_fit(data: &[Vec<f64>], max_components: usize, variance_cap: f64) -> Result<Pca> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {n}")));
    }
    if !(variance_cap > 0.0 && variance_cap <= 1.0) {
        return Err(Error::invalid(format!("variance cap {variance_cap} outside (0, 1]")));
    }
    let d = data[0].len();
    if let Some(bad) = data.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let denom = (n - 1) as f64;
    let total_variance = x.iter().map(|v| v * v).sum::<f64>() / denom;

    if total_variance <= f64::MIN_POSITIVE {
        return Ok(Pca {
            mean,
            components: DMatrix::zeros(d, 0),
            eigenvalues: vec![],
            total_variance: 0.0,
            kept_variance_ratio: 0.0,
            degenerate: true,
        });
    }

    let (eigvals, vectors) = if n <= d {
        let gram = &x * x.transpose();
        let (vals, vecs) = sorted_eigen(gram);
        // lift Gram eigenvectors back to data space
        let keep = vals.iter().take_while(|&&g| g > RANK_TOL * vals[0].max(0.0)).count();
        let u = vecs.columns(0, keep).into_owned();
        let mut v = x.transpose() * u;
        for j in 0..keep {
            let norm = v.column(j).norm();
            v.column_mut(j).scale_mut(1.0 / norm);
        }
        (vals[..keep].iter().map(|g| g / denom).collect::<Vec<_>>(), v)
    } else {
        let cov = (x.transpose() * &x) / denom;
        let (vals, vecs) = sorted_eigen(cov);
        let keep = vals.iter().take_while(|&&g| g > RANK_TOL * vals[0].max(0.0)).count();
        (vals[..keep].to_vec(), vecs.columns(0, keep).into_owned())
    };

    let mut k = eigvals.len().min(max_components);
    if variance_cap < 1.0 {
        let mut acc = 0.0;
        for (i, l) in eigvals.iter().enumerate().take(k) {
            acc += l;
            if acc >= variance_cap * total_variance {
                k = i + 1;
                break;
            }
        }
    }
    let mut components = vectors.columns(0, k).into_owned();
    canonicalize_signs(&mut components);
    let eigenvalues = eigvals[..k].to_vec();
    let kept = eigenvalues.iter().sum::<f64>() / total_variance;
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        total_variance,
        kept_variance_ratio: kept.min(1.0),
        degenerate: false,
    })
}

/// Eigen-decomposition of a symmetric matrix, sorted by descending eigenvalue.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

/// Flip each column so its largest-magnitude entry is positive.
pub(crate) fn canonicalize_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0.0f64;
        for v in m.column(j).iter() {
            if v.abs() > best.abs() + 1e-12 {
                best = *v;
            }
        }
        if best < 0.0 {
            m.column_mut(j).neg_mut();
        }
    }
}

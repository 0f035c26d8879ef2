//! Principal component analysis via symmetric eigendecomposition.
//!
//! With `d` features and `n` samples the decomposition runs on the `d × d`
//! covariance when `d ≤ n` and on the `n × n` Gram matrix otherwise (the
//! usual choice for 3072-dimensional text embeddings of a few hundred
//! projects). Components are sign-normalized so that the entry of largest
//! magnitude is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `dim` rows of length `mean.len()`, pairwise orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Projects `x` onto the components.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x.iter().zip(&self.mean)).map(|(ci, (xi, mi))| ci * (xi - mi)).sum())
            .collect()
    }

    /// Maps projected coordinates back into the input space.
    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, zi) in self.components.iter().zip(z) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += zi * ci;
            }
        }
        out
    }

    /// The model restricted to its first `dim` components. Because components
    /// are ordered by variance this equals fitting with `dim` directly.
    pub fn truncated(&self, dim: usize) -> PcaModel {
        PcaModel {
            mean: self.mean.clone(),
            components: self.components[..dim.min(self.dim())].to_vec(),
            explained_variance: self.explained_variance[..dim.min(self.dim())].to_vec(),
        }
    }
}

/// Fits a PCA with `dim` components on the rows of `data`.
pub fn fit_pca(data: &[Vec<f64>], dim: usize) -> Result<PcaModel, FeatureError> {
    let n = data.len();
    if n < 2 {
        return Err(FeatureError::TooFewSamples { n });
    }
    let d = data[0].len();
    if let Some(row) = data.iter().position(|r| r.len() != d) {
        return Err(FeatureError::LengthMismatch {
            what: format!("PCA input row {row}"),
            expected: d,
            got: data[row].len(),
        });
    }
    let max_dim = n.min(d);
    if dim == 0 || dim > max_dim {
        return Err(FeatureError::DimOutOfRange { dim, max: max_dim });
    }
    if data.iter().flatten().any(|x| !x.is_finite()) {
        return Err(FeatureError::NonFinite { project: "<pca input>".into(), index: 0 });
    }

    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let scale = (n - 1) as f64;
    let total_variance = x.iter().map(|v| v * v).sum::<f64>() / scale;
    if total_variance <= 0.0 {
        return Err(FeatureError::ZeroVariance);
    }

    let (mut components, variances) = if d <= n {
        let cov = (x.transpose() * &x) / scale;
        let (vals, vecs) = sorted_eigen(cov);
        let comps: Vec<Vec<f64>> = (0..dim).map(|k| vecs.column(k).iter().copied().collect()).collect();
        (comps, vals[..dim].to_vec())
    } else {
        let gram = (&x * x.transpose()) / scale;
        let (vals, vecs) = sorted_eigen(gram);
        let lead = vals[0];
        let mut comps = Vec::with_capacity(dim);
        for (k, &val) in vals.iter().enumerate().take(dim) {
            if val <= RANK_TOL * lead {
                break;
            }
            let u = vecs.column(k);
            let c: DVector<f64> = x.transpose() * u / (scale * val).sqrt();
            comps.push(c.iter().copied().collect());
        }
        (comps, vals[..dim].to_vec())
    };

    orthonormalize(&mut components);
    complete_basis(&mut components, dim, d);
    for c in components.iter_mut() {
        fix_sign(c);
    }
    let explained_variance = variances.into_iter().map(|v| v.max(0.0)).collect();
    Ok(PcaModel { mean, components, explained_variance })
}

/// Eigenpairs sorted by decreasing eigenvalue (stable on ties).
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Two passes of modified Gram-Schmidt.
fn orthonormalize(vectors: &mut [Vec<f64>]) {
    for _ in 0..2 {
        for i in 0..vectors.len() {
            let (done, rest) = vectors.split_at_mut(i);
            let v = &mut rest[0];
            for u in done.iter() {
                let p = dot(v, u);
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= p * ui);
            }
            normalize(v);
        }
    }
}

/// Appends unit directions orthogonal to the existing components (taken from
/// the standard basis, in order) until there are `dim`. Only reached when the
/// data has rank below `dim`, so these directions carry zero variance.
fn complete_basis(components: &mut Vec<Vec<f64>>, dim: usize, d: usize) {
    let mut axis = 0;
    while components.len() < dim && axis < d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for u in components.iter() {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= p * ui);
            }
        }
        if normalize(&mut v) > 1e-6 {
            components.push(v);
        }
    }
}

fn fix_sign(c: &mut [f64]) {
    let mut best = 0;
    for (i, x) in c.iter().enumerate() {
        if x.abs() > c[best].abs() {
            best = i;
        }
    }
    if c[best] < 0.0 {
        c.iter_mut().for_each(|x| *x = -*x);
    }
}

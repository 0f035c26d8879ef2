use serde::{Deserialize, Serialize};

use super::{EmbeddingConfig, FeatureError, FeatureSchema, FeatureSpace, FeatureVector};
use crate::data::Campaign;
use crate::metrics::kendall_tau_b;
use crate::models::{fit_on_space, ClassicalOptions, ModelKind};

/// Encoded training and evaluation campaigns for a dimension sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepData<'a> {
    pub schema: &'a FeatureSchema,
    pub train: &'a Campaign,
    pub train_features: &'a [FeatureVector],
    pub eval: &'a Campaign,
    pub eval_features: &'a [FeatureVector],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dim: usize,
    /// `None` when the predictions are constant and tau is undefined.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSweep {
    pub kind: ModelKind,
    pub best_dim: usize,
    pub best_tau: f64,
    pub rows: Vec<SweepRow>,
}

/// Kendall tau on the evaluation campaign for each PCA dimension in `dims`;
/// the best dimension maximizes tau, ties going to the smaller one.
///
/// PCA is fitted once at the largest requested dimension and truncated, which
/// gives the same leading components as separate fits.
pub fn select_pca_dim(
    data: SweepData<'_>,
    kind: ModelKind,
    dims: &[usize],
    options: &ClassicalOptions,
) -> Result<DimSweep, FeatureError> {
    let mut dims = dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    let Some(&max_dim) = dims.last() else {
        return Err(FeatureError::Sweep { dim: 0, message: "no dimensions requested".into() });
    };
    let eval_votes = data.eval.real_votes().ok_or_else(|| FeatureError::Sweep {
        dim: max_dim,
        message: format!("campaign {:?} lacks ground-truth votes", data.eval.id()),
    })?;
    let full = FeatureSpace::fit(data.schema.clone(), data.train_features, max_dim)?;
    let total = data.eval.meta.total_votes as f64;

    let mut rows = Vec::with_capacity(dims.len());
    for &dim in &dims {
        let sweep_err = |message: String| FeatureError::Sweep { dim, message };
        if dim == 0 {
            return Err(FeatureError::DimOutOfRange { dim, max: full.pca.dim() });
        }
        let model = fit_on_space(
            kind,
            data.train,
            data.train_features,
            full.with_dim(dim),
            EmbeddingConfig::default(),
            options,
        )
        .map_err(|e| sweep_err(e.to_string()))?;
        let predicted = model.predict(data.eval_features, total).map_err(|e| sweep_err(e.to_string()))?;
        let tau = kendall_tau_b(&predicted, &eval_votes).ok();
        log::debug!("{kind} dim {dim}: tau {tau:?}");
        rows.push(SweepRow { dim, tau });
    }

    let best = rows
        .iter()
        .filter_map(|r| r.tau.map(|t| (r.dim, t)))
        .fold(None::<(usize, f64)>, |acc, (d, t)| match acc {
            Some((_, bt)) if bt >= t => acc,
            _ => Some((d, t)),
        });
    let (best_dim, best_tau) = best.ok_or_else(|| FeatureError::Sweep {
        dim: max_dim,
        message: "tau undefined at every dimension".into(),
    })?;
    Ok(DimSweep { kind, best_dim, best_tau, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_features, embed_all, HashingEmbedder};
    use crate::synthetic::{synthetic_pair, SyntheticSpec};

    fn encoded() -> (Campaign, Campaign, FeatureSchema, Vec<FeatureVector>, Vec<FeatureVector>) {
        let (train, eval) = synthetic_pair(&SyntheticSpec::default(), 52, 21);
        let e = HashingEmbedder::new(64);
        let emb = |c: &Campaign| {
            let texts: Vec<String> = c.projects.iter().map(|p| format!("{} {}", p.title, p.description)).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            embed_all(&e, &refs, 1).unwrap()
        };
        let schema = FeatureSchema::fit(&train, 64);
        let tf = build_features(&train, &schema, &emb(&train)).unwrap();
        let ef = build_features(&eval, &schema, &emb(&eval)).unwrap();
        (train, eval, schema, tf, ef)
    }

    #[test]
    fn best_dim_maximizes_table() {
        let (train, eval, schema, tf, ef) = encoded();
        let data = SweepData { schema: &schema, train: &train, train_features: &tf, eval: &eval, eval_features: &ef };
        for kind in [ModelKind::Pvm, ModelKind::Knn] {
            let sweep = select_pca_dim(data, kind, &[1, 2, 4, 8, 16], &ClassicalOptions::default()).unwrap();
            assert_eq!(sweep.rows.len(), 5);
            let max = sweep.rows.iter().filter_map(|r| r.tau).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sweep.best_tau, max);
            let first = sweep.rows.iter().find(|r| r.tau == Some(max)).unwrap();
            assert_eq!(first.dim, sweep.best_dim);
        }
    }

    #[test]
    fn singleton_sweep() {
        let (train, eval, schema, tf, ef) = encoded();
        let data = SweepData { schema: &schema, train: &train, train_features: &tf, eval: &eval, eval_features: &ef };
        let sweep = select_pca_dim(data, ModelKind::Knn, &[3], &ClassicalOptions::default()).unwrap();
        assert_eq!(sweep.best_dim, 3);
        assert_eq!(sweep.rows.len(), 1);
    }

    #[test]
    fn out_of_range_dim_is_an_error() {
        let (train, eval, schema, tf, ef) = encoded();
        let data = SweepData { schema: &schema, train: &train, train_features: &tf, eval: &eval, eval_features: &ef };
        assert!(matches!(
            select_pca_dim(data, ModelKind::Pvm, &[500], &ClassicalOptions::default()),
            Err(FeatureError::DimOutOfRange { .. })
        ));
        assert!(select_pca_dim(data, ModelKind::Pvm, &[], &ClassicalOptions::default()).is_err());
    }
}

//! Named model configurations and the reconstruction pipeline.

mod forest;
mod io;
mod linear;
mod pipeline;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_apply, Feature, FeatureMatrix, FeatureSpec, MinMax};
use crate::gbt::{self, GbtEnsemble, GbtParams};

pub use forest::{fit_forest, Forest, MaxFeatures, RfParams};
pub use io::{
    load_fitted, model_from_json, model_to_json, save_fitted, MODEL_FORMAT, MODEL_VERSION,
};
pub use linear::{fit_linear, LinearModel};
pub use pipeline::{
    fit_model, fit_on_valid, reconstruct, reconstruct_with_report, ReconstructMode,
    ReconstructReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlr,
    Rf,
    Xgb,
    Txgb,
    Sxgb,
    Stxgb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Mlr,
        ModelKind::Rf,
        ModelKind::Xgb,
        ModelKind::Txgb,
        ModelKind::Sxgb,
        ModelKind::Stxgb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlr => "mlr",
            ModelKind::Rf => "rf",
            ModelKind::Xgb => "xgb",
            ModelKind::Txgb => "txgb",
            ModelKind::Sxgb => "sxgb",
            ModelKind::Stxgb => "stxgb",
        }
    }

    /// The fixed predictor set of this kind.
    pub fn features(self) -> Vec<Feature> {
        use Feature::*;
        let mut base = vec![Dem, Asp, Slo, Lac, SoA, SoZ, SeA, SeZ, Albedo];
        match self {
            ModelKind::Mlr | ModelKind::Rf | ModelKind::Xgb => {}
            ModelKind::Txgb => base.extend([Day, Tn]),
            ModelKind::Sxgb => base.extend([Lat, Lon, Sn]),
            ModelKind::Stxgb => return Feature::ALL.to_vec(),
        }
        base.sort();
        base
    }

    pub fn is_boosted(self) -> bool {
        !matches!(self, ModelKind::Mlr | ModelKind::Rf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidParam(format!("unknown model '{s}' (mlr|rf|xgb|txgb|sxgb|stxgb)"))
            })
    }
}

/// A model kind with its predictors and learner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub features: FeatureSpec,
    pub gbt: GbtParams,
    pub rf: RfParams,
}

impl ModelConfig {
    /// The kind's own predictor set with `sw = tw = 1`, normalised inputs
    /// and default learner settings.
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            features: FeatureSpec::new(&kind.features(), 1, 1, true).expect("fixed sets are valid"),
            gbt: GbtParams::default(),
            rf: RfParams::default(),
        }
    }

    pub fn with_windows(mut self, sw: usize, tw: usize) -> Result<Self> {
        self.features = self.features.with_windows(sw, tw)?;
        Ok(self)
    }

    /// Replaces the predictor set, as feature-ablation runs do.
    pub fn with_features(mut self, features: &[Feature]) -> Result<Self> {
        self.features = FeatureSpec::new(
            features,
            self.features.sw,
            self.features.tw,
            self.features.normalize,
        )?;
        Ok(self)
    }

    pub fn with_gbt(mut self, params: GbtParams) -> Self {
        self.gbt = params;
        self
    }

    pub fn with_rf(mut self, params: RfParams) -> Self {
        self.rf = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        match self.kind {
            ModelKind::Mlr => Ok(()),
            ModelKind::Rf => self.rf.validate(),
            _ => self.gbt.validate(),
        }
    }

    /// The spec used to build raw (unscaled) predictor rows.
    pub(crate) fn raw_spec(&self) -> FeatureSpec {
        let mut spec = self.features.clone();
        spec.normalize = false;
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    Boosted(GbtEnsemble),
    Forest(Forest),
    Linear(LinearModel),
}

/// A trained model with the scaling it expects on its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub config: ModelConfig,
    /// Min-max parameters from the training rows, one pair per feature.
    pub norm: Option<Vec<MinMax>>,
    pub learner: Learner,
}

impl FittedModel {
    pub fn features(&self) -> &[Feature] {
        self.config.features.features()
    }

    /// Scales raw rows the way the training rows were scaled.
    pub fn prepare(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix> {
        if raw.features() != self.features() {
            return Err(Error::Shape(format!(
                "model expects features {:?}, rows have {:?}",
                self.features(),
                raw.features()
            )));
        }
        match &self.norm {
            Some(norm) => normalize_apply(raw, norm),
            None => Ok(raw.clone()),
        }
    }

    /// Unclamped predictions for raw (unscaled) rows.
    pub fn predict_raw(&self, raw: &FeatureMatrix) -> Result<Vec<f64>> {
        let x = self.prepare(raw)?;
        predict_prepared(&self.learner, &x)
    }

    /// Per-feature split gain, descending; `None` for the linear model.
    pub fn importance(&self) -> Option<Vec<(Feature, f64)>> {
        match &self.learner {
            Learner::Boosted(m) => Some(gbt::feature_importance(m)),
            Learner::Forest(f) => {
                let mut v: Vec<(Feature, f64)> = f
                    .features
                    .iter()
                    .copied()
                    .zip(f.gain.iter().copied())
                    .collect();
                v.sort_by(|a, b| b.1.total_cmp(&a.1));
                Some(v)
            }
            Learner::Linear(_) => None,
        }
    }
}

fn predict_prepared(learner: &Learner, x: &FeatureMatrix) -> Result<Vec<f64>> {
    match learner {
        Learner::Boosted(m) => gbt::predict(m, x),
        Learner::Forest(f) => Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| f.predict_row(x.row(r), x.row_missing(r)))
            .collect()),
        Learner::Linear(l) => Ok((0..x.n_rows())
            .into_par_iter()
            .map(|r| l.predict_row(x.row(r), x.row_missing(r)))
            .collect()),
    }
}

/// Fits the configured learner to already-scaled rows.
pub fn fit_learner(config: &ModelConfig, train: &FeatureMatrix) -> Result<Learner> {
    config.validate()?;
    Ok(match config.kind {
        ModelKind::Mlr => Learner::Linear(fit_linear(train)?),
        ModelKind::Rf => Learner::Forest(fit_forest(train, &config.rf)?),
        _ => Learner::Boosted(gbt::fit(train, &config.gbt)?),
    })
}

/// Fits a model to raw rows: scaling parameters come from `raw` itself.
pub fn fit_rows(config: &ModelConfig, raw: &FeatureMatrix) -> Result<FittedModel> {
    if raw.features() != config.features.features() {
        return Err(Error::Shape(
            "training rows do not match the configured features".into(),
        ));
    }
    let (x, norm) = if config.features.normalize {
        let norm = raw.min_max();
        (normalize_apply(raw, &norm)?, Some(norm))
    } else {
        (raw.clone(), None)
    };
    Ok(FittedModel {
        config: config.clone(),
        norm,
        learner: fit_learner(config, &x)?,
    })
}

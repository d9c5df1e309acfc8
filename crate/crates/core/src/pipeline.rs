//! End-to-end sparse functional MLP: FPCA scores in, trained network out.

use serde::{Deserialize, Serialize};

use crate::curvedata::{FunctionalDataset, SparseCurve, Task};
use crate::error::{Error, Result};
use crate::fpca::{
    fit_fpca, fit_mfpca, mfpca_scores, pace_scores, stack_scores, ComponentSelection, FpcaModel, FpcaOptions,
    MfpcaModel, ScoreMatrix,
};
use crate::funcnet::{init_network, train, Architecture, FunctionalNetwork, Prediction, TrainConfig};
use crate::persist;

/// Which scores feed the functional layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Per-feature PACE scores, stacked.
    #[default]
    Univariate,
    /// Joint scores from multivariate FPCA.
    Mfpca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fpca: FpcaOptions,
    pub score_mode: ScoreMode,
    /// Truncation of the joint eigenbasis in [`ScoreMode::Mfpca`].
    pub joint_selection: ComponentSelection,
    pub arch: Architecture,
    pub train: TrainConfig,
    /// Train regression networks on z-scored responses.
    pub standardize_response: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fpca: FpcaOptions::default(),
            score_mode: ScoreMode::Univariate,
            joint_selection: ComponentSelection::default(),
            arch: Architecture::default(),
            train: TrainConfig::default(),
            standardize_response: true,
        }
    }
}

/// Fitted score extractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Scorer {
    Univariate { models: Vec<FpcaModel> },
    Mfpca { model: MfpcaModel },
}

impl Scorer {
    pub fn feature_models(&self) -> &[FpcaModel] {
        match self {
            Scorer::Univariate { models } => models,
            Scorer::Mfpca { model } => &model.features,
        }
    }

    /// Input dimensions for the functional layer.
    pub fn input_dims(&self) -> Vec<usize> {
        match self {
            Scorer::Univariate { models } => models.iter().map(|m| m.n_components).collect(),
            Scorer::Mfpca { model } => vec![model.n_joint],
        }
    }

    /// Network input for one subject's curves (one per feature).
    pub fn inputs(&self, curves: &[SparseCurve]) -> Result<Vec<f64>> {
        let models = self.feature_models();
        if curves.len() != models.len() {
            return Err(Error::DimensionMismatch {
                context: "curves per subject",
                expected: models.len(),
                got: curves.len(),
            });
        }
        let per_feature = curves
            .iter()
            .zip(models)
            .map(|(c, m)| pace_scores(c, m))
            .collect::<Result<Vec<_>>>()?;
        self.combine_univariate(&per_feature)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        persist::save(path, SCORER_KIND, self)
    }

    /// Read a scorer bundle, or take the scorer out of a pipeline bundle.
    pub fn load(path: &std::path::Path) -> Result<Scorer> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scorer> {
        persist::from_json::<Scorer>(text, SCORER_KIND).or_else(|first| match Pipeline::from_json(text) {
            Ok(p) => Ok(p.scorer),
            Err(_) => Err(first),
        })
    }

    fn combine_univariate(&self, per_feature: &[Vec<f64>]) -> Result<Vec<f64>> {
        let stacked = stack_scores(per_feature);
        match self {
            Scorer::Univariate { .. } => Ok(stacked),
            Scorer::Mfpca { model } => mfpca_scores(&stacked, model),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseScale {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub feature_names: Vec<String>,
    pub task: Task,
    pub scorer: Scorer,
    pub network: FunctionalNetwork,
    pub response_scale: Option<ResponseScale>,
    pub loss_history: Vec<f64>,
    pub warnings: Vec<String>,
}

pub const PIPELINE_KIND: &str = "pipeline";
pub const SCORER_KIND: &str = "fpca";

impl Pipeline {
    pub fn fit(ds: &FunctionalDataset, config: &PipelineConfig) -> Result<Pipeline> {
        if ds.n_subjects() < 2 {
            return Err(Error::invalid("training needs at least 2 subjects"));
        }
        let ids = ds.subject_ids();
        let mut warnings = Vec::new();
        let mut models = Vec::with_capacity(ds.n_features());
        let mut matrices: Vec<ScoreMatrix> = Vec::with_capacity(ds.n_features());
        for (r, name) in ds.feature_names().iter().enumerate() {
            let (model, scores, report) = fit_fpca(name, &ds.feature_curves(r), &ids, ds.grid(), &config.fpca)?;
            warnings.extend(report.warnings.into_iter().map(|w| format!("{name}: {w}")));
            models.push(model);
            matrices.push(scores);
        }
        let per_subject: Vec<Vec<Vec<f64>>> = (0..ds.n_subjects())
            .map(|i| matrices.iter().map(|m| m.scores[i].clone()).collect())
            .collect();
        let scorer = match config.score_mode {
            ScoreMode::Univariate => Scorer::Univariate { models },
            ScoreMode::Mfpca => Scorer::Mfpca {
                model: fit_mfpca(models, &matrices, config.joint_selection)?,
            },
        };
        let inputs = per_subject
            .iter()
            .map(|s| scorer.combine_univariate(s))
            .collect::<Result<Vec<_>>>()?;
        for w in &warnings {
            log::warn!("{w}");
        }
        Self::train_on(ds, scorer, inputs, warnings, config)
    }

    /// Train only the network, reusing an already fitted scorer.
    pub fn fit_with_scorer(ds: &FunctionalDataset, scorer: Scorer, config: &PipelineConfig) -> Result<Pipeline> {
        let inputs = ds
            .subjects()
            .iter()
            .map(|s| scorer.inputs(&s.curves))
            .collect::<Result<Vec<_>>>()?;
        Self::train_on(ds, scorer, inputs, Vec::new(), config)
    }

    fn train_on(
        ds: &FunctionalDataset,
        scorer: Scorer,
        inputs: Vec<Vec<f64>>,
        warnings: Vec<String>,
        config: &PipelineConfig,
    ) -> Result<Pipeline> {
        let responses = ds.responses();
        let response_scale = (ds.task() == Task::Regression && config.standardize_response).then(|| {
            let n = responses.len() as f64;
            let mean = responses.iter().sum::<f64>() / n;
            let var = responses.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            ResponseScale { mean, sd }
        });
        let targets: Vec<f64> = match response_scale {
            Some(s) => responses.iter().map(|y| (y - s.mean) / s.sd).collect(),
            None => responses,
        };

        let net = init_network(&config.arch, &scorer.input_dims(), ds.task(), config.train.init, config.train.seed)?;
        let outcome = train(net, &inputs, &targets, &config.train)?;
        Ok(Pipeline {
            config: config.clone(),
            feature_names: ds.feature_names().to_vec(),
            task: ds.task(),
            scorer,
            network: outcome.network,
            response_scale,
            loss_history: outcome.history,
            warnings,
        })
    }

    fn check_features(&self, ds: &FunctionalDataset) -> Result<()> {
        if ds.feature_names() != self.feature_names.as_slice() {
            return Err(Error::invalid(format!(
                "dataset features {:?} do not match the model's {:?}",
                ds.feature_names(),
                self.feature_names
            )));
        }
        Ok(())
    }

    /// Network inputs for every subject of `ds`.
    pub fn inputs(&self, ds: &FunctionalDataset) -> Result<Vec<Vec<f64>>> {
        self.check_features(ds)?;
        ds.subjects().iter().map(|s| self.scorer.inputs(&s.curves)).collect()
    }

    pub fn predict_curves(&self, curves: &[SparseCurve]) -> Result<Prediction> {
        let x = self.scorer.inputs(curves)?;
        self.predict_inputs(&x)
    }

    fn predict_inputs(&self, x: &[f64]) -> Result<Prediction> {
        let raw = self.network.forward_scores(x)?;
        let value = match self.response_scale {
            Some(s) => s.mean + s.sd * raw,
            None => raw,
        };
        Ok(Prediction::from_output(value, self.task))
    }

    pub fn predict(&self, ds: &FunctionalDataset) -> Result<Vec<Prediction>> {
        self.inputs(ds)?.iter().map(|x| self.predict_inputs(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(PIPELINE_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Pipeline> {
        persist::from_json(text, PIPELINE_KIND)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        persist::save(path, PIPELINE_KIND, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Pipeline> {
        persist::load(path, PIPELINE_KIND)
    }
}

//! The embedding MLP: token embeddings flattened and concatenated with the
//! numeric covariates, three ReLU hidden layers and a linear 2-unit output
//! (home goals, away goals, in scaled target units).
//!
//! Forward, reverse-mode gradients and serialization live here; the training
//! loop is in [`train`].

mod train;

pub use train::{train, EpochStats, TrainHistory};

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, NormalizationStats, COVARIATE_COUNT, LINEUP_SLOTS};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("embedding dim mismatch: {0} vs {1}")]
    EmbeddingDimMismatch(usize, usize),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("unsupported model format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Embedding dimension m.
    pub embedding_dim: usize,
    /// Number of token slots (2j).
    pub lineup_len: usize,
    pub covariate_count: usize,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl ModelConfig {
    /// Defaults: m=25, 32 slots, 11 covariates, hidden [256, 128, 64],
    /// Adam lr 1e-3, batch 64, patience 1.
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embedding_dim: 25,
            lineup_len: LINEUP_SLOTS,
            covariate_count: COVARIATE_COUNT,
            hidden_sizes: vec![256, 128, 64],
            seed: 0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embedding_dim < 1 {
            return Err(ModelError::Config("embedding_dim must be >= 1".into()));
        }
        if self.lineup_len % 2 != 0 {
            return Err(ModelError::Config("lineup_len must be even".into()));
        }
        if self.hidden_sizes.is_empty() {
            return Err(ModelError::Config("hidden_sizes must be non-empty".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Width of the first dense layer's input: flattened embeddings plus
    /// covariates (811 under defaults).
    pub fn input_width(&self) -> usize {
        self.lineup_len * self.embedding_dim + self.covariate_count
    }
}

/// Fully connected layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// One sample's model-side input: token slots plus standardized covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub tokens: Vec<u32>,
    pub covariates: Vec<f64>,
}

impl ModelInput {
    pub fn from_features(f: &FeatureVector) -> Self {
        ModelInput {
            tokens: f.lineup.0.to_vec(),
            covariates: f.covariates.to_vec(),
        }
    }
}

/// A training sample: input plus scaled targets (y_h, y_a).
pub type Sample = (ModelInput, [f64; 2]);

/// The trained model: embedding matrix (row 0 is the fixed null token),
/// dense layers, normalization statistics and config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    /// Row-major `(vocab_size + 1) x embedding_dim`.
    pub embedding: Vec<f64>,
    pub layers: Vec<DenseLayer>,
    pub stats: NormalizationStats,
    pub config: ModelConfig,
}

/// Initializes a model deterministically from `config.seed`: embedding rows
/// are N(0,1), row 0 is zeroed, dense weights are uniform
/// `(-1/sqrt(fan_in), +1/sqrt(fan_in))` with zero biases.
pub fn init_model(config: ModelConfig, stats: NormalizationStats) -> Result<ScoreModel, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = config.embedding_dim;
    let rows = config.vocab_size + 1;
    let mut embedding = vec![0.0; rows * m];
    for v in embedding.iter_mut().skip(m) {
        *v = StandardNormal.sample(&mut rng);
    }
    let mut layers = Vec::new();
    let mut in_dim = config.input_width();
    for &out_dim in config.hidden_sizes.iter().chain(std::iter::once(&2)) {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        layers.push(DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        });
        in_dim = out_dim;
    }
    Ok(ScoreModel {
        embedding,
        layers,
        stats,
        config,
    })
}

impl ScoreModel {
    pub fn embedding_row(&self, token: u32) -> &[f64] {
        let m = self.config.embedding_dim;
        &self.embedding[token as usize * m..(token as usize + 1) * m]
    }

    /// Flattens the looked-up embedding rows and appends the covariates.
    pub fn embed_input(&self, input: &ModelInput) -> Result<Vec<f64>, ModelError> {
        if input.tokens.len() != self.config.lineup_len
            || input.covariates.len() != self.config.covariate_count
        {
            return Err(ModelError::WidthMismatch {
                expected: self.config.input_width(),
                got: input.tokens.len() * self.config.embedding_dim + input.covariates.len(),
            });
        }
        let mut x = Vec::with_capacity(self.config.input_width());
        for &t in &input.tokens {
            x.extend_from_slice(self.embedding_row(t));
        }
        x.extend_from_slice(&input.covariates);
        Ok(x)
    }

    /// Dense stack over an already-embedded input vector.
    pub fn forward_embedded(&self, x: &[f64]) -> Result<[f64; 2], ModelError> {
        if x.len() != self.config.input_width() {
            return Err(ModelError::WidthMismatch {
                expected: self.config.input_width(),
                got: x.len(),
            });
        }
        let mut act = x.to_vec();
        let mut next = Vec::new();
        let n_layers = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&act, &mut next);
            if i + 1 < n_layers {
                for v in next.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut act, &mut next);
        }
        Ok([act[0], act[1]])
    }

    /// Raw scaled outputs (y_h, y_a) for one input.
    pub fn forward(&self, input: &ModelInput) -> Result<[f64; 2], ModelError> {
        let x = self.embed_input(input)?;
        self.forward_embedded(&x)
    }

    /// Forward keeping pre-activations and activations for backprop.
    fn forward_trace(&self, x: &[f64]) -> Trace {
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers + 1);
        act.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(act.last().unwrap(), &mut z);
            pre.push(z.clone());
            if i + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            act.push(z);
        }
        Trace { pre, act }
    }

    /// Gradient of the selected raw output w.r.t. the embedded input vector.
    pub fn input_gradient(&self, x: &[f64], output_index: usize) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.config.input_width() {
            return Err(ModelError::WidthMismatch {
                expected: self.config.input_width(),
                got: x.len(),
            });
        }
        let trace = self.forward_trace(x);
        let mut seed = vec![0.0; 2];
        seed[output_index] = 1.0;
        Ok(self.backprop_input(&trace, seed))
    }

    /// Backprop of an output-side cotangent down to the input; no parameter
    /// gradients are accumulated.
    fn backprop_input(&self, trace: &Trace, mut delta: Vec<f64>) -> Vec<f64> {
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }
}

struct Trace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
}

/// Sum of home and away squared errors for one sample (scaled units).
pub fn sample_loss(pred: [f64; 2], target: [f64; 2]) -> f64 {
    let dh = pred[0] - target[0];
    let da = pred[1] - target[1];
    dh * dh + da * da
}

/// Mean of [`sample_loss`] over a batch.
pub fn batch_loss(model: &ScoreModel, batch: &[Sample]) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = 0.0;
    for (input, target) in batch {
        total += sample_loss(model.forward(input)?, *target);
    }
    Ok(total / batch.len() as f64)
}

/// Per-layer weight and bias gradients.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of the mean batch loss. Embedding gradients are sparse: only
/// rows referenced by batch tokens appear, and the null row never does.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    pub embedding: HashMap<u32, Vec<f64>>,
}

/// Exact reverse-mode gradients of the mean batch loss w.r.t. every dense
/// weight, bias and referenced embedding row.
pub fn gradients(model: &ScoreModel, batch: &[Sample]) -> Result<GradientSet, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut layer_grads: Vec<LayerGrad> = model
        .layers
        .iter()
        .map(|l| LayerGrad {
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.out_dim],
        })
        .collect();
    let mut emb_grads: HashMap<u32, Vec<f64>> = HashMap::new();
    let m = model.config.embedding_dim;
    let scale = 1.0 / batch.len() as f64;

    for (input, target) in batch {
        let x = model.embed_input(input)?;
        let trace = model.forward_trace(&x);
        let out = trace.act.last().unwrap();
        // d(mean loss)/d(output)
        let mut delta = vec![
            2.0 * (out[0] - target[0]) * scale,
            2.0 * (out[1] - target[1]) * scale,
        ];
        for (l, layer) in model.layers.iter().enumerate().rev() {
            let prev_act = &trace.act[l];
            let lg = &mut layer_grads[l];
            for o in 0..layer.out_dim {
                let d = delta[o];
                lg.bias[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = &mut lg.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, a) in row.iter_mut().zip(prev_act) {
                    *g += d * a;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        // delta now holds the gradient w.r.t. the embedded input
        for (slot, &token) in input.tokens.iter().enumerate() {
            if token == 0 {
                continue; // null row is frozen
            }
            let grad = emb_grads.entry(token).or_insert_with(|| vec![0.0; m]);
            for (g, d) in grad.iter_mut().zip(&delta[slot * m..(slot + 1) * m]) {
                *g += d;
            }
        }
    }
    Ok(GradientSet {
        layers: layer_grads,
        embedding: emb_grads,
    })
}

/// Copies clubs embedding rows into the national model for every player
/// present in both vocabularies (matched by exact full name). Dense weights
/// are left untouched.
pub fn transfer_init(
    mut national_model: ScoreModel,
    clubs_model: &ScoreModel,
    clubs_vocab: &crate::features::PlayerVocabulary,
    national_vocab: &crate::features::PlayerVocabulary,
) -> Result<ScoreModel, ModelError> {
    let m = national_model.config.embedding_dim;
    if m != clubs_model.config.embedding_dim {
        return Err(ModelError::EmbeddingDimMismatch(
            m,
            clubs_model.config.embedding_dim,
        ));
    }
    for (nat_id, name) in national_vocab.iter() {
        if let Some(club_id) = clubs_vocab.id(name) {
            let src = clubs_model.embedding_row(club_id).to_vec();
            let dst =
                &mut national_model.embedding[nat_id as usize * m..(nat_id as usize + 1) * m];
            dst.copy_from_slice(&src);
        }
    }
    Ok(national_model)
}

/// Integer score prediction plus the raw (unrounded) goal values kept for
/// tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub home_goals: u32,
    pub away_goals: u32,
    pub raw_home: f64,
    pub raw_away: f64,
}

/// De-scales the raw outputs, clamps at 0 and rounds half-up.
pub fn predict_score(model: &ScoreModel, f: &FeatureVector) -> Result<Prediction, ModelError> {
    predict_input(model, &ModelInput::from_features(f))
}

pub fn predict_input(model: &ScoreModel, input: &ModelInput) -> Result<Prediction, ModelError> {
    let out = model.forward(input)?;
    let raw_home = model.stats.unscale_goals(out[0]).max(0.0);
    let raw_away = model.stats.unscale_goals(out[1]).max(0.0);
    Ok(Prediction {
        home_goals: raw_home.round() as u32,
        away_goals: raw_away.round() as u32,
        raw_home,
        raw_away,
    })
}

/// Test sample: input plus actual final score in goals.
pub type EvalSample = (ModelInput, (u32, u32));

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse_home: f64,
    pub mape_home: f64,
    pub rmse_away: f64,
    pub mape_away: f64,
    /// Matches skipped by MAPE because the actual score was 0.
    pub mape_skipped: usize,
}

/// RMSE (unrounded predictions, goal units) and MAPE as a fraction.
/// Matches with a 0-goal actual are skipped by MAPE and counted.
pub fn evaluate(model: &ScoreModel, test: &[EvalSample]) -> Result<Metrics, ModelError> {
    if test.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    let mut se = [0.0f64; 2];
    let mut ape = [0.0f64; 2];
    let mut ape_n = [0usize; 2];
    let mut skipped = 0usize;
    for (input, (actual_h, actual_a)) in test {
        let out = model.forward(input)?;
        let pred = [
            model.stats.unscale_goals(out[0]),
            model.stats.unscale_goals(out[1]),
        ];
        let actual = [*actual_h as f64, *actual_a as f64];
        for side in 0..2 {
            let err = pred[side] - actual[side];
            se[side] += err * err;
            if actual[side] == 0.0 {
                skipped += 1;
            } else {
                ape[side] += err.abs() / actual[side];
                ape_n[side] += 1;
            }
        }
    }
    let n = test.len() as f64;
    let mape = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(Metrics {
        rmse_home: (se[0] / n).sqrt(),
        mape_home: mape(ape[0], ape_n[0]),
        rmse_away: (se[1] / n).sqrt(),
        mape_away: mape(ape[1], ape_n[1]),
        mape_skipped: skipped,
    })
}

/// Builds (input, scaled target) training samples from every played match
/// in the dataset. Matches without goals are skipped.
pub fn build_samples(
    dataset: &crate::ingest::Dataset,
    vocab: &crate::features::PlayerVocabulary,
    provider: &dyn crate::features::StrengthProvider,
    roster: Option<&crate::features::Roster>,
    importance: &crate::features::ImportanceTable,
    stats: &NormalizationStats,
) -> Result<Vec<Sample>, ModelError> {
    let mut out = Vec::with_capacity(dataset.matches.len());
    for m in &dataset.matches {
        let (Some(hg), Some(ag)) = (m.home_goals, m.away_goals) else {
            continue;
        };
        let f = crate::features::assemble_features(
            m,
            vocab,
            provider,
            roster,
            importance,
            Some(stats),
        )?;
        out.push((
            ModelInput::from_features(&f),
            [
                stats.scale_goals(hg as f64),
                stats.scale_goals(ag as f64),
            ],
        ));
    }
    Ok(out)
}

/// Same assembly as [`build_samples`] but keeps the integer goals, for
/// [`evaluate`].
pub fn build_eval_samples(
    dataset: &crate::ingest::Dataset,
    vocab: &crate::features::PlayerVocabulary,
    provider: &dyn crate::features::StrengthProvider,
    roster: Option<&crate::features::Roster>,
    importance: &crate::features::ImportanceTable,
    stats: &NormalizationStats,
) -> Result<Vec<EvalSample>, ModelError> {
    let mut out = Vec::with_capacity(dataset.matches.len());
    for m in &dataset.matches {
        let (Some(hg), Some(ag)) = (m.home_goals, m.away_goals) else {
            continue;
        };
        let f = crate::features::assemble_features(
            m,
            vocab,
            provider,
            roster,
            importance,
            Some(stats),
        )?;
        out.push((ModelInput::from_features(&f), (hg, ag)));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: ScoreModel,
}

/// Writes the model as a versioned JSON artifact. The round trip is
/// bit-exact on all weights, stats and config.
pub fn save_model(model: &ScoreModel, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let writer = std::io::BufWriter::new(file);
    serde_json::to_writer(
        writer,
        &ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: model.clone(),
        },
    )
    .map_err(|e| ModelError::Corrupt(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ScoreModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    // peek at the version first for a precise error
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::Corrupt("missing version field".into()))? as u32;
    if found != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version {
            found,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    Ok(file.model)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    /// A small config useful for gradient checks (well under 1e3 params).
    pub fn tiny_config(seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: 5,
            embedding_dim: 2,
            lineup_len: 4,
            covariate_count: 3,
            hidden_sizes: vec![6, 4],
            seed,
            learning_rate: 1e-2,
            batch_size: 4,
            max_epochs: 50,
            patience: 1,
        }
    }

    pub fn tiny_model(seed: u64) -> ScoreModel {
        init_model(tiny_config(seed), NormalizationStats::identity()).unwrap()
    }

    pub fn random_input(rng: &mut impl Rng, config: &ModelConfig) -> ModelInput {
        ModelInput {
            tokens: (0..config.lineup_len)
                .map(|_| rng.gen_range(0..=config.vocab_size as u32))
                .collect(),
            covariates: (0..config.covariate_count)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        }
    }

    /// Central finite difference of the mean batch loss w.r.t. one mutable
    /// parameter, used as the independent oracle for gradient checks.
    pub fn finite_diff(
        model: &ScoreModel,
        batch: &[Sample],
        h: f64,
        set: impl Fn(&mut ScoreModel, f64),
        get: impl Fn(&ScoreModel) -> f64,
    ) -> f64 {
        let base = get(model);
        let mut plus = model.clone();
        set(&mut plus, base + h);
        let mut minus = model.clone();
        set(&mut minus, base - h);
        (batch_loss(&plus, batch).unwrap() - batch_loss(&minus, batch).unwrap()) / (2.0 * h)
    }
}

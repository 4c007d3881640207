//! Multinomial logistic regression over hashed window features.
//!
//! This is the trainable local classifier: it consumes the same windows as
//! the prompt-based backends and plugs into the same pipeline.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::features::{featurize, SparseVector, MIN_FEATURE_DIM};
use crate::corpus::CodeFile;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::window::{build_window, center_truncate, ContextWindow, WindowConfig};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub feature_dim: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// L2 penalty coefficient on the weight matrix (not the bias).
    pub l2: f64,
    pub window: WindowConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.5,
            feature_dim: 1 << 16,
            seed: 7,
            batch_size: 16,
            l2: 0.0,
            window: WindowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    format_version: u32,
    /// Row-major `classes.len() x feature_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub feature_dim: usize,
    pub seed: u64,
    pub classes: Vec<Label>,
    pub window: WindowConfig,
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    /// Index into the model's class order.
    pub class: usize,
}

impl LocalModel {
    pub fn zeros(feature_dim: usize, window: WindowConfig, seed: u64) -> Self {
        let classes = Label::CLASSES.to_vec();
        LocalModel {
            format_version: FORMAT_VERSION,
            weights: vec![0.0; classes.len() * feature_dim],
            bias: vec![0.0; classes.len()],
            feature_dim,
            seed,
            classes,
            window,
            epoch_losses: Vec::new(),
            config_hash: String::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                found: x.dim,
            });
        }
        Ok((0..self.num_classes())
            .map(|k| {
                let row = &self.weights[k * self.feature_dim..(k + 1) * self.feature_dim];
                self.bias[k] + x.entries.iter().map(|&(i, v)| row[i as usize] * v).sum::<f64>()
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self)?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: LocalModel = bincode::deserialize(&bytes)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported model format {}",
                path.display(),
                model.format_version
            )));
        }
        Ok(model)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Argmax with ties going to the earliest class.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient of [`loss_and_gradient`], laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean softmax cross-entropy over `examples` plus `l2/2 * |W|^2`, and its
/// gradient with respect to weights and bias.
pub fn loss_and_gradient(model: &LocalModel, examples: &[&Example], l2: f64) -> Result<(f64, Gradient)> {
    let k = model.num_classes();
    let d = model.feature_dim;
    let mut grad = Gradient {
        weights: vec![0.0; k * d],
        bias: vec![0.0; k],
    };
    let mut loss = 0.0;
    let scale = 1.0 / examples.len() as f64;
    for ex in examples {
        let probs = softmax(&model.logits(&ex.features)?);
        loss -= probs[ex.class].max(f64::MIN_POSITIVE).ln();
        for (c, p) in probs.iter().enumerate() {
            let residual = (p - if c == ex.class { 1.0 } else { 0.0 }) * scale;
            grad.bias[c] += residual;
            let row = &mut grad.weights[c * d..(c + 1) * d];
            for &(i, v) in &ex.features.entries {
                row[i as usize] += residual * v;
            }
        }
    }
    loss *= scale;
    if l2 > 0.0 {
        loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
        for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
            *g += l2 * w;
        }
    }
    Ok((loss, grad))
}

fn full_loss(model: &LocalModel, examples: &[Example], l2: f64) -> Result<f64> {
    let mut loss = 0.0;
    for ex in examples {
        let probs = softmax(&model.logits(&ex.features)?);
        loss -= probs[ex.class].max(f64::MIN_POSITIVE).ln();
    }
    loss /= examples.len() as f64;
    if l2 > 0.0 {
        loss += 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    }
    Ok(loss)
}

/// One gradient step on a batch. Equivalent to subtracting
/// `lr * loss_and_gradient(..).1` but touches only the non-zero feature
/// coordinates of the batch.
fn step(model: &mut LocalModel, batch: &[&Example], lr: f64, l2: f64) -> Result<()> {
    let d = model.feature_dim;
    let scale = 1.0 / batch.len() as f64;
    let residuals = batch
        .iter()
        .map(|ex| {
            let mut r = softmax(&model.logits(&ex.features)?);
            r[ex.class] -= 1.0;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    if l2 > 0.0 {
        let decay = 1.0 - lr * l2;
        model.weights.iter_mut().for_each(|w| *w *= decay);
    }
    for (ex, r) in batch.iter().zip(&residuals) {
        for (c, rc) in r.iter().enumerate() {
            let delta = lr * rc * scale;
            model.bias[c] -= delta;
            let row = &mut model.weights[c * d..(c + 1) * d];
            for &(i, v) in &ex.features.entries {
                row[i as usize] -= delta * v;
            }
        }
    }
    Ok(())
}

/// Mini-batch gradient descent on pre-built examples. The seed fixes the
/// per-epoch shuffle; weights start at zero, so equal seeds give
/// bit-identical models.
pub fn fit(examples: &[Example], config: &TrainConfig) -> Result<LocalModel> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut model = LocalModel::zeros(config.feature_dim, config.window, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = config.batch_size.max(1);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            step(&mut model, &refs, config.learning_rate, config.l2)?;
        }
        model.epoch_losses.push(full_loss(&model, examples, config.l2)?);
    }
    Ok(model)
}

/// Window for line `index`, truncated to the token budget.
pub fn prepared_window(file: &CodeFile, index: usize, window: &WindowConfig) -> Result<ContextWindow> {
    Ok(center_truncate(&build_window(file, index, window)?, window))
}

pub fn examples_from_corpus(files: &[CodeFile], config: &TrainConfig) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for file in files {
        for line in &file.lines {
            let gold = line.gold.ok_or_else(|| Error::UnlabeledLine {
                file_id: file.file_id.clone(),
                line: line.line_no,
            })?;
            let w = prepared_window(file, line.line_no, &config.window)?;
            out.push(Example {
                features: featurize(&w, config.feature_dim),
                class: gold.index(),
            });
        }
    }
    Ok(out)
}

/// Trains on every line of `train` (normally the train split).
pub fn train_local(train: &[CodeFile], config: &TrainConfig) -> Result<LocalModel> {
    if config.feature_dim < MIN_FEATURE_DIM {
        return Err(Error::Config(format!(
            "feature_dim must be at least {MIN_FEATURE_DIM}"
        )));
    }
    config.window.validate()?;
    let examples = examples_from_corpus(train, config)?;
    let mut model = fit(&examples, config)?;
    model.config_hash = crate::prompt::sha256_hex(serde_json::to_string(config)?.as_bytes());
    Ok(model)
}

pub fn predict_features(model: &LocalModel, x: &SparseVector) -> Result<(Label, Vec<f64>)> {
    let probs = softmax(&model.logits(x)?);
    Ok((model.classes[argmax(&probs)], probs))
}

/// Most probable class and the full probability vector in class order.
pub fn predict_local(model: &LocalModel, window: &ContextWindow) -> Result<(Label, Vec<f64>)> {
    let w = center_truncate(window, &model.window);
    predict_features(model, &featurize(&w, model.feature_dim))
}

pub fn accuracy(model: &LocalModel, examples: &[Example]) -> Result<f64> {
    let mut correct = 0;
    for ex in examples {
        if predict_features(model, &ex.features)?.0 == model.classes[ex.class] {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Split};

    fn tiny_corpus() -> Vec<CodeFile> {
        let mut f = CodeFile::from_lines(
            "a",
            Language::R,
            Split::Train,
            &["library(x)", "d <- read.csv(p)", "# note", "plot(d)"],
        );
        let gold = [Label::LoadingLibrary, Label::LoadingData, Label::Comment, Label::Visualization];
        for (l, g) in f.lines.iter_mut().zip(gold) {
            l.gold = Some(g);
        }
        vec![f]
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 20,
            feature_dim: 1 << 10,
            window: WindowConfig::with_context(1),
            ..Default::default()
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = LocalModel::zeros(1 << 10, WindowConfig::default(), 0);
        let w = prepared_window(&tiny_corpus()[0], 1, &WindowConfig::default()).unwrap();
        let (label, probs) = predict_local(&model, &w).unwrap();
        assert_eq!(label, Label::CLASSES[0]);
        for p in &probs {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3, -1.2, 4.0, 0.0, 2.2, -0.5, 1.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.4).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn fits_tiny_corpus() {
        let model = train_local(&tiny_corpus(), &small_config()).unwrap();
        let examples = examples_from_corpus(&tiny_corpus(), &small_config()).unwrap();
        assert_eq!(accuracy(&model, &examples).unwrap(), 1.0);
        assert!(model.epoch_losses.last().unwrap() < &model.epoch_losses[0]);
        assert!(model.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn errors() {
        assert!(matches!(fit(&[], &small_config()), Err(Error::EmptyTrainingSet)));
        let mut corpus = tiny_corpus();
        corpus[0].lines[2].gold = None;
        assert!(matches!(
            train_local(&corpus, &small_config()),
            Err(Error::UnlabeledLine { line: 3, .. })
        ));
        let model = LocalModel::zeros(1 << 10, WindowConfig::default(), 0);
        assert!(matches!(
            predict_features(&model, &SparseVector::zeros(1 << 11)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn save_and_load_round_trip() {
        let model = train_local(&tiny_corpus(), &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        assert_eq!(LocalModel::load(&path).unwrap(), model);
    }
}

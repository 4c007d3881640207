//! Command implementations behind the `codeseg` binary.
//!
//! Every command is a function of a [`RunConfig`] and its input files, so
//! identical configs and fixtures produce identical output bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::fewshot::build_pool;
use crate::backends::local::{accuracy, examples_from_corpus, fit};
use crate::backends::remote::RemoteConfig;
use crate::backends::{
    Backend, ClassifyOptions, FailureMode, HeuristicBackend, LocalBackend, LocalModel, PoolItem, ReplayBackend,
    ResponseCache, TrainConfig,
};
use crate::corpus::{adjudicate, corpus_stats, import_script, load_corpus, write_corpus, AgreementReport, CodeFile, CorpusStats, Language, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, render_table, RunInfo, RunReport};
use crate::pipeline::{run, Approach, FileOutcome, PipelineOptions};
use crate::prompt::{sha256_hex, template_hash};
use crate::rangeseg::RepairPolicy;
use crate::segment::Segment;
use crate::window::{PromptMode, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Heuristic,
    Local,
    Remote,
    Replay,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(BackendKind::Heuristic),
            "local" => Ok(BackendKind::Local),
            "remote" => Ok(BackendKind::Remote),
            "replay" => Ok(BackendKind::Replay),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub feature_dim: usize,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            feature_dim: d.feature_dim,
            batch_size: d.batch_size,
            l2: d.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    pub approach: Approach,
    pub backend: BackendKind,
    pub context: usize,
    /// Context sizes for a sweep; empty means just `context`.
    pub contexts: Vec<usize>,
    pub max_tokens: usize,
    pub reserved_tokens: usize,
    pub mode: PromptMode,
    pub shots: usize,
    pub repair: RepairPolicy,
    pub seed: u64,
    pub failure: FailureMode,
    pub invalid_retries: usize,
    pub max_in_flight: usize,
    /// Embedding dimension for demonstration retrieval.
    pub fewshot_dim: usize,
    pub language: Option<Language>,
    pub replay: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub train: TrainSettings,
    pub remote: RemoteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let window = WindowConfig::default();
        RunConfig {
            run_id: None,
            approach: Approach::LineByLine,
            backend: BackendKind::Heuristic,
            context: window.context,
            contexts: Vec::new(),
            max_tokens: window.max_tokens,
            reserved_tokens: window.reserved_tokens,
            mode: PromptMode::ZeroShot,
            shots: 16,
            repair: RepairPolicy::default(),
            seed: 7,
            failure: FailureMode::Strict,
            invalid_retries: 1,
            max_in_flight: 4,
            fewshot_dim: 1 << 12,
            language: None,
            replay: None,
            model: None,
            cache: None,
            train: TrainSettings::default(),
            remote: RemoteConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == PromptMode::CarpFewShot && self.shots == 0 {
            return Err(Error::Config("carp_few_shot needs shots >= 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        for &c in self.contexts.iter().chain([&self.context]) {
            self.window(c).validate()?;
        }
        Ok(())
    }

    pub fn window(&self, context: usize) -> WindowConfig {
        WindowConfig {
            context,
            max_tokens: self.max_tokens,
            reserved_tokens: self.reserved_tokens,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            feature_dim: self.train.feature_dim,
            seed: self.seed,
            batch_size: self.train.batch_size,
            l2: self.train.l2,
            window: self.window(self.context),
        }
    }

    /// SHA-256 of the canonical JSON form. Replay fixtures and model files
    /// enter by content rather than location; the cache location does not
    /// affect results and is left out.
    pub fn config_hash(&self) -> String {
        let digest = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| match fs::read(p) {
                Ok(bytes) => sha256_hex(&bytes),
                Err(_) => p.display().to_string(),
            })
        };
        let mut value = serde_json::to_value(self).expect("config serializes");
        value["replay"] = digest(&self.replay).into();
        value["model"] = digest(&self.model).into();
        value["cache"] = serde_json::Value::Null;
        sha256_hex(value.to_string().as_bytes())
    }

    /// Context sizes to run: the sweep list, or the single context.
    /// Range-based runs ignore context and run once.
    pub fn context_list(&self) -> Vec<Option<usize>> {
        match self.approach {
            Approach::RangeBased => vec![None],
            Approach::LineByLine if self.contexts.is_empty() => vec![Some(self.context)],
            Approach::LineByLine => self.contexts.iter().map(|&c| Some(c)).collect(),
        }
    }

    fn pipeline_options(&self, context: Option<usize>) -> PipelineOptions {
        PipelineOptions {
            approach: self.approach,
            window: self.window(context.unwrap_or(self.context)),
            classify: ClassifyOptions {
                mode: self.mode,
                failure: self.failure,
                invalid_retries: self.invalid_retries,
            },
            shots: self.shots,
            feature_dim: self.fewshot_dim,
            repair: self.repair,
            max_in_flight: self.max_in_flight,
        }
    }
}

/// Loads a JSONL corpus, or imports a raw `.R`/`.py` script as a one-file
/// corpus.
pub fn load_input(path: &Path, language: Option<Language>) -> Result<Vec<CodeFile>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match Language::from_extension(ext) {
        Some(lang) => {
            let source = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "script".into());
            Ok(vec![import_script(id, lang, &source).0])
        }
        None => load_corpus(path, language),
    }
}

fn split_files(corpus: &[CodeFile], split: Split) -> Vec<CodeFile> {
    corpus.iter().filter(|f| f.split == split).cloned().collect()
}

fn open_cache(config: &RunConfig) -> Result<Option<ResponseCache>> {
    config.cache.as_deref().map(ResponseCache::open).transpose()
}

fn build_backend(config: &RunConfig, corpus: &[CodeFile]) -> Result<Box<dyn Backend>> {
    match config.backend {
        BackendKind::Heuristic => Ok(Box::new(HeuristicBackend {
            window: config.window(config.context),
        })),
        BackendKind::Replay => {
            let path = config
                .replay
                .as_deref()
                .ok_or_else(|| Error::Config("replay backend needs a replay fixture path".into()))?;
            Ok(Box::new(ReplayBackend::load(path)?))
        }
        BackendKind::Local => {
            let model = match &config.model {
                Some(path) => LocalModel::load(path)?,
                None => train_model(config, &split_files(corpus, Split::Train))?.0,
            };
            Ok(Box::new(LocalBackend { model }))
        }
        BackendKind::Remote => remote_backend(config),
    }
}

#[cfg(feature = "remote")]
fn remote_backend(config: &RunConfig) -> Result<Box<dyn Backend>> {
    Ok(Box::new(crate::backends::remote::RemoteBackend::new(config.remote.clone())?))
}

#[cfg(not(feature = "remote"))]
fn remote_backend(_: &RunConfig) -> Result<Box<dyn Backend>> {
    Err(Error::Config("built without the `remote` feature".into()))
}

fn demonstration_pool(config: &RunConfig, corpus: &[CodeFile], context: usize) -> Result<Vec<PoolItem>> {
    if config.mode != PromptMode::CarpFewShot {
        return Ok(Vec::new());
    }
    build_pool(&split_files(corpus, Split::Train), &config.window(context), config.fewshot_dim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutput {
    pub file_id: String,
    pub config_hash: String,
    pub segments: Vec<Segment>,
}

/// Source with a comment header before every segment.
pub fn annotate_source(file: &CodeFile, segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&format!("# ---- [{}-{}] {} ----\n", s.start, s.end, s.label));
        for line in &file.lines[s.start - 1..s.end] {
            out.push_str(&line.code);
            out.push('\n');
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn segment_files(config: &RunConfig, corpus: &[CodeFile], files: &[CodeFile], context: Option<usize>) -> Result<Vec<FileOutcome>> {
    let backend = build_backend(config, corpus)?;
    let cache = open_cache(config)?;
    let pool = demonstration_pool(config, corpus, context.unwrap_or(config.context))?;
    run(
        backend.as_ref(),
        cache.as_ref(),
        files,
        &pool,
        &config.pipeline_options(context),
    )
}

/// Segments every file of the input and writes `<file_id>.segments.json`
/// plus an annotated copy of the source to `out_dir`. Returns the number of
/// files written.
pub fn cmd_segment(config: &RunConfig, input: &Path, out_dir: &Path) -> Result<usize> {
    config.validate()?;
    let corpus = load_input(input, config.language)?;
    let outcomes = segment_files(config, &corpus, &corpus, Some(config.context))?;
    let hash = config.config_hash();
    let ext = |f: &CodeFile| match f.language {
        Language::R => "R",
        Language::Python => "py",
    };
    for (file, outcome) in corpus.iter().zip(&outcomes) {
        let json = serde_json::to_string_pretty(&SegmentOutput {
            file_id: file.file_id.clone(),
            config_hash: hash.clone(),
            segments: outcome.segments.clone(),
        })? + "\n";
        write(&out_dir.join(format!("{}.segments.json", file.file_id)), &json)?;
        write(
            &out_dir.join(format!("{}.annotated.{}", file.file_id, ext(file))),
            &annotate_source(file, &outcome.segments),
        )?;
    }
    Ok(corpus.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub context_c: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Runs the configured approach on the test split, once per context in the
/// sweep.
pub fn evaluate(config: &RunConfig, corpus: &[CodeFile]) -> Result<Vec<RunReport>> {
    config.validate()?;
    let test = split_files(corpus, Split::Test);
    if test.is_empty() {
        return Err(Error::Config("corpus has no test split".into()));
    }
    let backend_name = match config.backend {
        BackendKind::Remote => format!("remote:{}", config.remote.model),
        other => serde_json::to_value(other)?.as_str().unwrap_or_default().to_string(),
    };
    let hash = config.config_hash();
    let mut reports = Vec::new();
    for context in config.context_list() {
        let outcomes = segment_files(config, corpus, &test, context)?;
        let predictions: BTreeMap<String, _> = outcomes.into_iter().map(|o| (o.file_id, o.labels)).collect();
        let run_id = config.run_id.clone().unwrap_or_else(|| hash[..12].to_string());
        let info = RunInfo {
            run_id: match context {
                Some(c) if config.contexts.len() > 1 => format!("{run_id}-c{c}"),
                _ => run_id,
            },
            approach: config.approach.as_str().into(),
            mode: config.mode.as_str().into(),
            backend: backend_name.clone(),
            context_c: context,
            config_hash: hash.clone(),
            template_hash: template_hash(),
        };
        reports.push(evaluate_run(&test, &predictions, info)?);
    }
    Ok(reports)
}

/// Writes one report (single run) to `out`, or for a sweep one report per
/// context plus `series.json` into the directory `out`. A rendered table
/// goes next to the reports.
pub fn cmd_evaluate(config: &RunConfig, input: &Path, out: &Path) -> Result<Vec<RunReport>> {
    let corpus = load_input(input, config.language)?;
    let reports = evaluate(config, &corpus)?;
    let table = render_table(&reports);
    if config.approach == Approach::LineByLine && config.contexts.len() > 1 {
        for r in &reports {
            let c = r.info.context_c.unwrap_or_default();
            write(&out.join(format!("report-c{c}.json")), &r.to_json()?)?;
        }
        let series: Vec<SeriesPoint> = reports
            .iter()
            .map(|r| SeriesPoint {
                context_c: r.info.context_c.unwrap_or_default(),
                accuracy: r.metrics.accuracy,
                macro_f1: r.metrics.macro_f1,
            })
            .collect();
        write(&out.join("series.json"), &(serde_json::to_string_pretty(&series)? + "\n"))?;
        write(&out.join("table.txt"), &table)?;
    } else {
        write(out, &reports[0].to_json()?)?;
        write(&out.with_extension("txt"), &table)?;
    }
    Ok(reports)
}

/// Trains on the train split; returns the model and its training accuracy.
pub fn train_model(config: &RunConfig, train: &[CodeFile]) -> Result<(LocalModel, f64)> {
    let tc = config.train_config();
    let examples = examples_from_corpus(train, &tc)?;
    let mut model = fit(&examples, &tc)?;
    model.config_hash = config.config_hash();
    let acc = accuracy(&model, &examples)?;
    Ok((model, acc))
}

pub fn cmd_train(config: &RunConfig, input: &Path, out: &Path) -> Result<f64> {
    config.validate()?;
    let corpus = load_input(input, config.language)?;
    let (model, acc) = train_model(config, &split_files(&corpus, Split::Train))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(out)?;
    Ok(acc)
}

/// Writes the gold-filled corpus to `out` and the agreement report to
/// `<out>.agreement.json`.
pub fn cmd_adjudicate(input: &Path, out: &Path) -> Result<AgreementReport> {
    let corpus = load_corpus(input, None)?;
    let (adjudicated, report) = adjudicate(&corpus)?;
    let mut buf = Vec::new();
    write_corpus(&adjudicated, &mut buf)?;
    write(out, &String::from_utf8(buf).expect("corpus is UTF-8"))?;
    write(
        &out.with_extension("agreement.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    Ok(report)
}

pub fn cmd_stats(input: &Path, language: Option<Language>) -> Result<CorpusStats> {
    corpus_stats(&load_input(input, language)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn few_shot_needs_shots() {
        let c = RunConfig {
            mode: PromptMode::CarpFewShot,
            shots: 0,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_cache_path() {
        let a = RunConfig::default();
        let b = RunConfig {
            cache: Some("x.jsonl".into()),
            ..RunConfig::default()
        };
        let c = RunConfig {
            context: 5,
            ..RunConfig::default()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn range_runs_ignore_context() {
        let c = RunConfig {
            approach: Approach::RangeBased,
            contexts: vec![1, 3],
            ..RunConfig::default()
        };
        assert_eq!(c.context_list(), vec![None]);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig {
            backend: BackendKind::Replay,
            contexts: vec![1, 2],
            replay: Some("r.jsonl".into()),
            ..RunConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<RunConfig>("contxt = 3").is_err());
    }

    #[test]
    fn annotated_source_has_headers() {
        let f = CodeFile::from_lines("f", Language::R, Split::Test, &["library(a)", "x <- 1"]);
        let segs = vec![
            Segment::new(1, 1, crate::label::Label::LoadingLibrary),
            Segment::new(2, 2, crate::label::Label::DataWrangling),
        ];
        assert_eq!(
            annotate_source(&f, &segs),
            "# ---- [1-1] Loading Library ----\nlibrary(a)\n# ---- [2-2] Data Wrangling ----\nx <- 1\n"
        );
    }
}

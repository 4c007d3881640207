//! Classifier backends behind one contract.
//!
//! A backend answers either a single-line query (a context window plus its
//! rendered prompt) or a whole-file query (for range output). Prompt-driven
//! backends read the prompt; the heuristic and local backends read the
//! structured window directly. Every answer is raw text, normalized onto the
//! taxonomy afterwards, so all backends share the same post-processing and
//! scoring path.

pub mod cache;
pub mod features;
pub mod fewshot;
pub mod heuristic;
pub mod local;
pub mod normalize;
pub mod remote;
pub mod replay;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::CodeFile;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rangeseg::format_spans;
use crate::segment::consolidate;
use crate::window::{build_window, center_truncate, render_line_prompt, ContextWindow, PromptMode, WindowConfig};

pub use cache::{CacheRecord, ResponseCache};
pub use fewshot::{select_fewshot, Demonstration, PoolItem};
pub use heuristic::heuristic_classify;
pub use local::{predict_local, train_local, LocalModel, TrainConfig};
pub use normalize::normalize_label;
pub use replay::ReplayBackend;

#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    Line {
        window: &'a ContextWindow,
        prompt: &'a str,
    },
    File {
        file: &'a CodeFile,
        prompt: &'a str,
    },
}

impl Query<'_> {
    pub fn prompt(&self) -> &str {
        match self {
            Query::Line { prompt, .. } | Query::File { prompt, .. } => prompt,
        }
    }
}

pub trait Backend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> String;

    /// Input limit as `(max_tokens, reserved_tokens)`. Backends that declare
    /// one get token-budget centering; `None` means effectively unlimited.
    fn token_limit(&self) -> Option<(usize, usize)> {
        None
    }

    fn respond(&self, query: &Query<'_>) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub raw_text: String,
    pub label: Label,
    pub latency: Duration,
    pub cached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureMode {
    /// Transport failures abort the run.
    #[default]
    Strict,
    /// Transport failures become `Invalid` predictions.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub mode: PromptMode,
    pub failure: FailureMode,
    /// Extra queries allowed before an unmatchable answer is accepted.
    pub invalid_retries: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            mode: PromptMode::ZeroShot,
            failure: FailureMode::Strict,
            invalid_retries: 1,
        }
    }
}

fn is_transport_error(e: &Error) -> bool {
    matches!(
        e,
        Error::BackendUnavailable { .. } | Error::Timeout { .. } | Error::ReplayMiss(_)
    )
}

/// Asks the backend, consulting and filling the cache. Answers rejected by
/// `accept` are retried up to `retries` times; the last answer is kept.
pub fn ask(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    query: &Query<'_>,
    retries: usize,
    accept: impl Fn(&str) -> bool,
) -> Result<(String, bool)> {
    let id = backend.id();
    if let Some(hit) = cache.and_then(|c| c.get(&id, query.prompt())) {
        return Ok((hit.raw_text, true));
    }
    let mut raw = backend.respond(query)?;
    for _ in 0..retries {
        if accept(&raw) {
            break;
        }
        raw = backend.respond(query)?;
    }
    if let Some(c) = cache {
        c.put(CacheRecord::new(&id, query.prompt(), &raw))?;
    }
    Ok((raw, false))
}

/// Classifies the target line of `window`.
pub fn classify_line(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    window: &ContextWindow,
    demonstrations: &[Demonstration],
    options: &ClassifyOptions,
) -> Result<BackendResponse> {
    let started = Instant::now();
    let window = match backend.token_limit() {
        Some((max_tokens, reserved_tokens)) => center_truncate(
            window,
            &WindowConfig {
                context: window.previous.len().max(window.next.len()),
                max_tokens,
                reserved_tokens,
            },
        ),
        None => window.clone(),
    };
    let prompt = render_line_prompt(&window, options.mode, demonstrations)?;
    let query = Query::Line {
        window: &window,
        prompt: &prompt,
    };
    match ask(backend, cache, &query, options.invalid_retries, |raw| {
        normalize_label(raw).is_valid()
    }) {
        Ok((raw_text, cached)) => Ok(BackendResponse {
            label: normalize_label(&raw_text),
            raw_text,
            latency: started.elapsed(),
            cached,
        }),
        Err(e) if options.failure == FailureMode::Lenient && is_transport_error(&e) => {
            log::warn!("{e}; recording Invalid");
            Ok(BackendResponse {
                raw_text: String::new(),
                label: Label::Invalid,
                latency: started.elapsed(),
                cached: false,
            })
        }
        Err(e) => Err(e),
    }
}

/// Whole-file range request. Lenient mode turns transport failures into an
/// empty answer, which later fails range parsing.
pub fn request_ranges(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    file: &CodeFile,
    prompt: &str,
    options: &ClassifyOptions,
) -> Result<(String, bool)> {
    let query = Query::File { file, prompt };
    match ask(backend, cache, &query, options.invalid_retries, |raw| {
        crate::rangeseg::parse_ranges(raw).is_ok()
    }) {
        Err(e) if options.failure == FailureMode::Lenient && is_transport_error(&e) => {
            log::warn!("{e}; recording empty range output for {}", file.file_id);
            Ok((String::new(), false))
        }
        other => other,
    }
}

/// Classifies every line of `file` with `per_line` and formats the result
/// as range output, for window-based backends answering file queries.
fn ranges_by_lines(
    file: &CodeFile,
    window: &WindowConfig,
    per_line: impl Fn(&ContextWindow) -> Result<Label>,
) -> Result<String> {
    let mut labels = Vec::with_capacity(file.len());
    for line in &file.lines {
        labels.push(per_line(&build_window(file, line.line_no, window)?)?);
    }
    Ok(format_spans(&consolidate(&labels)?))
}

/// Rule-cascade baseline.
#[derive(Debug, Clone, Default)]
pub struct HeuristicBackend {
    pub window: WindowConfig,
}

impl Backend for HeuristicBackend {
    fn id(&self) -> String {
        "heuristic".into()
    }

    fn respond(&self, query: &Query<'_>) -> Result<String> {
        match query {
            Query::Line { window, .. } => Ok(heuristic_classify(window).to_string()),
            Query::File { file, .. } => {
                ranges_by_lines(file, &self.window, |w| Ok(heuristic_classify(w)))
            }
        }
    }
}

/// Trained local classifier.
#[derive(Debug, Clone)]
pub struct LocalBackend {
    pub model: LocalModel,
}

impl Backend for LocalBackend {
    fn id(&self) -> String {
        format!("local:{}", self.model.config_hash)
    }

    fn token_limit(&self) -> Option<(usize, usize)> {
        Some((self.model.window.max_tokens, self.model.window.reserved_tokens))
    }

    fn respond(&self, query: &Query<'_>) -> Result<String> {
        match query {
            Query::Line { window, .. } => Ok(predict_local(&self.model, window)?.0.to_string()),
            Query::File { file, .. } => ranges_by_lines(file, &self.model.window, |w| {
                Ok(predict_local(&self.model, w)?.0)
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Split};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Scripted {
        answers: Vec<&'static str>,
        calls: AtomicUsize,
    }

    impl Backend for Scripted {
        fn id(&self) -> String {
            "scripted".into()
        }
        fn respond(&self, _: &Query<'_>) -> Result<String> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.answers[i.min(self.answers.len() - 1)].to_string())
        }
    }

    struct Down;

    impl Backend for Down {
        fn id(&self) -> String {
            "down".into()
        }
        fn respond(&self, _: &Query<'_>) -> Result<String> {
            Err(Error::BackendUnavailable {
                backend: "down".into(),
                reason: "connection refused".into(),
            })
        }
    }

    fn window() -> ContextWindow {
        let f = CodeFile::from_lines("f", Language::R, Split::Test, &["library(mgcv)", "x <- 1"]);
        build_window(&f, 1, &WindowConfig::with_context(1)).unwrap()
    }

    #[test]
    fn cache_hit_on_second_call() {
        let backend = Scripted {
            answers: vec!["Loading Library"],
            calls: AtomicUsize::new(0),
        };
        let cache = ResponseCache::in_memory();
        let opts = ClassifyOptions::default();
        let first = classify_line(&backend, Some(&cache), &window(), &[], &opts).unwrap();
        let second = classify_line(&backend, Some(&cache), &window(), &[], &opts).unwrap();
        assert_eq!(first.label, Label::LoadingLibrary);
        assert!(!first.cached && second.cached);
        assert_eq!(first.label, second.label);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn invalid_answer_is_retried_once() {
        let backend = Scripted {
            answers: vec!["This line loads a package.", "Loading Library"],
            calls: AtomicUsize::new(0),
        };
        let r = classify_line(&backend, None, &window(), &[], &ClassifyOptions::default()).unwrap();
        assert_eq!(r.label, Label::LoadingLibrary);

        let backend = Scripted {
            answers: vec!["a description", "another description"],
            calls: AtomicUsize::new(0),
        };
        let r = classify_line(&backend, None, &window(), &[], &ClassifyOptions::default()).unwrap();
        assert_eq!(r.label, Label::Invalid);
        assert_eq!(r.raw_text, "another description");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn strict_and_lenient_failures() {
        let strict = ClassifyOptions::default();
        assert!(matches!(
            classify_line(&Down, None, &window(), &[], &strict),
            Err(Error::BackendUnavailable { .. })
        ));
        let lenient = ClassifyOptions {
            failure: FailureMode::Lenient,
            ..strict
        };
        let r = classify_line(&Down, None, &window(), &[], &lenient).unwrap();
        assert_eq!(r.label, Label::Invalid);
    }

    #[test]
    fn heuristic_backend_answers_files_with_ranges() {
        let f = CodeFile::from_lines(
            "f",
            Language::R,
            Split::Test,
            &["library(a)", "library(b)", "d <- read.csv(p)"],
        );
        let raw = HeuristicBackend::default()
            .respond(&Query::File { file: &f, prompt: "" })
            .unwrap();
        assert_eq!(raw, "Range [1-2] for Loading Library\nRange [3-3] for Loading Data");
    }
}

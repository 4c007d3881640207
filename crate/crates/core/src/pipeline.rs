//! Runs an approach over a corpus with a bounded number of in-flight backend
//! requests and reassembles answers in file and line order.

use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backends::features::featurize;
use crate::backends::{classify_line, request_ranges, select_fewshot, Backend, ClassifyOptions, PoolItem, ResponseCache};
use crate::corpus::CodeFile;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rangeseg::{expand_to_lines, parse_ranges, render_range_prompt, repair_ranges, RepairPolicy};
use crate::segment::{consolidate, Segment};
use crate::window::{build_window, PromptMode, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    #[default]
    LineByLine,
    RangeBased,
}

impl Approach {
    pub fn as_str(self) -> &'static str {
        match self {
            Approach::LineByLine => "line_by_line",
            Approach::RangeBased => "range_based",
        }
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" | "line_by_line" => Ok(Approach::LineByLine),
            "range" | "range_based" => Ok(Approach::RangeBased),
            other => Err(Error::Config(format!("unknown approach {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub approach: Approach,
    pub window: WindowConfig,
    pub classify: ClassifyOptions,
    /// Demonstrations per query in few-shot mode.
    pub shots: usize,
    pub feature_dim: usize,
    pub repair: RepairPolicy,
    pub max_in_flight: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            approach: Approach::LineByLine,
            window: WindowConfig::default(),
            classify: ClassifyOptions::default(),
            shots: 16,
            feature_dim: 1 << 12,
            repair: RepairPolicy::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileOutcome {
    pub file_id: String,
    pub labels: Vec<Label>,
    pub segments: Vec<Segment>,
    /// Range output lines that matched no production.
    pub parse_failures: Vec<String>,
    /// Whether range output needed repair to cover the file.
    pub repaired: bool,
}

impl FileOutcome {
    fn from_labels(file_id: &str, labels: Vec<Label>) -> Result<Self> {
        Ok(FileOutcome {
            file_id: file_id.to_string(),
            segments: consolidate(&labels)?,
            labels,
            parse_failures: Vec::new(),
            repaired: false,
        })
    }
}

/// Applies `job` to `0..count` on at most `workers` threads. Results come
/// back in index order; on failure the error of the lowest failing index is
/// returned and remaining work is abandoned.
pub fn run_bounded<T: Send>(
    count: usize,
    workers: usize,
    job: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..count).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, count.max(1)) {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let r = job(i);
                if r.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    // Indices are claimed in order, so every unfinished slot lies after a
    // failed one.
    let mut out = Vec::with_capacity(count);
    for r in results.into_inner().unwrap() {
        match r {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            None => unreachable!("job skipped without an earlier failure"),
        }
    }
    Ok(out)
}

/// Classifies every line of every file, one backend query per line.
pub fn run_line_by_line(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    files: &[CodeFile],
    pool: &[PoolItem],
    options: &PipelineOptions,
) -> Result<Vec<FileOutcome>> {
    options.window.validate()?;
    let jobs: Vec<(usize, usize)> = files
        .iter()
        .enumerate()
        .flat_map(|(f, file)| file.lines.iter().map(move |l| (f, l.line_no)))
        .collect();
    let labels = run_bounded(jobs.len(), options.max_in_flight, |j| {
        let (f, line_no) = jobs[j];
        let window = build_window(&files[f], line_no, &options.window)?;
        let demos = match options.classify.mode {
            PromptMode::ZeroShot => Vec::new(),
            PromptMode::CarpFewShot => {
                let embedding = featurize(&window, options.feature_dim);
                select_fewshot(pool, &window, &embedding, options.shots)?
            }
        };
        Ok(classify_line(backend, cache, &window, &demos, &options.classify)?.label)
    })?;
    let mut labels = labels.into_iter();
    files
        .iter()
        .map(|file| FileOutcome::from_labels(&file.file_id, labels.by_ref().take(file.len()).collect()))
        .collect()
}

/// Converts one range answer into per-line labels under `policy`. Under the
/// repairing policy an answer without any range labels the whole file
/// Invalid.
pub fn labels_from_ranges(raw: &str, n: usize, policy: RepairPolicy) -> Result<FileOutcome> {
    let (spans, failures) = match parse_ranges(raw) {
        Ok(p) => (p.spans, p.failures),
        Err(Error::NoRangesFound) if policy == RepairPolicy::FirstWinsFillInvalid => {
            (Vec::new(), raw.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect())
        }
        Err(e) => return Err(e),
    };
    let repaired = repair_ranges(&spans, n, policy)?;
    let labels = expand_to_lines(&repaired, n)?;
    let mut sorted = spans.clone();
    sorted.sort_by_key(|s| s.start);
    Ok(FileOutcome {
        file_id: String::new(),
        segments: consolidate(&labels)?,
        labels,
        parse_failures: failures,
        repaired: sorted != repaired,
    })
}

/// One whole-file query per file.
pub fn run_range_based(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    files: &[CodeFile],
    options: &PipelineOptions,
) -> Result<Vec<FileOutcome>> {
    run_bounded(files.len(), options.max_in_flight, |i| {
        let file = &files[i];
        if file.is_empty() {
            return Err(Error::EmptyInput);
        }
        let prompt = render_range_prompt(file);
        let (raw, _) = request_ranges(backend, cache, file, &prompt, &options.classify)?;
        let mut outcome = labels_from_ranges(&raw, file.len(), options.repair)?;
        if outcome.repaired {
            log::warn!("{}: range output repaired", file.file_id);
        }
        outcome.file_id = file.file_id.clone();
        Ok(outcome)
    })
}

pub fn run(
    backend: &dyn Backend,
    cache: Option<&ResponseCache>,
    files: &[CodeFile],
    pool: &[PoolItem],
    options: &PipelineOptions,
) -> Result<Vec<FileOutcome>> {
    match options.approach {
        Approach::LineByLine => run_line_by_line(backend, cache, files, pool, options),
        Approach::RangeBased => run_range_based(backend, cache, files, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HeuristicBackend;
    use crate::corpus::{Language, Split};
    use crate::rangeseg::RangeSpan;
    use Label::*;

    fn files() -> Vec<CodeFile> {
        vec![
            CodeFile::from_lines(
                "a",
                Language::R,
                Split::Test,
                &["# load", "library(dplyr)", "d <- read.csv('x.csv')"],
            ),
            CodeFile::from_lines("b", Language::R, Split::Test, &["plot(d)", "write.csv(d, 'o.csv')"]),
        ]
    }

    #[test]
    fn bounded_runner_keeps_order() {
        let out = run_bounded(50, 4, |i| Ok(i * 2)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        assert!(run_bounded(0, 4, Ok).unwrap().is_empty());
    }

    #[test]
    fn bounded_runner_reports_first_error() {
        let r = run_bounded(20, 3, |i| {
            if i == 5 || i == 9 {
                Err(Error::IndexOutOfRange { index: i, len: 0 })
            } else {
                Ok(i)
            }
        });
        assert!(matches!(r, Err(Error::IndexOutOfRange { index: 5, .. })));
    }

    #[test]
    fn concurrency_does_not_change_labels() {
        let backend = HeuristicBackend::default();
        let mut opts = PipelineOptions {
            window: WindowConfig::with_context(1),
            max_in_flight: 1,
            ..Default::default()
        };
        let serial = run_line_by_line(&backend, None, &files(), &[], &opts).unwrap();
        opts.max_in_flight = 8;
        let parallel = run_line_by_line(&backend, None, &files(), &[], &opts).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[0].labels, vec![Comment, LoadingLibrary, LoadingData]);
        assert_eq!(serial[1].labels, vec![Visualization, SavingToOutput]);
    }

    #[test]
    fn both_approaches_agree_for_heuristic() {
        let backend = HeuristicBackend {
            window: WindowConfig::with_context(1),
        };
        let mut opts = PipelineOptions {
            window: WindowConfig::with_context(1),
            ..Default::default()
        };
        let lines = run(&backend, None, &files(), &[], &opts).unwrap();
        opts.approach = Approach::RangeBased;
        let ranges = run(&backend, None, &files(), &[], &opts).unwrap();
        for (l, r) in lines.iter().zip(&ranges) {
            assert_eq!(l.labels, r.labels);
            assert_eq!(l.segments, r.segments);
            assert!(!r.repaired);
        }
    }

    #[test]
    fn range_labels_under_policies() {
        let out = labels_from_ranges("Range [1-1] for Comment\nRange [3-3] for Analysis", 3, RepairPolicy::default()).unwrap();
        assert_eq!(out.labels, vec![Comment, Invalid, Analysis]);
        assert!(out.repaired);
        assert!(matches!(
            labels_from_ranges("Range [1-1] for Comment", 3, RepairPolicy::Strict),
            Err(Error::ValidationFailed(_))
        ));

        let prose = labels_from_ranges("This script loads data.", 2, RepairPolicy::default()).unwrap();
        assert_eq!(prose.labels, vec![Invalid, Invalid]);
        assert_eq!(prose.segments, vec![RangeSpan::new(1, 2, Invalid)]);
        assert!(matches!(
            labels_from_ranges("This script loads data.", 2, RepairPolicy::Strict),
            Err(Error::NoRangesFound)
        ));
    }

    #[test]
    fn few_shot_needs_pool() {
        let mut opts = PipelineOptions::default();
        opts.classify.mode = PromptMode::CarpFewShot;
        let r = run_line_by_line(&HeuristicBackend::default(), None, &files(), &[], &opts);
        assert!(matches!(r, Err(Error::EmptyPool)));
    }
}

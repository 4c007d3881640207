//! Browser bindings: heuristic segmentation of pasted code, range-answer
//! repair, and segment-count statistics.
//!
//! Each exported function has a plain Rust twin returning
//! `Result<String, String>` so the logic is testable off the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use codeseg::backends::heuristic_classify;
use codeseg::cli::annotate_source;
use codeseg::corpus::{import_script, Language};
use codeseg::rangeseg::{expand_to_lines, parse_ranges, repair_ranges, validate_ranges, RangeSpan, RangeValidation, RepairPolicy};
use codeseg::segment::{consolidate, segment_count_stats, Segment};
use codeseg::window::{build_window, WindowConfig};
use codeseg::Label;

#[derive(Serialize)]
struct SegmentView {
    lines: Vec<String>,
    labels: Vec<Label>,
    segments: Vec<Segment>,
    annotated: String,
}

#[derive(Serialize)]
struct RepairView {
    spans: Vec<RangeSpan>,
    unparsed: Vec<String>,
    validation: RangeValidation,
    repaired: Vec<RangeSpan>,
    labels: Vec<Label>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn segment_code(source: &str, language: &str, context: usize) -> Result<String, String> {
    let language: Language = language.parse().map_err(err)?;
    let (file, _) = import_script("input", language, source);
    let config = WindowConfig::with_context(context);
    config.validate().map_err(err)?;
    let labels = (1..=file.len())
        .map(|i| build_window(&file, i, &config).map(|w| heuristic_classify(&w)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let segments = consolidate(&labels).map_err(err)?;
    let view = SegmentView {
        lines: file.lines.iter().map(|l| l.code.clone()).collect(),
        annotated: annotate_source(&file, &segments),
        labels,
        segments,
    };
    serde_json::to_string(&view).map_err(err)
}

pub fn repair_answer(answer: &str, line_count: usize, policy: &str) -> Result<String, String> {
    let policy: RepairPolicy = policy.parse().map_err(err)?;
    let parsed = parse_ranges(answer).map_err(err)?;
    let validation = validate_ranges(&parsed.spans, line_count);
    let repaired = repair_ranges(&parsed.spans, line_count, policy).map_err(err)?;
    let labels = expand_to_lines(&repaired, line_count).map_err(err)?;
    let view = RepairView {
        spans: parsed.spans,
        unparsed: parsed.failures,
        validation,
        repaired,
        labels,
    };
    serde_json::to_string(&view).map_err(err)
}

fn parse_counts(text: &str) -> Result<Vec<usize>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| format!("not a count: {t:?}")))
        .collect()
}

pub fn count_stats(gold: &str, pred: &str) -> Result<String, String> {
    let stats = segment_count_stats(&parse_counts(gold)?, &parse_counts(pred)?).map_err(err)?;
    serde_json::to_string(&stats).map_err(err)
}

#[wasm_bindgen(js_name = segmentCode)]
pub fn segment_code_js(source: &str, language: &str, context: usize) -> Result<String, JsError> {
    segment_code(source, language, context).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = repairAnswer)]
pub fn repair_answer_js(answer: &str, line_count: usize, policy: &str) -> Result<String, JsError> {
    repair_answer(answer, line_count, policy).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = countStats)]
pub fn count_stats_js(gold: &str, pred: &str) -> Result<String, JsError> {
    count_stats(gold, pred).map_err(|e| JsError::new(&e))
}

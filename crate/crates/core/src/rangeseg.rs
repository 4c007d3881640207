//! Whole-file range-based segmentation.
//!
//! Files go out as a JSON array of `{"line", "code"}` objects; the model
//! answers with labeled line ranges in plain text. This module parses those
//! answers, checks them against the file length, repairs gaps and overlaps,
//! and expands ranges back to per-line labels.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::normalize_label;
use crate::corpus::{CodeFile, Language};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::prompt::{fill_template, labels_block, rules_block, RANGE_TEMPLATE};

/// Inclusive line interval with one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RangeSpan {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl RangeSpan {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        assert!(1 <= start && start <= end, "invalid span {start}-{end}");
        RangeSpan { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }
}

impl fmt::Display for RangeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Range [{}-{}] for {}", self.start, self.end, self.label)
    }
}

#[derive(Serialize, Deserialize)]
struct LinePayload<'a> {
    line: usize,
    code: std::borrow::Cow<'a, str>,
}

/// Strict JSON array of `{"line": n, "code": s}` in ascending line order.
pub fn encode_lines(file: &CodeFile) -> String {
    let payload: Vec<LinePayload> = file
        .lines
        .iter()
        .map(|l| LinePayload {
            line: l.line_no,
            code: l.code.as_str().into(),
        })
        .collect();
    serde_json::to_string_pretty(&payload).expect("payload serializes")
}

/// Decodes a line payload. Besides strict JSON this accepts the
/// single-quoted pseudo-JSON often seen in hand-written prompts
/// (`{'line': 1, 'code': 'x'}`), with `{...}` or `[...]` as the outer
/// delimiters.
pub fn decode_lines(text: &str) -> Result<Vec<(usize, String)>> {
    if let Ok(v) = serde_json::from_str::<Vec<LinePayload>>(text) {
        return Ok(v.into_iter().map(|p| (p.line, p.code.into_owned())).collect());
    }
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"\{\s*['"]line['"]\s*:\s*(\d+)\s*,\s*['"]code['"]\s*:\s*'((?:[^'\\]|\\.)*)'\s*\}"#)
            .unwrap()
    });
    let out: Vec<(usize, String)> = re
        .captures_iter(text)
        .map(|c| {
            let code = unescape_single_quoted(&c[2]);
            (c[1].parse().unwrap_or(0), code)
        })
        .collect();
    if out.is_empty() {
        return Err(Error::MalformedRecord {
            location: "line payload".into(),
            reason: "neither JSON nor single-quoted line objects".into(),
        });
    }
    Ok(out)
}

fn unescape_single_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Extra guidance appended to the range prompt's task list.
pub fn default_range_rules() -> Vec<String> {
    vec![
        "Every line from 1 to the last line must belong to exactly one range.".into(),
        "Ranges must not overlap and must be listed in ascending order.".into(),
        "Use only the category names listed above.".into(),
    ]
}

pub fn render_range_prompt(file: &CodeFile) -> String {
    render_range_prompt_with(file, &default_range_rules())
}

/// Renders the range prompt; an empty rule list omits the rules section.
pub fn render_range_prompt_with(file: &CodeFile, rules: &[String]) -> String {
    let rules = if rules.is_empty() {
        String::new()
    } else {
        format!("\nImportant details:\n{}\n", rules_block(rules))
    };
    let payload = encode_lines(file);
    let labels = labels_block();
    fill_template(
        RANGE_TEMPLATE,
        &[
            ("language", language_name(file.language)),
            ("labels", &labels),
            ("rules", &rules),
            ("payload", &payload),
        ],
    )
}

fn language_name(language: Language) -> &'static str {
    language.as_str()
}

/// Spans parsed from a model answer plus the non-empty lines that matched
/// no range production.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRanges {
    pub spans: Vec<RangeSpan>,
    pub failures: Vec<String>,
}

fn range_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*(?:[-*•]\s*|\d+[.)]\s+)?(?:\*\*)?(?:range\s*)?\[\s*(\d+)\s*[-–]\s*(\d+)\s*\](?:\*\*)?\s*(?::|for\b)?\s*(.*?)\s*$",
        )
        .unwrap()
    })
}

/// Parses range answers. Each output line may be `Range [a-b] for <Label>`,
/// `Range [a-b] <Label>` or `[a-b]: <Label>` (case-insensitive, optional
/// list marker). Labels go through [`normalize_label`], so an unrecognized
/// label yields an `Invalid` span.
pub fn parse_ranges(text: &str) -> Result<ParsedRanges> {
    let mut spans = Vec::new();
    let mut failures = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed = range_re().captures(line).and_then(|c| {
            let a: usize = c[1].parse().ok()?;
            let b: usize = c[2].parse().ok()?;
            let label_text = c[3].trim();
            (a >= 1 && a <= b && !label_text.is_empty())
                .then(|| RangeSpan::new(a, b, normalize_label(label_text)))
        });
        match parsed {
            Some(span) => spans.push(span),
            None => failures.push(line.to_string()),
        }
    }
    if spans.is_empty() {
        return Err(Error::NoRangesFound);
    }
    Ok(ParsedRanges { spans, failures })
}

/// One span per output line in the canonical `Range [a-b] for <Label>` form.
pub fn format_spans(spans: &[RangeSpan]) -> String {
    spans
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inclusive line interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeValidation {
    pub gaps: Vec<Interval>,
    pub overlaps: Vec<Interval>,
    pub out_of_bounds: Vec<RangeSpan>,
    pub ok: bool,
}

impl fmt::Display for RangeValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[Interval]| {
            v.iter()
                .map(|i| format!("{}-{}", i.start, i.end))
                .collect::<Vec<_>>()
                .join(", ")
        };
        write!(
            f,
            "gaps [{}], overlaps [{}], out of bounds [{}]",
            list(&self.gaps),
            list(&self.overlaps),
            format_spans(&self.out_of_bounds).replace('\n', "; ")
        )
    }
}

fn runs(lines: impl Iterator<Item = usize>) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    for l in lines {
        match out.last_mut() {
            Some(iv) if iv.end + 1 == l => iv.end = l,
            _ => out.push(Interval { start: l, end: l }),
        }
    }
    out
}

/// Lines of `1..=n` covered by no span (gaps) or by several (overlaps), and
/// spans reaching past `n`.
pub fn validate_ranges(spans: &[RangeSpan], n: usize) -> RangeValidation {
    let mut cover = vec![0u32; n + 1];
    let mut out_of_bounds = Vec::new();
    for s in spans {
        if s.end > n {
            out_of_bounds.push(*s);
        }
        for c in cover.iter_mut().take(s.end.min(n) + 1).skip(s.start) {
            *c += 1;
        }
    }
    let gaps = runs((1..=n).filter(|&l| cover[l] == 0));
    let overlaps = runs((1..=n).filter(|&l| cover[l] > 1));
    let ok = gaps.is_empty() && overlaps.is_empty() && out_of_bounds.is_empty();
    RangeValidation {
        gaps,
        overlaps,
        out_of_bounds,
        ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairPolicy {
    Strict,
    #[default]
    FirstWinsFillInvalid,
}

impl std::str::FromStr for RepairPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(RepairPolicy::Strict),
            "first_wins_fill_invalid" | "first-wins" | "repair" => Ok(RepairPolicy::FirstWinsFillInvalid),
            other => Err(Error::Config(format!("unknown repair policy {other:?}"))),
        }
    }
}

/// Makes `spans` cover `1..=n` disjointly.
///
/// `Strict` returns the spans unchanged or `ValidationFailed`.
/// `FirstWinsFillInvalid` clips spans to `[1, n]`, gives each contested line
/// to the earliest-listed span, and fills each maximal uncovered run with
/// one `Invalid` span. The output is sorted by start line.
pub fn repair_ranges(spans: &[RangeSpan], n: usize, policy: RepairPolicy) -> Result<Vec<RangeSpan>> {
    if policy == RepairPolicy::Strict {
        let v = validate_ranges(spans, n);
        if !v.ok {
            return Err(Error::ValidationFailed(v.to_string()));
        }
        let mut out = spans.to_vec();
        out.sort_by_key(|s| s.start);
        return Ok(out);
    }

    // owner[line] = index of the first span claiming it
    let mut owner: Vec<Option<usize>> = vec![None; n + 1];
    for (i, s) in spans.iter().enumerate() {
        for o in owner.iter_mut().take(s.end.min(n) + 1).skip(s.start) {
            o.get_or_insert(i);
        }
    }
    let mut out: Vec<RangeSpan> = Vec::new();
    let mut run_start = 1;
    for line in 1..=n {
        let last_of_run = line == n || owner[line + 1] != owner[line];
        if last_of_run {
            let label = owner[line].map_or(Label::Invalid, |i| spans[i].label);
            out.push(RangeSpan::new(run_start, line, label));
            run_start = line + 1;
        }
    }
    Ok(out)
}

/// Per-line labels for spans covering `1..=n` disjointly.
pub fn expand_to_lines(spans: &[RangeSpan], n: usize) -> Result<Vec<Label>> {
    let mut out: Vec<Option<Label>> = vec![None; n];
    for s in spans {
        if s.end > n {
            return Err(Error::CoverageViolation {
                n,
                reason: format!("span {}-{} is out of bounds", s.start, s.end),
            });
        }
        for line in s.start..=s.end {
            if out[line - 1].replace(s.label).is_some() {
                return Err(Error::CoverageViolation {
                    n,
                    reason: format!("line {line} is covered twice"),
                });
            }
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| Error::CoverageViolation {
                n,
                reason: format!("line {} is not covered", i + 1),
            })
        })
        .collect()
}

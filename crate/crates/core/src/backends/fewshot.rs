//! Clue-and-reasoning demonstrations and similarity-based selection.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::features::{featurize, SparseVector};
use crate::corpus::CodeFile;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::window::{build_window, ContextWindow, WindowConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub window: ContextWindow,
    pub gold: Label,
    pub clue: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub demo: Demonstration,
    pub embedding: SparseVector,
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z_.][A-Za-z0-9_.]*(?:::[A-Za-z_.][A-Za-z0-9_.]*)?)\s*\(").unwrap())
}

fn assign_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([A-Za-z_.][A-Za-z0-9_.$\[\]]*)\s*(<-|=[^=])").unwrap())
}

fn file_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"["']([^"']+\.[A-Za-z0-9]{1,5})["']"#).unwrap())
}

/// Surface clues of the target line: called functions, assigned names,
/// file paths, and comment markers.
pub fn extract_clues(window: &ContextWindow) -> String {
    let code = &window.target.code;
    let mut parts = Vec::new();
    if code.trim_start().starts_with('#') {
        parts.push("line starts with a comment marker".to_string());
    }
    let calls: Vec<&str> = call_re()
        .captures_iter(code)
        .map(|c| c.get(1).unwrap().as_str())
        .collect();
    if !calls.is_empty() {
        parts.push(format!("calls {}", calls.join(", ")));
    }
    if let Some(c) = assign_re().captures(code) {
        parts.push(format!("assigns to {}", c.get(1).unwrap().as_str()));
    }
    let files: Vec<&str> = file_re()
        .captures_iter(code)
        .map(|c| c.get(1).unwrap().as_str())
        .collect();
    if !files.is_empty() {
        parts.push(format!("refers to file {}", files.join(", ")));
    }
    if parts.is_empty() {
        if code.trim().is_empty() {
            parts.push("blank line; the surrounding lines decide".into());
        } else {
            parts.push("no distinctive keywords; the surrounding lines decide".into());
        }
    }
    parts.join("; ")
}

pub fn reasoning_for(clue: &str, gold: Label) -> String {
    format!(
        "Given these clues ({clue}), the line's role matches {}: {}",
        gold.as_str(),
        gold.definition()
    )
}

/// One demonstration per labeled line of `files` (normally the train split).
pub fn build_pool(files: &[CodeFile], window: &WindowConfig, feature_dim: usize) -> Result<Vec<PoolItem>> {
    let mut pool = Vec::new();
    for file in files {
        for line in &file.lines {
            let Some(gold) = line.gold else { continue };
            let w = build_window(file, line.line_no, window)?;
            let clue = extract_clues(&w);
            let reasoning = reasoning_for(&clue, gold);
            let embedding = featurize(&w, feature_dim);
            pool.push(PoolItem {
                demo: Demonstration {
                    window: w,
                    gold,
                    clue,
                    reasoning,
                },
                embedding,
            });
        }
    }
    Ok(pool)
}

/// Top-`k` pool items by cosine similarity to the query embedding, ties
/// broken by pool order. The query itself (same file and line) is never
/// returned.
pub fn select_fewshot(
    pool: &[PoolItem],
    query: &ContextWindow,
    query_embedding: &SparseVector,
    k: usize,
) -> Result<Vec<Demonstration>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(_, item)| {
            !(item.demo.window.file_id == query.file_id
                && item.demo.window.target.line_no == query.target.line_no)
        })
        .map(|(i, item)| (item.embedding.cosine(query_embedding), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(_, i)| pool[i].demo.clone())
        .collect())
}

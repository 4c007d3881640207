//! Source normalization ahead of segmentation.
//!
//! Two pieces live here: bracket-line migration, which folds lines holding
//! nothing but brackets onto the preceding line, and the tokenizer used for
//! all token accounting (corpus statistics and window budgets).

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;

/// Splits a line into tokens, reported as byte ranges into the line.
pub trait Tokenizer: Send + Sync {
    fn token_spans(&self, line: &str) -> Vec<Range<usize>>;

    fn tokenize<'a>(&self, line: &'a str) -> Vec<&'a str> {
        self.token_spans(line)
            .into_iter()
            .map(|r| &line[r])
            .collect()
    }

    fn count(&self, line: &str) -> usize {
        self.token_spans(line).len()
    }
}

/// Two-class maximal-run splitter: runs of `[A-Za-z0-9._]` and runs of any
/// other non-whitespace character. Whitespace separates tokens and is
/// dropped.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunTokenizer;

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '.' || c == '_'
}

#[derive(PartialEq, Clone, Copy)]
enum CharClass {
    Space,
    Ident,
    Other,
}

fn classify(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if is_ident_char(c) {
        CharClass::Ident
    } else {
        CharClass::Other
    }
}

impl Tokenizer for RunTokenizer {
    fn token_spans(&self, line: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut current: Option<(usize, CharClass)> = None;
        for (i, c) in line.char_indices() {
            let class = classify(c);
            match current {
                Some((_, cls)) if cls == class => {}
                Some((start, cls)) => {
                    if cls != CharClass::Space {
                        spans.push(start..i);
                    }
                    current = Some((i, class));
                }
                None => current = Some((i, class)),
            }
        }
        if let Some((start, cls)) = current {
            if cls != CharClass::Space {
                spans.push(start..line.len());
            }
        }
        spans
    }
}

/// Tokenizes with the default [`RunTokenizer`].
pub fn tokenize(line: &str) -> Vec<&str> {
    RunTokenizer.tokenize(line)
}

pub fn token_count(line: &str) -> usize {
    RunTokenizer.count(line)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub language: Language,
    pub bracket_migration_enabled: bool,
    pub bracket_chars: BTreeSet<char>,
    /// Start of a line comment; lines containing one outside string literals
    /// never receive migrated brackets.
    pub line_comment: Option<char>,
}

impl LanguageProfile {
    pub fn for_language(language: Language) -> Self {
        match language {
            Language::R => Self::r(),
            Language::Python => Self::python(),
        }
    }

    pub fn r() -> Self {
        LanguageProfile {
            language: Language::R,
            bracket_migration_enabled: true,
            bracket_chars: "{}[]()".chars().collect(),
            line_comment: Some('#'),
        }
    }

    /// Python is indentation-structured; migration stays off.
    pub fn python() -> Self {
        LanguageProfile {
            language: Language::Python,
            bracket_migration_enabled: false,
            bracket_chars: "{}[]()".chars().collect(),
            line_comment: Some('#'),
        }
    }

    fn is_bracket_only(&self, line: &str) -> bool {
        let trimmed = line.trim();
        let body = trimmed.trim_end_matches([',', ';']);
        // at most one trailing separator
        if trimmed.len() - body.len() > 1 {
            return false;
        }
        let body = body.trim_end();
        !body.is_empty()
            && body
                .chars()
                .all(|c| c.is_whitespace() || self.bracket_chars.contains(&c))
    }

    /// True if `line` has a line comment outside string literals.
    fn has_line_comment(&self, line: &str) -> bool {
        let Some(marker) = self.line_comment else {
            return false;
        };
        let mut quote: Option<char> = None;
        let mut escaped = false;
        for c in line.chars() {
            if let Some(q) = quote {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            } else if c == '"' || c == '\'' || c == '`' {
                quote = Some(c);
            } else if c == marker {
                return true;
            }
        }
        false
    }
}

/// Maps each post-migration line (0-based) to the contiguous range of
/// pre-migration lines (0-based) it absorbed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMapping {
    images: Vec<Range<usize>>,
}

impl LineMapping {
    pub fn identity(n: usize) -> Self {
        LineMapping {
            images: (0..n).map(|i| i..i + 1).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, r)| *r == (i..i + 1))
    }

    pub fn image(&self, post: usize) -> Range<usize> {
        self.images[post].clone()
    }

    pub fn images(&self) -> &[Range<usize>] {
        &self.images
    }

    pub fn post_len(&self) -> usize {
        self.images.len()
    }

    pub fn pre_len(&self) -> usize {
        self.images.last().map_or(0, |r| r.end)
    }

    /// Copies each post-migration value onto every original line it covers.
    pub fn project<T: Clone>(&self, post: &[T]) -> Vec<T> {
        assert_eq!(post.len(), self.images.len(), "projection length");
        let mut out = Vec::with_capacity(self.pre_len());
        for (value, image) in post.iter().zip(&self.images) {
            out.extend(std::iter::repeat_n(value.clone(), image.len()));
        }
        out
    }

    /// Composes two mappings: `self` then `next`.
    pub fn then(&self, next: &LineMapping) -> LineMapping {
        LineMapping {
            images: next
                .images
                .iter()
                .map(|r| self.images[r.start].start..self.images[r.end - 1].end)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MigrationWarning {
    /// A bracket-only first line has no preceding line and was kept.
    LeadingBracketLine { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Migration {
    pub lines: Vec<String>,
    pub mapping: LineMapping,
    pub warnings: Vec<MigrationWarning>,
}

/// Appends every bracket-only line (brackets plus at most one trailing `,`
/// or `;`) to the nearest preceding line, separated by a space.
///
/// A bracket line is kept in place when the preceding output line is blank
/// or ends in a line comment, since appending there would either erase the
/// blank line or comment the bracket out. Runs of bracket lines collapse
/// onto the same target. The result is idempotent.
pub fn migrate_brackets<S: AsRef<str>>(lines: &[S], profile: &LanguageProfile) -> Migration {
    let n = lines.len();
    if !profile.bracket_migration_enabled {
        return Migration {
            lines: lines.iter().map(|l| l.as_ref().to_string()).collect(),
            mapping: LineMapping::identity(n),
            warnings: Vec::new(),
        };
    }

    let mut out: Vec<String> = Vec::with_capacity(n);
    let mut images: Vec<Range<usize>> = Vec::with_capacity(n);
    let mut warnings = Vec::new();

    for (i, line) in lines.iter().enumerate() {
        let line = line.as_ref();
        if profile.is_bracket_only(line) {
            match out.last_mut() {
                None => {
                    log::warn!("line {} is a leading bracket line; kept as-is", i + 1);
                    warnings.push(MigrationWarning::LeadingBracketLine { line: i + 1 });
                }
                Some(prev) if !prev.trim().is_empty() && !profile.has_line_comment(prev) => {
                    prev.push(' ');
                    prev.push_str(line.trim());
                    images.last_mut().expect("image per output line").end = i + 1;
                    continue;
                }
                Some(_) => {}
            }
        }
        out.push(line.to_string());
        images.push(i..i + 1);
    }

    Migration {
        lines: out,
        mapping: LineMapping { images },
        warnings,
    }
}

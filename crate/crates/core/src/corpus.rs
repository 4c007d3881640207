//! Annotated corpora: JSONL loading, summary statistics, and adjudication of
//! multi-annotator labels.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::preprocess::{migrate_brackets, LanguageProfile, LineMapping, RunTokenizer, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    R,
    Python,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::R => "R",
            Language::Python => "Python",
        }
    }

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext {
            "R" | "r" => Some(Language::R),
            "py" => Some(Language::Python),
            _ => None,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(Language::R),
            "Python" | "python" | "py" => Ok(Language::Python),
            other => Err(Error::Config(format!("unknown language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledLine {
    /// 1-based.
    pub line_no: usize,
    pub code: String,
    pub token_count: usize,
    pub gold: Option<Label>,
    pub annotator_labels: Option<Vec<Label>>,
}

impl LabeledLine {
    pub fn new(line_no: usize, code: impl Into<String>) -> Self {
        let code = code.into();
        LabeledLine {
            line_no,
            token_count: RunTokenizer.count(&code),
            code,
            gold: None,
            annotator_labels: None,
        }
    }

    pub fn with_gold(mut self, gold: Label) -> Self {
        self.gold = Some(gold);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeFile {
    pub file_id: String,
    pub language: Language,
    pub split: Split,
    pub lines: Vec<LabeledLine>,
}

impl CodeFile {
    /// Builds a file from raw lines, numbering them 1..=n.
    pub fn from_lines<S: AsRef<str>>(
        file_id: impl Into<String>,
        language: Language,
        split: Split,
        lines: &[S],
    ) -> Self {
        CodeFile {
            file_id: file_id.into(),
            language,
            split,
            lines: lines
                .iter()
                .enumerate()
                .map(|(i, l)| LabeledLine::new(i + 1, l.as_ref()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Gold labels, or `UnlabeledLine` for the first line without one.
    pub fn gold_labels(&self) -> Result<Vec<Label>> {
        self.lines
            .iter()
            .map(|l| {
                l.gold.ok_or_else(|| Error::UnlabeledLine {
                    file_id: self.file_id.clone(),
                    line: l.line_no,
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines.is_empty() {
            return Err(Error::MalformedRecord {
                location: self.file_id.clone(),
                reason: "file has no lines".into(),
            });
        }
        for (i, line) in self.lines.iter().enumerate() {
            if line.line_no != i + 1 {
                return Err(Error::MalformedRecord {
                    location: self.file_id.clone(),
                    reason: format!(
                        "line numbers are not contiguous: expected {}, found {}",
                        i + 1,
                        line.line_no
                    ),
                });
            }
            if line.gold == Some(Label::Invalid) {
                return Err(Error::InvalidGold);
            }
        }
        Ok(())
    }
}

/// One JSONL line of the on-disk corpus format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub file_id: String,
    pub language: Language,
    pub split: Split,
    pub line: usize,
    pub code: String,
    pub gold: Option<String>,
    pub annotators: Option<Vec<String>>,
}

fn parse_label(s: &str) -> Result<Label> {
    let label: Label = s.parse()?;
    if label == Label::Invalid {
        return Err(Error::UnknownLabel(s.to_string()));
    }
    Ok(label)
}

/// Loads a JSONL corpus. Files are returned sorted by `file_id`, lines by
/// line number.
pub fn load_corpus(path: &Path, expected_language: Option<Language>) -> Result<Vec<CodeFile>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), expected_language, &RunTokenizer)
        .map_err(|e| match e {
            Error::MalformedRecord { location, reason } => Error::MalformedRecord {
                location: format!("{}:{location}", path.display()),
                reason,
            },
            other => other,
        })
}

pub fn read_corpus<R: BufRead>(
    reader: R,
    expected_language: Option<Language>,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<CodeFile>> {
    let mut files: BTreeMap<String, CodeFile> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let location = format!("line {}", i + 1);
        let line = line.map_err(|e| Error::MalformedRecord {
            location: location.clone(),
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LineRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                location: location.clone(),
                reason: e.to_string(),
            })?;
        if record.line == 0 {
            return Err(Error::MalformedRecord {
                location,
                reason: "line numbers are 1-based".into(),
            });
        }
        let gold = record.gold.as_deref().map(parse_label).transpose()?;
        let annotator_labels = record
            .annotators
            .as_ref()
            .map(|v| v.iter().map(|s| parse_label(s)).collect::<Result<Vec<_>>>())
            .transpose()?;

        let entry = files
            .entry(record.file_id.clone())
            .or_insert_with(|| CodeFile {
                file_id: record.file_id.clone(),
                language: record.language,
                split: record.split,
                lines: Vec::new(),
            });
        if entry.language != record.language || entry.split != record.split {
            return Err(Error::MalformedRecord {
                location,
                reason: format!("inconsistent language or split for {}", record.file_id),
            });
        }
        entry.lines.push(LabeledLine {
            line_no: record.line,
            token_count: tokenizer.count(&record.code),
            code: record.code,
            gold,
            annotator_labels,
        });
    }

    if files.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut out = Vec::with_capacity(files.len());
    for (_, mut file) in files {
        if let Some(expected) = expected_language {
            if file.language != expected {
                return Err(Error::LanguageMismatch {
                    file_id: file.file_id,
                    expected: expected.to_string(),
                    found: file.language.to_string(),
                });
            }
        }
        file.lines.sort_by_key(|l| l.line_no);
        file.validate()?;
        out.push(file);
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(files: &[CodeFile], mut writer: W) -> Result<()> {
    for file in files {
        for line in &file.lines {
            let record = LineRecord {
                file_id: file.file_id.clone(),
                language: file.language,
                split: file.split,
                line: line.line_no,
                code: line.code.clone(),
                gold: line.gold.map(|l| l.as_str().to_string()),
                annotators: line
                    .annotator_labels
                    .as_ref()
                    .map(|v| v.iter().map(|l| l.as_str().to_string()).collect()),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writeln!(writer).map_err(|e| Error::io("<corpus writer>", e))?;
        }
    }
    Ok(())
}

/// Imports an unlabeled script, applying bracket migration for its language.
/// The returned mapping projects per-line results back onto the original
/// lines.
pub fn import_script(
    file_id: impl Into<String>,
    language: Language,
    source: &str,
) -> (CodeFile, LineMapping) {
    let raw: Vec<&str> = source.lines().collect();
    let raw = if raw.is_empty() { vec![""] } else { raw };
    let migration = migrate_brackets(&raw, &LanguageProfile::for_language(language));
    let file = CodeFile::from_lines(file_id, language, Split::Test, &migration.lines);
    (file, migration.mapping)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub line_count: usize,
    pub file_count: usize,
    pub token_count: usize,
    pub avg_lines_per_file: f64,
    /// Token-weighted: total tokens over total lines.
    pub avg_tokens_per_line: f64,
}

impl SplitStats {
    fn from_files<'a>(files: impl IntoIterator<Item = &'a CodeFile>) -> Option<Self> {
        let (mut lines, mut count, mut tokens) = (0usize, 0usize, 0usize);
        for f in files {
            count += 1;
            lines += f.lines.len();
            tokens += f.lines.iter().map(|l| l.token_count).sum::<usize>();
        }
        (count > 0).then(|| SplitStats {
            line_count: lines,
            file_count: count,
            token_count: tokens,
            avg_lines_per_file: lines as f64 / count as f64,
            avg_tokens_per_line: if lines == 0 {
                0.0
            } else {
                tokens as f64 / lines as f64
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub splits: BTreeMap<Split, SplitStats>,
    /// Pooled over every file and line.
    pub aggregate: SplitStats,
    /// Unweighted mean of the per-split averages.
    pub mean_of_split_avg_lines_per_file: f64,
    pub mean_of_split_avg_tokens_per_line: f64,
}

pub fn corpus_stats(corpus: &[CodeFile]) -> Result<CorpusStats> {
    let aggregate = SplitStats::from_files(corpus).ok_or(Error::EmptyCorpus)?;
    let splits: BTreeMap<Split, SplitStats> = Split::ALL
        .into_iter()
        .filter_map(|s| {
            SplitStats::from_files(corpus.iter().filter(|f| f.split == s)).map(|st| (s, st))
        })
        .collect();
    let k = splits.len() as f64;
    Ok(CorpusStats {
        mean_of_split_avg_lines_per_file: splits.values().map(|s| s.avg_lines_per_file).sum::<f64>()
            / k,
        mean_of_split_avg_tokens_per_line: splits
            .values()
            .map(|s| s.avg_tokens_per_line)
            .sum::<f64>()
            / k,
        splits,
        aggregate,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>7} {:>15} {:>16}", "Split", "# Lines", "# Files", "avg Lines/File", "avg Tokens/Line")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &SplitStats| {
            writeln!(
                f,
                "{:<10} {:>8} {:>7} {:>15.2} {:>16.2}",
                name, s.line_count, s.file_count, s.avg_lines_per_file, s.avg_tokens_per_line
            )
        };
        for (split, s) in &self.splits {
            row(f, split.as_str(), s)?;
        }
        row(f, "all", &self.aggregate)?;
        writeln!(
            f,
            "{:<10} {:>8} {:>7} {:>15.2} {:>16.2}",
            "split-mean", "", "", self.mean_of_split_avg_lines_per_file, self.mean_of_split_avg_tokens_per_line
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vote {
    Majority(Label),
    Conflict,
}

/// Label held by a strict majority of at least three annotators.
pub fn majority_vote(labels: &[Label]) -> Result<Vote> {
    if labels.len() < 3 {
        return Err(Error::TooFewAnnotators(labels.len()));
    }
    let mut counts = [0usize; 7];
    for l in labels {
        if !l.is_valid() {
            return Err(Error::InvalidAnnotation);
        }
        counts[l.index()] += 1;
    }
    Ok(Label::CLASSES
        .into_iter()
        .find(|l| counts[l.index()] * 2 > labels.len())
        .map_or(Vote::Conflict, Vote::Majority))
}

/// Fleiss' kappa for a rating matrix (rows = items, columns = categories,
/// cells = number of raters choosing that category).
///
/// When every rating falls in a single category, expected agreement is 1 and
/// the statistic is undefined; observed agreement is then necessarily 1 as
/// well, and this returns 1.0.
pub fn fleiss_kappa(matrix: &[Vec<usize>]) -> Result<f64> {
    let first = matrix.first().ok_or(Error::EmptyMatrix)?;
    let raters: usize = first.iter().sum();
    if raters < 2 {
        return Err(Error::TooFewRaters(raters));
    }
    let categories = first.len();
    for (row, counts) in matrix.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != raters || counts.len() != categories {
            return Err(Error::RaggedMatrix {
                first: raters,
                other: sum,
                row,
            });
        }
    }

    let items = matrix.len() as f64;
    let n = raters as f64;
    let mut column_totals = vec![0usize; categories];
    let mut p_bar = 0.0;
    for counts in matrix {
        let sq: usize = counts.iter().map(|c| c * c).sum();
        p_bar += (sq as f64 - n) / (n * (n - 1.0));
        for (t, c) in column_totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    p_bar /= items;
    let p_e: f64 = column_totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * n);
            p * p
        })
        .sum();

    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictLine {
    pub file_id: String,
    pub line_no: usize,
    pub annotator_labels: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub line_count: usize,
    pub resolvable_fraction: f64,
    pub conflict_lines: Vec<ConflictLine>,
}

/// Fills gold labels by majority vote. Conflicting lines keep any existing
/// gold label (manual resolution) and are listed in the report.
pub fn adjudicate(corpus: &[CodeFile]) -> Result<(Vec<CodeFile>, AgreementReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut out = corpus.to_vec();
    let mut matrix = Vec::new();
    let mut conflicts = Vec::new();
    let mut total = 0usize;

    for file in &mut out {
        for line in &mut file.lines {
            let labels = line
                .annotator_labels
                .as_ref()
                .ok_or_else(|| Error::MissingAnnotations {
                    file_id: file.file_id.clone(),
                    line: line.line_no,
                })?;
            total += 1;
            match majority_vote(labels)? {
                Vote::Majority(l) => line.gold = Some(l),
                Vote::Conflict => conflicts.push(ConflictLine {
                    file_id: file.file_id.clone(),
                    line_no: line.line_no,
                    annotator_labels: labels.clone(),
                }),
            }
            let mut row = vec![0usize; Label::CLASSES.len()];
            for l in labels {
                row[l.index()] += 1;
            }
            matrix.push(row);
        }
    }

    let kappa = fleiss_kappa(&matrix)?;
    let report = AgreementReport {
        kappa,
        line_count: total,
        resolvable_fraction: (total - conflicts.len()) as f64 / total as f64,
        conflict_lines: conflicts,
    };
    Ok((out, report))
}

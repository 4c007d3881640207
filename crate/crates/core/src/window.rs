//! Per-line context windows for the line-by-line approach, token-budget
//! centering, and prompt rendering.

use serde::{Deserialize, Serialize};

use crate::backends::fewshot::Demonstration;
use crate::corpus::{CodeFile, LabeledLine, Language};
use crate::error::{Error, Result};
use crate::preprocess::{RunTokenizer, Tokenizer};
use crate::prompt::{default_rules, fill_template, labels_block, rules_block, LINE_TEMPLATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Lines of context on each side of the target.
    pub context: usize,
    pub max_tokens: usize,
    /// Tokens the model reserves for special tokens.
    pub reserved_tokens: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            context: 3,
            max_tokens: 512,
            reserved_tokens: 2,
        }
    }
}

impl WindowConfig {
    pub fn with_context(context: usize) -> Self {
        WindowConfig {
            context,
            ..Default::default()
        }
    }

    pub fn budget(&self) -> usize {
        self.max_tokens - self.reserved_tokens
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_tokens <= self.reserved_tokens {
            return Err(Error::InvalidWindowConfig(format!(
                "max_tokens {} must exceed reserved_tokens {}",
                self.max_tokens, self.reserved_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub file_id: String,
    pub language: Language,
    pub previous: Vec<LabeledLine>,
    pub target: LabeledLine,
    pub next: Vec<LabeledLine>,
    /// Some context (or part of the target) was dropped to fit a budget.
    pub truncated: bool,
    /// The target alone exceeded the budget and was tail-truncated.
    pub target_clipped: bool,
}

impl ContextWindow {
    pub fn previous_tokens(&self) -> usize {
        self.previous.iter().map(|l| l.token_count).sum()
    }

    pub fn next_tokens(&self) -> usize {
        self.next.iter().map(|l| l.token_count).sum()
    }

    pub fn total_tokens(&self) -> usize {
        self.previous_tokens() + self.target.token_count + self.next_tokens()
    }
}

/// Window around the 1-based line `index`, clipped at the file boundaries.
pub fn build_window(file: &CodeFile, index: usize, config: &WindowConfig) -> Result<ContextWindow> {
    let n = file.lines.len();
    if index == 0 || index > n {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    let i = index - 1;
    let lo = i.saturating_sub(config.context);
    let hi = (i + 1 + config.context).min(n);
    Ok(ContextWindow {
        file_id: file.file_id.clone(),
        language: file.language,
        previous: file.lines[lo..i].to_vec(),
        target: file.lines[i].clone(),
        next: file.lines[i + 1..hi].to_vec(),
        truncated: false,
        target_clipped: false,
    })
}

/// Fits the window into `max_tokens - reserved_tokens` tokens while keeping
/// the target centered.
///
/// The context budget left after the target is split evenly between the two
/// sides; a side that needs less than its half donates the remainder to the
/// other side. Each side then keeps its nearest whole lines that fit, so
/// lines are dropped farthest-first. When both sides lose lines their token
/// counts differ by less than one dropped line.
///
/// A target that alone exceeds the budget is cut to its first `budget`
/// tokens, all context is dropped, and a warning is logged.
pub fn center_truncate(window: &ContextWindow, config: &WindowConfig) -> ContextWindow {
    center_truncate_with(window, config, &RunTokenizer)
}

pub fn center_truncate_with(
    window: &ContextWindow,
    config: &WindowConfig,
    tokenizer: &dyn Tokenizer,
) -> ContextWindow {
    let budget = config.budget();
    if window.total_tokens() <= budget {
        return window.clone();
    }
    let mut out = window.clone();
    out.truncated = true;

    if window.target.token_count > budget {
        log::warn!(
            "target line {} of {} has {} tokens, over the {budget}-token budget; truncating",
            window.target.line_no,
            window.file_id,
            window.target.token_count
        );
        let spans = tokenizer.token_spans(&window.target.code);
        let cut = if budget == 0 { 0 } else { spans[budget - 1].end };
        out.target.code = window.target.code[..cut].to_string();
        out.target.token_count = budget;
        out.target_clipped = true;
        out.previous.clear();
        out.next.clear();
        return out;
    }

    let rest = budget - window.target.token_count;
    let (prev_total, next_total) = (window.previous_tokens(), window.next_tokens());
    let half = rest / 2;
    let (prev_cap, next_cap) = if prev_total <= half {
        (prev_total, rest - prev_total)
    } else if next_total <= half {
        (rest - next_total, next_total)
    } else {
        (half, half)
    };

    let keep_prev = nearest_fitting(window.previous.iter().rev(), prev_cap);
    let keep_next = nearest_fitting(window.next.iter(), next_cap);
    out.previous = window.previous[window.previous.len() - keep_prev..].to_vec();
    out.next = window.next[..keep_next].to_vec();
    out
}

/// Number of leading lines whose cumulative token count stays within `cap`.
fn nearest_fitting<'a>(lines: impl Iterator<Item = &'a LabeledLine>, cap: usize) -> usize {
    let mut used = 0;
    let mut kept = 0;
    for line in lines {
        if used + line.token_count > cap {
            break;
        }
        used += line.token_count;
        kept += 1;
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    ZeroShot,
    CarpFewShot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::CarpFewShot => "carp_few_shot",
        }
    }
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_shot" | "zero-shot" | "zero" => Ok(PromptMode::ZeroShot),
            "carp_few_shot" | "carp" | "few_shot" | "few-shot" => Ok(PromptMode::CarpFewShot),
            other => Err(Error::Config(format!("unknown prompt mode {other:?}"))),
        }
    }
}

fn context_block(lines: &[LabeledLine]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let mut s = String::from("\n");
    for l in lines {
        s.push_str(&l.code);
        s.push('\n');
    }
    s
}

fn tagged_window(window: &ContextWindow) -> String {
    format!(
        "<previous_context>{}</previous_context>\n\n<target_line>\n{}\n</target_line>\n\n<next_context>{}</next_context>",
        context_block(&window.previous),
        window.target.code,
        context_block(&window.next)
    )
}

fn demonstrations_block(demos: &[Demonstration]) -> String {
    let mut s = String::from("\n# Examples:\n");
    for (i, d) in demos.iter().enumerate() {
        s.push_str(&format!(
            "\n## Example {}\n{}\nClues: {}\nReasoning: {}\nLabel: {}\n",
            i + 1,
            tagged_window(&d.window),
            d.clue,
            d.reasoning,
            d.gold
        ));
    }
    s
}

/// Renders the line-classification prompt. Byte-for-byte deterministic for
/// fixed inputs.
pub fn render_line_prompt(
    window: &ContextWindow,
    mode: PromptMode,
    demonstrations: &[Demonstration],
) -> Result<String> {
    let demos = match mode {
        PromptMode::ZeroShot => String::new(),
        PromptMode::CarpFewShot if demonstrations.is_empty() => {
            return Err(Error::MissingDemonstrations)
        }
        PromptMode::CarpFewShot => demonstrations_block(demonstrations),
    };
    let previous = context_block(&window.previous);
    let next = context_block(&window.next);
    let rules = rules_block(&default_rules());
    let labels = labels_block();
    Ok(fill_template(
        LINE_TEMPLATE,
        &[
            ("language", window.language.as_str()),
            ("labels", &labels),
            ("rules", &rules),
            ("demonstrations", &demos),
            ("previous", &previous),
            ("target", &window.target.code),
            ("next", &next),
        ],
    ))
}

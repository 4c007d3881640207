//! Keyword baseline built from the annotation rubric.

use std::sync::OnceLock;

use regex::Regex;

use crate::label::Label;
use crate::window::ContextWindow;

struct Rules {
    library: Regex,
    load: Regex,
    save: Regex,
    plot: Regex,
    analysis: Regex,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        library: Regex::new(
            r"\b(library|require|requireNamespace|p_load|install\.packages|setwd|import)\s*\(|^\s*(import|from)\s+\w",
        )
        .unwrap(),
        load: Regex::new(
            r"\b(read[._]?\w*|load|fread|readRDS|read_excel|read_sav|fromJSON|data|open|loadtxt|read_csv)\s*\(",
        )
        .unwrap(),
        save: Regex::new(
            r"\b(write[._]?\w*|save\w*|ggsave|export\w*|to_csv|to_excel|sink|png|pdf|jpeg|tiff|svg|bmp|dev\.off|savefig)\s*\(",
        )
        .unwrap(),
        plot: Regex::new(
            r"\b(ggplot|geom_\w+|plot\w*|hist|barplot|boxplot|theme\w*|labs|ggtitle|xlab|ylab|scale_\w+|facet_\w+|legend|abline|lines|points|par|coord_\w+|annotate|sjPlot|plt\.\w+|sns\.\w+)\s*\(|\b(colou?rs?|palette)\b",
        )
        .unwrap(),
        analysis: Regex::new(
            r"\b(lm|glm|lmer|glmer|gam|bam|aov|anova|t\.test|chisq\.test|wilcox\.test|cor|cor\.test|mean|sd|var|median|quantile|summary|predict|fit|train|optim|confint|coef|simulate|rnorm|set\.seed|cohen\w*|effectsize|brm|sem|cfa|lavaan|fit\w*)\s*\(|\.fit\(",
        )
        .unwrap(),
    })
}

fn classify_code(code: &str) -> Label {
    let trimmed = code.trim_start();
    if trimmed.starts_with('#') {
        return Label::Comment;
    }
    let r = rules();
    if r.library.is_match(code) {
        Label::LoadingLibrary
    } else if r.load.is_match(code) {
        Label::LoadingData
    } else if r.save.is_match(code) {
        Label::SavingToOutput
    } else if r.plot.is_match(code) {
        Label::Visualization
    } else if r.analysis.is_match(code) {
        Label::Analysis
    } else {
        Label::DataWrangling
    }
}

/// First-match rule cascade: comment, library, data loading, saving,
/// plotting, analysis, otherwise data wrangling. A blank target takes the
/// label of the nearest non-blank preceding context line.
pub fn heuristic_classify(window: &ContextWindow) -> Label {
    if window.target.code.trim().is_empty() {
        if let Some(prev) = window.previous.iter().rev().find(|l| !l.code.trim().is_empty()) {
            return classify_code(&prev.code);
        }
    }
    classify_code(&window.target.code)
}

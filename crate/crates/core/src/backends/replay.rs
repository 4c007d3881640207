use std::collections::HashMap;
use std::path::Path;

use crate::backends::cache::{prompt_hash, read_records, CacheRecord};
use crate::backends::{Backend, Query};
use crate::error::{Error, Result};

/// Answers from recorded responses keyed by prompt hash. A pure function of
/// the rendered prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_records(read_records(path)?))
    }

    /// Later records win over earlier ones with the same prompt hash.
    pub fn from_records(records: impl IntoIterator<Item = CacheRecord>) -> Self {
        ReplayBackend {
            responses: records
                .into_iter()
                .map(|r| (r.prompt_hash, r.raw_text))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn respond(&self, query: &Query<'_>) -> Result<String> {
        let hash = prompt_hash(query.prompt());
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(Error::ReplayMiss(hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{classify_line, ClassifyOptions, ResponseCache};
    use crate::corpus::{CodeFile, Language, Split};
    use crate::label::Label;
    use crate::window::{build_window, render_line_prompt, PromptMode, WindowConfig};

    #[test]
    fn replays_recorded_label() {
        let f = CodeFile::from_lines("f", Language::R, Split::Test, &["library(mgcv)"]);
        let w = build_window(&f, 1, &WindowConfig::with_context(0)).unwrap();
        let prompt = render_line_prompt(&w, PromptMode::ZeroShot, &[]).unwrap();
        let replay = ReplayBackend::from_records([CacheRecord::new("gpt", &prompt, "Loading Library")]);
        let cache = ResponseCache::in_memory();
        let opts = ClassifyOptions::default();
        let a = classify_line(&replay, Some(&cache), &w, &[], &opts).unwrap();
        let b = classify_line(&replay, Some(&cache), &w, &[], &opts).unwrap();
        assert_eq!(a.label, Label::LoadingLibrary);
        assert!(!a.cached && b.cached);

        let other = CodeFile::from_lines("f", Language::R, Split::Test, &["x <- 2"]);
        let w = build_window(&other, 1, &WindowConfig::with_context(0)).unwrap();
        assert!(matches!(
            classify_line(&replay, None, &w, &[], &opts),
            Err(Error::ReplayMiss(_))
        ));
    }
}

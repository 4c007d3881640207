//! Regenerates `fixtures/replay.jsonl`: answers of the local classifier,
//! trained on the fixture train split, to every prompt the replay tests
//! send (zero-shot line prompts for c in 1, 2, 3, 7 and one range prompt per
//! test file).
//!
//!     cargo run -p codeseg --example record_fixtures

use std::fs;
use std::path::Path;

use codeseg::backends::{Backend, LocalBackend, Query, ResponseCache};
use codeseg::cli::{train_model, RunConfig};
use codeseg::corpus::{load_corpus, Split};
use codeseg::pipeline::{run, Approach, PipelineOptions};
use codeseg::window::WindowConfig;

/// Hides the model's token limit so recorded prompts match what the replay
/// backend (which has none) will render.
struct Recorder(LocalBackend);

impl Backend for Recorder {
    fn id(&self) -> String {
        self.0.id()
    }

    fn respond(&self, query: &Query<'_>) -> codeseg::Result<String> {
        self.0.respond(query)
    }
}

fn main() -> codeseg::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = load_corpus(&dir.join("corpus.jsonl"), None)?;
    let train: Vec<_> = corpus.iter().filter(|f| f.split == Split::Train).cloned().collect();
    let test: Vec<_> = corpus.iter().filter(|f| f.split == Split::Test).cloned().collect();

    let (model, acc) = train_model(&RunConfig::default(), &train)?;
    println!("local model training accuracy {acc:.4}");
    let backend = Recorder(LocalBackend { model });

    let out = dir.join("replay.jsonl");
    let _ = fs::remove_file(&out);
    let cache = ResponseCache::open(&out)?;
    for c in [1, 2, 3, 7] {
        let options = PipelineOptions {
            window: WindowConfig::with_context(c),
            max_in_flight: 1,
            ..PipelineOptions::default()
        };
        run(&backend, Some(&cache), &test, &[], &options)?;
    }
    let options = PipelineOptions {
        approach: Approach::RangeBased,
        max_in_flight: 1,
        ..PipelineOptions::default()
    };
    run(&backend, Some(&cache), &test, &[], &options)?;
    println!("{} responses written to {}", cache.len(), out.display());
    Ok(())
}

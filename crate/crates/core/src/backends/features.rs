//! Hashed bag-of-n-gram features for context windows.

use serde::{Deserialize, Serialize};

use crate::preprocess::tokenize;
use crate::window::ContextWindow;

pub const MIN_FEATURE_DIM: usize = 1 << 10;
const TARGET_WEIGHT: f64 = 2.0;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }

    fn from_dense(dense: &[f64]) -> Self {
        SparseVector {
            dim: dense.len(),
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, *v))
                .collect(),
        }
    }
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn add_line(dense: &mut [f64], namespace: &str, code: &str, weight: f64) {
    let tokens = tokenize(code);
    let dim = dense.len() as u64;
    let mut bump = |feature: String| {
        dense[(fnv1a(feature.as_bytes()) % dim) as usize] += weight;
    };
    for t in &tokens {
        bump(format!("{namespace}\u{1}{t}"));
    }
    for pair in tokens.windows(2) {
        bump(format!("{namespace}\u{1}{}\u{2}{}", pair[0], pair[1]));
    }
}

/// Unnormalized features: target n-grams at weight 2, context n-grams at
/// weight `1 / (1 + distance)`. Target and context n-grams hash in separate
/// namespaces.
pub fn featurize_raw(window: &ContextWindow, feature_dim: usize) -> Vec<f64> {
    assert!(
        feature_dim >= MIN_FEATURE_DIM,
        "feature_dim must be at least {MIN_FEATURE_DIM}"
    );
    let mut dense = vec![0.0; feature_dim];
    add_line(&mut dense, "t", &window.target.code, TARGET_WEIGHT);
    for (d, line) in window.previous.iter().rev().enumerate() {
        add_line(&mut dense, "c", &line.code, 1.0 / (2.0 + d as f64));
    }
    for (d, line) in window.next.iter().enumerate() {
        add_line(&mut dense, "c", &line.code, 1.0 / (2.0 + d as f64));
    }
    dense
}

/// L2-normalized hashed features; an empty window maps to the zero vector.
pub fn featurize(window: &ContextWindow, feature_dim: usize) -> SparseVector {
    let mut v = SparseVector::from_dense(&featurize_raw(window, feature_dim));
    let norm = v.norm();
    if norm > 0.0 {
        for e in &mut v.entries {
            e.1 /= norm;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CodeFile, Language, Split};
    use crate::window::{build_window, WindowConfig};

    const DIM: usize = 1 << 12;

    fn window(lines: &[&str], index: usize, c: usize) -> ContextWindow {
        let f = CodeFile::from_lines("f", Language::R, Split::Test, lines);
        build_window(&f, index, &WindowConfig::with_context(c)).unwrap()
    }

    #[test]
    fn empty_window_is_zero() {
        let v = featurize(&window(&["", "  "], 1, 1), DIM);
        assert!(v.entries.is_empty());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let w = window(&["library(a)", "x <- read.csv(p)", "y <- x"], 2, 1);
        let (a, b) = (featurize(&w, DIM), featurize(&w, DIM));
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distant_context_change_is_local() {
        let base = ["a1", "b2 <- c", "c3", "target(x)", "e5", "f6", "g7"];
        let mut changed = base;
        changed[6] = "zz <- q(w)";
        let a = featurize_raw(&window(&base, 4, 3), DIM);
        let b = featurize_raw(&window(&changed, 4, 3), DIM);
        // coordinates touched by either version of the distance-3 line
        let mut touched = vec![false; DIM];
        for code in [base[6], changed[6]] {
            let mut probe = vec![0.0; DIM];
            add_line(&mut probe, "c", code, 1.0);
            for (i, v) in probe.iter().enumerate() {
                if *v != 0.0 {
                    touched[i] = true;
                }
            }
        }
        for i in 0..DIM {
            if a[i] != b[i] {
                assert!(touched[i], "coordinate {i} changed outside the edited line");
            }
        }
        assert_ne!(a, b);
    }
}

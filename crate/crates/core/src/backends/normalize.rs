use crate::label::Label;

// lowercase alphanumerics only
fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps free-form backend output onto the taxonomy.
///
/// Matching ignores case, whitespace and punctuation. Every occurrence of a
/// canonical label name is located; longer occurrences win over shorter ones
/// they overlap. Exactly one distinct label found yields that label; none or
/// several yield `Invalid`.
pub fn normalize_label(raw: &str) -> Label {
    let hay = squash(raw);
    let mut hits: Vec<(usize, usize, Label)> = Vec::new();
    for label in Label::CLASSES {
        let needle = squash(label.as_str());
        let mut from = 0;
        while let Some(pos) = hay[from..].find(&needle) {
            let start = from + pos;
            hits.push((start, start + needle.len(), label));
            from = start + needle.len();
        }
    }
    // longest first; drop occurrences overlapping an accepted longer one
    hits.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut accepted: Vec<(usize, usize, Label)> = Vec::new();
    for hit in hits {
        if accepted.iter().all(|a| hit.1 <= a.0 || hit.0 >= a.1) {
            accepted.push(hit);
        }
    }
    let mut distinct: Vec<Label> = accepted.iter().map(|a| a.2).collect();
    distinct.sort();
    distinct.dedup();
    match distinct.as_slice() {
        [only] => *only,
        _ => Label::Invalid,
    }
}

//! Prompt template assets and placeholder substitution.

use sha2::{Digest, Sha256};

use crate::label::Label;

pub const LINE_TEMPLATE: &str = include_str!("../assets/line_prompt.txt");
pub const RANGE_TEMPLATE: &str = include_str!("../assets/range_prompt.txt");

/// Substitutes `{name}` placeholders in one pass. Inserted values are never
/// rescanned, so code containing braces cannot trigger further
/// substitution. Unknown placeholders are left untouched.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name.and_then(|n| values.iter().find(|(k, _)| *k == n)) {
            Some((key, value)) => {
                out.push_str(value);
                rest = &after[key.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// "- Label: definition" for each taxonomy class.
pub fn labels_block() -> String {
    Label::CLASSES
        .iter()
        .map(|l| format!("- {}: {}", l.as_str(), l.definition()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Rubric when-to-use rules plus the output constraints.
pub fn default_rules() -> Vec<String> {
    let mut rules: Vec<String> = Label::CLASSES
        .iter()
        .map(|l| format!("Use \"{}\" for: {}", l.as_str(), l.usage_rule()))
        .collect();
    rules.push(
        "Classify only the line inside <target_line>; the context lines are there to \
         disambiguate it."
            .into(),
    );
    rules.push("Answer with exactly one of the category labels listed above.".into());
    rules
}

pub fn rules_block(rules: &[String]) -> String {
    rules
        .iter()
        .map(|r| format!("- {r}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of both template assets, recorded in run reports.
pub fn template_hash() -> String {
    sha256_hex(format!("{LINE_TEMPLATE}\0{RANGE_TEMPLATE}").as_bytes())
}

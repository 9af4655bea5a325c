use std::sync::OnceLock;

use regex::Regex;

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i:answer|option|choice)|选|答案").expect("static regex"))
}

fn is_word(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_ascii_alphanumeric())
}

/// Label at the start of `rest`, if it is a standalone token.
fn label_at(rest: &str, labels: &[char]) -> Option<char> {
    let mut it = rest.chars();
    let c = it.next()?;
    (labels.contains(&c) && !is_word(it.next())).then_some(c)
}

/// Skips separators that may sit between an answer marker and the label.
fn skip_separators(mut s: &str) -> &str {
    loop {
        let trimmed = s.trim_start_matches(|c: char| {
            c.is_whitespace() || matches!(c, ':' | '：' | '=' | '(' | '（' | '[' | '【' | '是' | '为' | '*')
        });
        let lower = trimmed.get(..2).map(str::to_ascii_lowercase);
        if lower.as_deref() == Some("is") && !is_word(trimmed[2..].chars().next()) {
            s = &trimmed[2..];
            continue;
        }
        return trimmed;
    }
}

/// Extracts the chosen option label from a free-text reply.
///
/// Preference order: a label right after an answer marker (`answer`,
/// `option`, `choice`, `选`, `答案`), then the first standalone label token.
/// Returns `None` (abstain) when neither is present.
pub fn parse_choice(reply: &str, labels: &[char]) -> Option<char> {
    if labels.is_empty() {
        return None;
    }
    for m in marker_regex().find_iter(reply) {
        if let Some(c) = label_at(skip_separators(&reply[m.end()..]), labels) {
            return Some(c);
        }
    }
    let mut prev: Option<char> = None;
    for (i, c) in reply.char_indices() {
        if labels.contains(&c) && !is_word(prev) && !is_word(reply[i + c.len_utf8()..].chars().next()) {
            return Some(c);
        }
        prev = Some(c);
    }
    None
}

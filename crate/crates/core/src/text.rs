//! Small text helpers shared by the vocabularies and the response parsers.

/// Lowercases, trims and collapses inner whitespace.
pub(crate) fn squash(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Splits into lowercase word tokens. Hyphens, underscores and apostrophes stay
/// inside words so that "e-mail", "android_id" and "don't" survive intact.
pub(crate) fn words(raw: &str) -> Vec<String> {
    raw.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_' || c == '\'' || c == '’'))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase().replace('’', "'"))
        .collect()
}

/// Position of `needle` as a contiguous run inside `hay`.
pub(crate) fn find_run(hay: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    hay.windows(needle.len()).position(|w| w == needle)
}

const NEGATION_CUES: &[&str] = &[
    "not", "never", "no", "none", "neither", "nor", "cannot", "without",
];

pub(crate) fn is_negation_cue(word: &str) -> bool {
    NEGATION_CUES.contains(&word) || word.ends_with("n't")
}

pub(crate) fn has_negation_cue(raw: &str) -> bool {
    words(raw).iter().any(|w| is_negation_cue(w))
}

/// Pulls the first JSON value of the given bracket kind out of a model reply,
/// tolerating markdown fences and chatter around it.
pub(crate) fn json_slice(reply: &str, open: char, close: char) -> Option<&str> {
    let start = reply.find(open)?;
    let end = reply.rfind(close)?;
    (end > start).then(|| &reply[start..=end])
}

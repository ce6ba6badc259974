//! Small text helpers shared by keyword detection and message generation.

/// Lower-cases `text` and collapses whitespace runs into single spaces.
/// Typographic apostrophes are folded to `'` so "can’t" matches "can't".
pub(crate) fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase().replace('\u{2019}', "'"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// True when `phrase` occurs in `haystack` with a word boundary on both
/// sides. Both arguments must already be normalized.
pub(crate) fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    if phrase.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(phrase) {
        let start = from + pos;
        let end = start + phrase.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        // advance by one character, not one byte
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

pub(crate) fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ends_sentence(word: &str) -> bool {
    word.ends_with(['.', '!', '?'])
}

/// Shortens `text` to at most `budget` words. Whole sentences are kept when
/// the first one fits; otherwise the first `budget` words are taken.
pub(crate) fn truncate_to_words(text: &str, budget: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= budget {
        return words.join(" ");
    }
    let last_boundary = words[..budget]
        .iter()
        .rposition(|w| ends_sentence(w))
        .map(|i| i + 1);
    let keep = last_boundary.unwrap_or(budget);
    words[..keep].join(" ")
}

/// Encodes space, `%`, and line-break bytes as `%XX`.
pub(crate) fn percent_encode(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%20"),
            '%' => out.push_str("%25"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            _ => out.push(c),
        }
    }
    out
}

/// Decodes any `%XX` escape. Returns `None` on a malformed escape or when the
/// decoded bytes are not UTF-8.
pub(crate) fn percent_decode(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = text.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

//! Rule-based sentence segmentation.
//!
//! Boundaries occur only at `.`, `?` or `!` followed by whitespace and an
//! uppercase letter, digit or opening quote, with a fixed abbreviation
//! stop-list guarding `.`. Paragraphs break at blank lines. The rule set is
//! deliberately dependency-free and deterministic; anything smarter can be
//! swapped in behind [`segment_sentences`] without touching callers.

/// Words that end with a period without ending a sentence. Compared
/// case-insensitively against the non-whitespace run preceding the period.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "dr", "prof", "st", "vs", "etc", "e.g", "i.e", "jr", "sr", "no", "fig", "u.s",
];

const TERMINATORS: &[char] = &['.', '?', '!'];
const QUOTES: &[char] = &['"', '\'', '\u{2018}', '\u{201C}'];

/// Splits raw text into sentence strings plus the indices at which new
/// paragraphs start. Empty input yields two empty lists. Joining the
/// sentences back (single spaces inside a paragraph, a blank line between
/// paragraphs) reproduces [`normalize_text`] of the input.
pub fn segment_sentences(text: &str) -> (Vec<String>, Vec<usize>) {
    let mut sentences = Vec::new();
    let mut breaks = Vec::new();
    for paragraph in split_paragraphs(text) {
        let collapsed = collapse_whitespace(&paragraph);
        if collapsed.is_empty() {
            continue;
        }
        breaks.push(sentences.len());
        split_paragraph(&collapsed, &mut sentences);
    }
    (sentences, breaks)
}

/// Collapses each paragraph's whitespace to single spaces and joins
/// paragraphs with blank lines. This is the canonical text form a
/// [`crate::corpus::Document`] reconstructs.
pub fn normalize_text(text: &str) -> String {
    split_paragraphs(text)
        .into_iter()
        .map(|p| collapse_whitespace(&p))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
        } else {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    paragraphs
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Scans one whitespace-collapsed paragraph for boundaries.
fn split_paragraph(paragraph: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = paragraph.chars().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if TERMINATORS.contains(&ch) && is_boundary(&chars, i, start) {
            let sentence: String = chars[start..=i].iter().collect();
            out.push(sentence.trim().to_string());
            // Skip the whitespace run; the next sentence starts right after.
            i += 1;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            start = i;
        } else {
            i += 1;
        }
    }
    if start < chars.len() {
        let tail: String = chars[start..].iter().collect();
        let tail = tail.trim();
        if !tail.is_empty() {
            out.push(tail.to_string());
        }
    }
}

fn is_boundary(chars: &[char], i: usize, start: usize) -> bool {
    if chars[i] == '.' && is_abbreviation(chars, i, start) {
        return false;
    }
    // Must be followed by whitespace then an uppercase letter, digit or quote.
    let mut j = i + 1;
    if j >= chars.len() || !chars[j].is_whitespace() {
        return false;
    }
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    match chars.get(j) {
        Some(&next) => next.is_uppercase() || next.is_ascii_digit() || QUOTES.contains(&next),
        None => false,
    }
}

fn is_abbreviation(chars: &[char], period: usize, start: usize) -> bool {
    let mut w = period;
    while w > start && !chars[w - 1].is_whitespace() {
        w -= 1;
    }
    let word: String = chars[w..period].iter().collect();
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let lowered = word.to_lowercase();
    ABBREVIATIONS.contains(&lowered.as_str())
}

//! Sentence splitting and tokenization.
//!
//! Policy:
//! - a newline always ends a sentence;
//! - `.`, `!`, `?` (plus trailing closing quotes/brackets) end a sentence when
//!   followed by end of line or by whitespace and an uppercase letter, digit,
//!   or opening quote, unless the preceding word is a known abbreviation or a
//!   single-letter initial;
//! - words keep internal hyphens, internal periods (`U.S.`, `3.5`) and digit
//!   group commas (`1,000`); clitics `'s`, `'re`, `n't`, ... are split off;
//! - every other non-space character is its own token;
//! - normalization lowercases and maps numbers to [`NUM_TOKEN`].

use crate::textprep::document::Document;
use crate::textprep::entities::anonymize_entities;

pub const NUM_TOKEN: &str = "<num>";

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "e.g", "i.e", "inc", "ltd", "co", "corp", "gen",
    "gov", "sen", "rep", "lt", "col", "sgt", "capt", "no", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "u.s", "u.k", "u.n", "a.m", "p.m", "mt", "ft",
];

fn is_abbreviation(word: &str) -> bool {
    let w = word.trim_end_matches('.').to_lowercase();
    ABBREVIATIONS.contains(&w.as_str()) || (w.chars().count() == 1 && w.chars().all(char::is_alphabetic))
}

fn normalize_quotes(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' => '\'',
            '\u{201C}' | '\u{201D}' => '"',
            _ => c,
        })
        .collect()
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']')
}

/// Splits running text into sentence strings.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in normalize_quotes(text).lines() {
        let chars: Vec<char> = line.chars().collect();
        let mut start = 0;
        let mut i = 0;
        while i < chars.len() {
            if matches!(chars[i], '.' | '!' | '?') {
                let mut end = i + 1;
                while end < chars.len() && (matches!(chars[end], '.' | '!' | '?') || is_closer(chars[end])) {
                    end += 1;
                }
                let mut next = end;
                while next < chars.len() && chars[next].is_whitespace() {
                    next += 1;
                }
                let at_eol = next >= chars.len();
                let opens_next = !at_eol
                    && next > end
                    && (chars[next].is_uppercase()
                        || chars[next].is_ascii_digit()
                        || matches!(chars[next], '"' | '\''));
                let word_start = chars[..i]
                    .iter()
                    .rposition(|c| c.is_whitespace() || *c == '"' || *c == '(')
                    .map_or(start, |p| p + 1);
                let word: String = chars[word_start..i].iter().collect();
                let abbreviation = chars[i] == '.' && !word.is_empty() && is_abbreviation(&word);
                if at_eol || (opens_next && !abbreviation) {
                    let s: String = chars[start..end].iter().collect();
                    if !s.trim().is_empty() {
                        out.push(s.trim().to_string());
                    }
                    start = next;
                    i = next;
                    continue;
                }
                i = end;
                continue;
            }
            i += 1;
        }
        if start < chars.len() {
            let s: String = chars[start..].iter().collect();
            if !s.trim().is_empty() {
                out.push(s.trim().to_string());
            }
        }
    }
    out
}

/// Splits one sentence into case-preserving tokens.
pub fn tokenize_cased(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = normalize_quotes(sentence).chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            out.push(c.to_string());
            i += 1;
            continue;
        }
        let mut word = String::new();
        while i < chars.len() {
            let ch = chars[i];
            let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            let prev_digit = word.chars().last().is_some_and(|p| p.is_ascii_digit());
            let next_digit = chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            let joins = ch.is_alphanumeric()
                || ((ch == '-' || ch == '.') && next_alnum)
                || (ch == ',' && prev_digit && next_digit);
            if !joins {
                break;
            }
            word.push(ch);
            i += 1;
        }
        // "U.S." / "Mr." / "J." keep their final period
        if i < chars.len() && chars[i] == '.' && (word.contains('.') || is_abbreviation(&word)) {
            let after = chars.get(i + 1);
            if after.is_some_and(|a| a.is_whitespace() || *a == ',') {
                word.push('.');
                i += 1;
            }
        }
        while i < chars.len() && chars[i] == '\'' && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
            let mut rest = String::new();
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_alphabetic() {
                rest.push(chars[j]);
                j += 1;
            }
            let lower = rest.to_lowercase();
            if lower == "t" && word.to_lowercase().ends_with('n') && word.chars().count() > 1 {
                let stem: String = word.chars().take(word.chars().count() - 1).collect();
                let n: String = word.chars().last().into_iter().collect();
                out.push(stem);
                word = format!("{n}'{rest}");
                i = j;
                break;
            }
            if matches!(lower.as_str(), "s" | "re" | "ve" | "ll" | "d" | "m") {
                out.push(std::mem::replace(&mut word, format!("'{rest}")));
                i = j;
                break;
            }
            // O'Neill and similar: keep as one word
            word.push('\'');
            word.push_str(&rest);
            i = j;
        }
        out.push(word);
    }
    out
}

fn is_number(t: &str) -> bool {
    let mut digits = 0;
    for c in t.chars() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if !matches!(c, ',' | '.') {
            return false;
        }
    }
    digits > 0 && t.chars().next().is_some_and(|c| c.is_ascii_digit())
}

/// Lowercases and maps numbers to [`NUM_TOKEN`]; entity markers pass through.
pub fn normalize_token(t: &str) -> String {
    if is_number(t) {
        NUM_TOKEN.to_string()
    } else {
        t.to_lowercase()
    }
}

/// Raw text to normalized sentences of tokens. Empty text gives no sentences.
pub fn tokenize(text: &str) -> Vec<Vec<String>> {
    split_sentences(text)
        .iter()
        .map(|s| tokenize_cased(s).iter().map(|t| normalize_token(t)).collect())
        .filter(|s: &Vec<String>| !s.is_empty())
        .collect()
}

/// Full preprocessing of a cased document: entity anonymization (which needs
/// case) followed by normalization of every remaining token.
pub fn prepare_document(doc: &Document) -> Document {
    let mut out = anonymize_entities(doc);
    for s in out.sentences.iter_mut().chain(out.highlights.iter_mut().flatten()) {
        for t in s.iter_mut() {
            *t = normalize_token(t);
        }
    }
    out
}

//! English suffix stripping.
//!
//! Uses the Snowball English (Porter2) rules from `rust-stemmers`, applied
//! until the output stops changing so that `stem(stem(x)) == stem(x)`.
//! Entity markers, special symbols, and tokens without letters are returned
//! unchanged.

use rust_stemmers::{Algorithm, Stemmer};

use crate::textprep::is_entity_marker;

pub fn stem(token: &str) -> String {
    if is_entity_marker(token) || token.starts_with('<') || !token.chars().any(char::is_alphabetic) {
        return token.to_string();
    }
    let stemmer = Stemmer::create(Algorithm::English);
    let mut cur = token.to_string();
    loop {
        let next = stemmer.stem(&cur).into_owned();
        if next == cur || next.is_empty() {
            return cur;
        }
        cur = next;
    }
}

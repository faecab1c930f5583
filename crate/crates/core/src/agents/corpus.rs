//! Corpora for the Markov bot: two ship with the crate, anything else is read from disk.

use std::path::Path;

const CORPUS_A: &str = include_str!("../../corpora/corpus_a.txt");
const CORPUS_B: &str = include_str!("../../corpora/corpus_b.txt");

pub const SHIPPED: &[&str] = &["corpus_a", "corpus_b"];

pub fn shipped(name: &str) -> Option<&'static str> {
    match name {
        "corpus_a" | "a" => Some(CORPUS_A),
        "corpus_b" | "b" => Some(CORPUS_B),
        _ => None,
    }
}

/// Shipped corpus by name, otherwise a UTF-8 file path.
pub fn load(name_or_path: &str) -> Result<String, String> {
    if let Some(text) = shipped(name_or_path) {
        return Ok(text.to_string());
    }
    let path = Path::new(name_or_path);
    std::fs::read_to_string(path).map_err(|e| format!("corpus `{name_or_path}`: {e}"))
}

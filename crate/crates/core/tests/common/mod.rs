#![allow(dead_code)]
//! Independent reference implementations used as test oracles.

use std::collections::HashMap;

pub const UNK: &str = "<unk>";

/// Order-1 word model with additive smoothing and one unknown bucket,
/// counted directly from the token stream.
pub struct OracleBigram {
    vocab: Vec<String>,
    alpha: f64,
    unigram: HashMap<String, u64>,
    tokens: u64,
    pairs: HashMap<(String, String), u64>,
    followed: HashMap<String, u64>,
}

impl OracleBigram {
    pub fn new(corpus: &str, alpha: f64) -> Self {
        let toks: Vec<&str> = corpus.split_whitespace().collect();
        let mut vocab: Vec<String> = toks.iter().map(|t| t.to_string()).collect();
        vocab.sort();
        vocab.dedup();
        let mut unigram = HashMap::new();
        for t in &toks {
            *unigram.entry(t.to_string()).or_insert(0) += 1;
        }
        let mut pairs = HashMap::new();
        let mut followed = HashMap::new();
        for w in toks.windows(2) {
            *pairs.entry((w[0].to_string(), w[1].to_string())).or_insert(0) += 1;
            *followed.entry(w[0].to_string()).or_insert(0) += 1;
        }
        OracleBigram {
            vocab,
            alpha,
            unigram,
            tokens: toks.len() as u64,
            pairs,
            followed,
        }
    }

    /// Possible outputs: the vocabulary then the unknown bucket.
    pub fn outcomes(&self) -> Vec<String> {
        let mut v = self.vocab.clone();
        v.push(UNK.to_string());
        v
    }

    pub fn p(&self, prev: Option<&str>, w: &str) -> f64 {
        let (c, total) = match prev {
            None => (self.unigram.get(w).copied().unwrap_or(0), self.tokens),
            Some(p) => (
                self.pairs.get(&(p.to_string(), w.to_string())).copied().unwrap_or(0),
                self.followed.get(p).copied().unwrap_or(0),
            ),
        };
        (c as f64 + self.alpha) / (total as f64 + self.alpha * (self.vocab.len() + 1) as f64)
    }

    /// Every `length`-word message and its probability, given the last word
    /// of the message being answered.
    pub fn messages(&self, incoming_last: Option<&str>, length: usize) -> Vec<(String, f64)> {
        let outs = self.outcomes();
        let mut acc: Vec<(Vec<String>, f64)> = vec![(Vec::new(), 1.0)];
        for _ in 0..length {
            let mut next = Vec::with_capacity(acc.len() * outs.len());
            for (words, p) in &acc {
                let prev = words.last().map(String::as_str).or(incoming_last);
                for w in &outs {
                    let mut ws = words.clone();
                    ws.push(w.clone());
                    next.push((ws, p * self.p(prev, w)));
                }
            }
            acc = next;
        }
        acc.into_iter().map(|(ws, p)| (ws.join(" "), p)).collect()
    }
}

/// Laplace unigram with an unknown bucket, scoring a text word by word and
/// counting each word once scored.
pub fn oracle_background_ln(prior_texts: &[&str], text: &str) -> f64 {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut n = 0u64;
    for t in prior_texts {
        for w in t.split_whitespace() {
            *counts.entry(w.to_string()).or_insert(0) += 1;
            n += 1;
        }
    }
    let mut lp = 0.0;
    for w in text.split_whitespace() {
        let c = counts.get(w).copied().unwrap_or(0);
        lp += ((c as f64 + 1.0) / (n as f64 + counts.len() as f64 + 1.0)).ln();
        *counts.entry(w.to_string()).or_insert(0) += 1;
        n += 1;
    }
    lp
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Path of the shipped `configs/` directory.
pub fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

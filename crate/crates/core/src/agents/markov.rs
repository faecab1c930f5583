//! Word-level Markov chain with additive smoothing and an out-of-vocabulary bucket.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

/// Emitted when the sampler draws the out-of-vocabulary bucket.
pub const OOV_TOKEN: &str = "<unk>";

type TokenId = u32;

#[derive(Debug, Clone)]
struct Row {
    total: u64,
    counts: Vec<u64>,
}

/// Transition counts over a whitespace-tokenized corpus.
///
/// The corpus is one token stream. Every next-token distribution is over the
/// `V` corpus types plus one OOV bucket:
///
/// `P(w | ctx) = (c(ctx, w) + alpha) / (c(ctx) + alpha * (V + 1))`
///
/// Contexts shorter than `order` use the unigram counts. Contexts never seen
/// in training (including any containing an OOV token) have `c(ctx) = 0`,
/// which makes the distribution uniform.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    order: usize,
    alpha: f64,
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    unigram: Row,
    rows: HashMap<Vec<TokenId>, Row>,
}

impl MarkovModel {
    pub fn train(corpus: &str, order: usize, alpha: f64) -> Result<Self, String> {
        if order == 0 {
            return Err("markov order must be at least 1".into());
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(format!("smoothing alpha must be positive, got {alpha}"));
        }
        let tokens: Vec<&str> = corpus.split_whitespace().collect();
        if tokens.is_empty() {
            return Err("corpus has no tokens".into());
        }
        if tokens.contains(&OOV_TOKEN) {
            return Err(format!("corpus may not contain the reserved token {OOV_TOKEN}"));
        }
        let vocab: Vec<String> = tokens
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let index: HashMap<String, TokenId> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        let ids: Vec<TokenId> = tokens.iter().map(|t| index[*t]).collect();
        let v = vocab.len();
        let mut unigram = Row {
            total: 0,
            counts: vec![0; v],
        };
        for &id in &ids {
            unigram.counts[id as usize] += 1;
            unigram.total += 1;
        }
        let mut rows: HashMap<Vec<TokenId>, Row> = HashMap::new();
        for window in ids.windows(order + 1) {
            let row = rows.entry(window[..order].to_vec()).or_insert_with(|| Row {
                total: 0,
                counts: vec![0; v],
            });
            row.counts[window[order] as usize] += 1;
            row.total += 1;
        }
        Ok(MarkovModel {
            order,
            alpha,
            vocab,
            index,
            unigram,
            rows,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// `(c(ctx, w), c(ctx))` for a context of preceding tokens (most recent last).
    fn counts(&self, context: &[&str], token: Option<TokenId>) -> (u64, u64) {
        let row = if context.len() < self.order {
            Some(&self.unigram)
        } else {
            let tail = &context[context.len() - self.order..];
            let key: Option<Vec<TokenId>> = tail.iter().map(|t| self.id(t)).collect();
            key.and_then(|k| self.rows.get(&k))
        };
        match row {
            None => (0, 0),
            Some(r) => (token.map_or(0, |t| r.counts[t as usize]), r.total),
        }
    }

    fn denominator(&self, total: u64) -> f64 {
        total as f64 + self.alpha * (self.vocab.len() + 1) as f64
    }

    /// Smoothed probability of `token` after `context`.
    pub fn transition_probability(&self, context: &[&str], token: &str) -> f64 {
        let (c, total) = self.counts(context, self.id(token));
        (c as f64 + self.alpha) / self.denominator(total)
    }

    /// Draws one token after `context`, returning [`OOV_TOKEN`] for the bucket.
    ///
    /// Outcomes are laid out in sorted vocabulary order followed by the bucket,
    /// and one uniform draw in `[0, 1)` picks the first cumulative mass above it.
    pub fn sample_next<R: Rng + ?Sized>(&self, context: &[&str], rng: &mut R) -> String {
        let (_, total) = self.counts(context, None);
        let denom = self.denominator(total);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, word) in self.vocab.iter().enumerate() {
            let (c, _) = self.counts(context, Some(i as TokenId));
            acc += (c as f64 + self.alpha) / denom;
            if u < acc {
                return word.clone();
            }
        }
        OOV_TOKEN.to_string()
    }
}

use std::collections::HashMap;

/// Laplace-smoothed unigram over whatever tokens the session has produced so far.
///
/// With `N` observed tokens over `V` distinct types, a token seen `c` times
/// gets `(c + 1) / (N + V + 1)`; the extra `+1` in the denominator is the
/// out-of-vocabulary bucket. A text is scored word by word, each word being
/// counted as observed once it has been scored, so its probability is the
/// chain-rule product under the adapting model. The subject assumes nothing
/// about its counterpart beyond this, so it plays the role of the "someone
/// else" hypothesis.
#[derive(Debug, Clone, Default)]
pub struct BackgroundModel {
    counts: HashMap<String, u64>,
    total: u64,
}

impl BackgroundModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut m = Self::new();
        for t in texts {
            m.observe(t);
        }
        m
    }

    pub fn observe(&mut self, text: &str) {
        for tok in text.split_whitespace() {
            *self.counts.entry(tok.to_string()).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    pub fn token_probability(&self, token: &str) -> f64 {
        let c = self.counts.get(token).copied().unwrap_or(0);
        (c as f64 + 1.0) / (self.total as f64 + self.counts.len() as f64 + 1.0)
    }

    pub fn probability(&self, text: &str) -> f64 {
        self.log_probability(text).exp()
    }

    pub fn log_probability(&self, text: &str) -> f64 {
        let mut m = self.clone();
        let mut lp = 0.0;
        for tok in text.split_whitespace() {
            lp += m.token_probability(tok).ln();
            m.observe(tok);
        }
        lp
    }
}

use std::collections::BTreeMap;

use serde::Serialize;

use super::TrialResult;
use crate::types::{Condition, VerdictLabel};

/// Counts of true condition (rows: other, mimicker, mirror) against verdict
/// label (columns: other, mimicker, mirror, undecided).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 4]; 3],
}

fn row(c: Condition) -> Option<usize> {
    Condition::CLASSIFIABLE.iter().position(|x| *x == c)
}

fn col(l: VerdictLabel) -> usize {
    VerdictLabel::ALL.iter().position(|x| *x == l).expect("every label has a column")
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one trial. Self-loop sessions have no row and are ignored.
    pub fn record(&mut self, truth: Condition, verdict: VerdictLabel) {
        if let Some(r) = row(truth) {
            self.counts[r][col(verdict)] += 1;
        }
    }

    pub fn count(&self, truth: Condition, verdict: VerdictLabel) -> u64 {
        row(truth).map_or(0, |r| self.counts[r][col(verdict)])
    }

    pub fn row_total(&self, truth: Condition) -> u64 {
        row(truth).map_or(0, |r| self.counts[r].iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        Condition::CLASSIFIABLE
            .iter()
            .map(|c| self.count(*c, c.expected_verdict().expect("classifiable")))
            .sum()
    }

    /// Correct verdicts over all scored trials; undecided counts as wrong.
    /// `None` when nothing was scored.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    pub fn condition_accuracy(&self, truth: Condition) -> Option<f64> {
        let n = self.row_total(truth);
        let expected = truth.expected_verdict()?;
        (n > 0).then(|| self.count(truth, expected) as f64 / n as f64)
    }

    pub fn to_map(&self) -> BTreeMap<String, BTreeMap<String, u64>> {
        Condition::CLASSIFIABLE
            .iter()
            .map(|c| {
                let cells = VerdictLabel::ALL
                    .iter()
                    .map(|l| (l.label().to_string(), self.count(*c, *l)))
                    .collect();
                (c.label().to_string(), cells)
            })
            .collect()
    }
}

/// Tallies every non-aborted trial.
pub fn score(results: &[TrialResult]) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::new();
    for r in results.iter().filter(|r| r.aborted.is_none()) {
        if let Some(v) = &r.verdict {
            m.record(r.condition, v.label());
        }
    }
    m
}

/// A number, or `"n/a"` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    NotApplicable(&'static str),
}

impl From<Option<f64>> for Metric {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Metric::NotApplicable("n/a"), Metric::Value)
    }
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::NotApplicable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub kind: String,
    /// Set for strategies that hard-code the answer instead of working it out.
    pub baseline_cheat: bool,
    pub self_simulation: bool,
    pub analytic_likelihood: bool,
    /// Trials where self-simulation was unavailable and the strategy fell back to probing.
    pub downgraded_trials: u64,
}

/// Aggregate written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub master_seed: u64,
    pub trials_per_condition: u32,
    pub budget: u32,
    pub subject: String,
    pub strategy: StrategyReport,
    pub completed: u64,
    pub aborted: BTreeMap<String, u64>,
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
    pub accuracy: Metric,
    pub condition_accuracy: BTreeMap<String, Metric>,
    /// Mean subject turns over trials that ended in a decided verdict.
    pub mean_turns_to_verdict: BTreeMap<String, Metric>,
    pub protocol_violations: u64,
    #[serde(skip)]
    pub matrix: ConfusionMatrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{SessionId, Transcript, Verdict};

    fn result(c: Condition, label: VerdictLabel) -> TrialResult {
        let verdict = if label == VerdictLabel::Undecided {
            Verdict::undecided("budget", 0.5, 3)
        } else {
            Verdict::decided(label, 0.995, 3)
        };
        TrialResult::for_test(c, Some(verdict), None, Transcript::new(SessionId::new("s")))
    }

    #[test]
    fn all_correct_is_diagonal() {
        let rs: Vec<_> = Condition::CLASSIFIABLE
            .iter()
            .flat_map(|c| (0..10).map(move |_| result(*c, c.expected_verdict().unwrap())))
            .collect();
        let m = score(&rs);
        assert_eq!(m.total(), 30);
        assert_eq!(m.accuracy(), Some(1.0));
        for c in Condition::CLASSIFIABLE {
            assert_eq!(m.row_total(c), 10);
            assert_eq!(m.count(c, c.expected_verdict().unwrap()), 10);
        }
    }

    #[test]
    fn hand_counted_errors() {
        let mut rs = vec![
            result(Condition::Other, VerdictLabel::Other),
            result(Condition::Other, VerdictLabel::Mimicker),
            result(Condition::Mimicker, VerdictLabel::Mimicker),
            result(Condition::Mirror, VerdictLabel::Mirror),
            result(Condition::Mirror, VerdictLabel::Undecided),
        ];
        rs.push(TrialResult::for_test(
            Condition::Mirror,
            None,
            Some("counterpart failure".into()),
            Transcript::new(SessionId::new("s")),
        ));
        let m = score(&rs);
        assert_eq!(m.total(), 5);
        assert_eq!(m.correct(), 3);
        assert_eq!(m.count(Condition::Other, VerdictLabel::Mimicker), 1);
        assert_eq!(m.count(Condition::Mirror, VerdictLabel::Undecided), 1);
        assert_eq!(m.accuracy(), Some(0.6));
        assert_eq!(m.condition_accuracy(Condition::Other), Some(0.5));
        assert_eq!(m.condition_accuracy(Condition::Mimicker), Some(1.0));
    }

    #[test]
    fn empty_results_have_no_accuracy() {
        let m = score(&[]);
        assert_eq!(m.total(), 0);
        assert_eq!(m.accuracy(), None);
        assert_eq!(serde_json::to_string(&Metric::from(m.accuracy())).unwrap(), "\"n/a\"");
    }
}

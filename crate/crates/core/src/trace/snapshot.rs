use serde::{Deserialize, Serialize};

use super::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_sign(y: f64) -> Option<Self> {
        if y == 1.0 {
            Some(Label::Positive)
        } else if y == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

/// One labeled `(x, d)` pair, the unit of classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub x: Vec<f64>,
    pub d: Vec<f64>,
    pub y: Label,
    pub weight: f64,
}

impl Snapshot {
    pub fn new(x: Vec<f64>, d: Vec<f64>, y: Label) -> Self {
        Self { x, d, y, weight: 1.0 }
    }
}

/// Scores a sample by how informative it is as a counter-example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Importance {
    /// Every sample scores zero.
    Uniform,
    /// Euclidean distance between two planar positions stored in `x`.
    Separation { first: [usize; 2], second: [usize; 2] },
    /// `-|x[index] - target|`.
    Offset { index: usize, target: f64 },
}

impl Importance {
    pub fn score(&self, x: &[f64], _d: &[f64]) -> f64 {
        match self {
            Importance::Uniform => 0.0,
            Importance::Separation { first, second } => {
                (x[first[0]] - x[second[0]]).hypot(x[first[1]] - x[second[1]])
            }
            Importance::Offset { index, target } => -(x[*index] - target).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdRule {
    Absolute(f64),
    /// Quantile of the scores within the trace being processed.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSelector {
    pub importance: Importance,
    pub threshold: ThresholdRule,
    pub max_per_trace: usize,
    /// Samples after the first one scoring at or above this are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

impl SnapshotSelector {
    pub fn all() -> Self {
        Self {
            importance: Importance::Uniform,
            threshold: ThresholdRule::Absolute(f64::NEG_INFINITY),
            max_per_trace: usize::MAX,
            cutoff: None,
        }
    }

    /// Picks at most `max_per_trace` samples scoring at or above the
    /// threshold, highest scores first, returned in time order.
    pub fn select_indices(&self, trace: &Trace) -> Vec<usize> {
        let mut scores: Vec<f64> = trace
            .samples()
            .iter()
            .map(|s| self.importance.score(&s.x, &s.d))
            .collect();
        if let Some(cut) = self.cutoff {
            if let Some(i) = scores.iter().position(|&s| s >= cut) {
                scores.truncate(i + 1);
            }
        }
        let threshold = match self.threshold {
            ThresholdRule::Absolute(t) => t,
            ThresholdRule::Quantile(q) => quantile(&scores, q),
        };
        let mut picked: Vec<usize> = (0..scores.len())
            .filter(|&i| scores[i] >= threshold)
            .collect();
        picked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        picked.truncate(self.max_per_trace.max(1));
        picked.sort_unstable();
        picked
    }

    pub fn extract(&self, trace: &Trace, label: Label) -> Vec<Snapshot> {
        self.select_indices(trace)
            .into_iter()
            .map(|i| {
                let s = trace.sample(i);
                Snapshot::new(s.x.clone(), s.d.clone(), label)
            })
            .collect()
    }
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[pos]
}

/// Convenience wrapper matching the free-function form used elsewhere.
pub fn extract_snapshots(trace: &Trace, label: Label, selector: &SnapshotSelector) -> Vec<Snapshot> {
    selector.extract(trace, label)
}

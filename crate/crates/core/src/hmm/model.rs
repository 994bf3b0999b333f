use std::fmt;
use std::str::FromStr;

use super::gmm::GaussianMixture;
use crate::error::{ensure_dim, Error, Result};

/// Probability given to the silence skip and back transitions before renormalization.
pub const SILENCE_EXTRA_TRANSITION: f64 = 0.1;

/// Ordered viseme labels of one sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Transcript {
    pub labels: Vec<String>,
}

impl Transcript {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.labels.join(" "))
    }
}

impl FromStr for Transcript {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Transcript::new(s.split_whitespace()))
    }
}

/// Transition matrix over `{entry, s_1..s_n, exit}` with an explicit topology mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    n: usize,
    /// Row-major `(n + 2) x (n + 2)`.
    probs: Vec<f64>,
    mask: Vec<bool>,
}

impl Transitions {
    /// Left-to-right topology: entry to `s_1`, self loops, `s_i -> s_{i+1}`, `s_n -> exit`.
    /// With `loops`, adds the skip `s_1 -> s_n` and the back transition `s_n -> s_1`
    /// (only when `n >= 3`). Allowed rows start uniform; the extra transitions get
    /// [`SILENCE_EXTRA_TRANSITION`] and the row is renormalized.
    pub fn topology(n: usize, loops: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a model needs at least one emitting state"));
        }
        let size = n + 2;
        let mut mask = vec![false; size * size];
        mask[1] = true;
        for i in 1..=n {
            mask[i * size + i] = true;
            mask[i * size + i + 1] = true;
        }
        let extra = loops && n >= 3;
        let mut probs = vec![0.0; size * size];
        for i in 0..=n {
            let row = &mask[i * size..(i + 1) * size];
            let k = row.iter().filter(|&&m| m).count() as f64;
            for j in 0..size {
                if row[j] {
                    probs[i * size + j] = 1.0 / k;
                }
            }
        }
        if extra {
            for (from, to) in [(1, n), (n, 1)] {
                mask[from * size + to] = true;
                probs[from * size + to] = SILENCE_EXTRA_TRANSITION;
                let total: f64 = probs[from * size..(from + 1) * size].iter().sum();
                probs[from * size..(from + 1) * size].iter_mut().for_each(|p| *p /= total);
            }
        }
        Ok(Self { n, probs, mask })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.n + 2
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[from * self.size() + to]
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.mask[from * self.size() + to]
    }

    pub fn log_prob(&self, from: usize, to: usize) -> f64 {
        if self.allowed(from, to) {
            self.prob(from, to).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Sets row `from` from unnormalized counts over its allowed entries; rows with no
    /// mass are left unchanged.
    pub fn set_row(&mut self, from: usize, counts: &[f64]) {
        let size = self.size();
        let total: f64 = (0..size).filter(|&j| self.allowed(from, j)).map(|j| counts[j]).sum();
        if !(total > 0.0) {
            return;
        }
        for j in 0..size {
            self.probs[from * size + j] = if self.allowed(from, j) { counts[j] / total } else { 0.0 };
        }
    }

    pub(crate) fn from_parts(n: usize, probs: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        let size = n + 2;
        ensure_dim(size * size, probs.len())?;
        ensure_dim(size * size, mask.len())?;
        let t = Self { n, probs, mask };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let size = self.size();
        for i in 0..size {
            let row = &self.probs[i * size..(i + 1) * size];
            for j in 0..size {
                let p = row[j];
                if !self.allowed(i, j) && p != 0.0 {
                    return Err(Error::invalid(format!("disallowed transition {i}->{j} has probability {p}")));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("transition {i}->{j} probability {p}")));
                }
            }
            let total: f64 = row.iter().sum();
            let exit_row = i == size - 1;
            if (exit_row && total != 0.0) || (!exit_row && (total - 1.0).abs() > 1e-10) {
                return Err(Error::invalid(format!("transition row {i} sums to {total}")));
            }
        }
        if self.allowed(0, size - 1) {
            return Err(Error::invalid("entry-to-exit transitions are not supported"));
        }
        Ok(())
    }

    /// Fewest emitting states visited between entry and exit.
    pub fn min_duration(&self) -> usize {
        let size = self.size();
        let mut dist = vec![usize::MAX; size];
        dist[0] = 0;
        let mut queue = std::collections::VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for j in 0..size {
                if self.allowed(i, j) && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist[size - 1].saturating_sub(1)
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// One viseme class: emitting states with mixture emissions.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmModel {
    pub label: String,
    pub states: Vec<GaussianMixture>,
    pub transitions: Transitions,
}

impl HmmModel {
    pub fn new(label: impl Into<String>, states: Vec<GaussianMixture>, transitions: Transitions) -> Result<Self> {
        ensure_dim(transitions.n_states(), states.len())?;
        let d = states[0].dim();
        for s in &states {
            ensure_dim(d, s.dim())?;
        }
        transitions.validate()?;
        Ok(Self {
            label: label.into(),
            states,
            transitions,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }
}

/// The recognizer: one model per class plus training metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmSet {
    pub models: Vec<HmmModel>,
    /// Per-dimension variance floor applied during training.
    pub variance_floor: Vec<f64>,
    /// Dimensions whose global variance was at or below the floor at initialization.
    pub floored_dims: Vec<usize>,
    /// Corpus log-likelihood of every embedded training run, grouped by mixture size.
    pub ll_history: Vec<(usize, Vec<f64>)>,
}

impl HmmSet {
    pub fn new(models: Vec<HmmModel>, variance_floor: Vec<f64>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::invalid("an HMM set needs at least one model"));
        }
        let d = models[0].dim();
        ensure_dim(d, variance_floor.len())?;
        let mut seen = std::collections::HashSet::new();
        for m in &models {
            ensure_dim(d, m.dim())?;
            if !seen.insert(m.label.as_str()) {
                return Err(Error::invalid(format!("duplicate model label '{}'", m.label)));
            }
        }
        Ok(Self {
            models,
            variance_floor,
            floored_dims: vec![],
            ll_history: vec![],
        })
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.models.iter().position(|m| m.label == label)
    }

    pub fn model(&self, label: &str) -> Option<&HmmModel> {
        self.models.iter().find(|m| m.label == label)
    }

    /// Components per state (the maximum over states).
    pub fn n_components(&self) -> usize {
        self.models
            .iter()
            .flat_map(|m| m.states.iter().map(GaussianMixture::n_components))
            .max()
            .unwrap_or(0)
    }

    /// Maps transcript labels to model indices.
    pub fn resolve(&self, t: &Transcript) -> Result<Vec<usize>> {
        t.labels
            .iter()
            .map(|l| self.index_of(l).ok_or_else(|| Error::invalid(format!("label '{l}' has no model"))))
            .collect()
    }
}

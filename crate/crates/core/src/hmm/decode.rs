//! Token-passing Viterbi over a loop of class models with uniform class priors.

use rayon::prelude::*;

use super::model::{HmmSet, Transcript};
use crate::error::{ensure_dim, Result};
use crate::features::FeatureSequence;

#[derive(Clone, Copy)]
struct Token {
    score: f64,
    /// Word-end record of the previous class on this path.
    hist: Option<usize>,
}

const DEAD: Token = Token {
    score: f64::NEG_INFINITY,
    hist: None,
};

struct Record {
    model: usize,
    prev: Option<usize>,
}

/// Best label sequence and its path log-score. `insertion_penalty` is subtracted from
/// the score every time a class model is entered.
pub fn viterbi_decode_scored(set: &HmmSet, features: &FeatureSequence, insertion_penalty: f64) -> Result<(Transcript, f64)> {
    ensure_dim(set.dim(), features.dim())?;
    let frames = features.frames();
    if frames.is_empty() {
        return Ok((Transcript::default(), 0.0));
    }
    let n_models = set.models.len();
    let enter_cost = -(n_models as f64).ln() - insertion_penalty;
    let mut records: Vec<Record> = Vec::with_capacity(frames.len());
    let mut tokens: Vec<Vec<Token>> = set.models.iter().map(|m| vec![DEAD; m.n_states()]).collect();
    let mut next = tokens.clone();
    let mut scratch = Vec::new();
    let mut entry = Token {
        score: enter_cost,
        hist: None,
    };
    let mut best_exit = DEAD;
    for x in frames {
        for (m, model) in set.models.iter().enumerate() {
            let t = &model.transitions;
            let n = model.n_states();
            for j in 1..=n {
                let mut best = DEAD;
                for i in 1..=n {
                    if t.allowed(i, j) {
                        let s = tokens[m][i - 1].score + t.log_prob(i, j);
                        if s > best.score {
                            best = Token {
                                score: s,
                                hist: tokens[m][i - 1].hist,
                            };
                        }
                    }
                }
                if t.allowed(0, j) {
                    let s = entry.score + t.log_prob(0, j);
                    if s > best.score {
                        best = Token { score: s, hist: entry.hist };
                    }
                }
                if best.score > f64::NEG_INFINITY {
                    best.score += model.states[j - 1].logpdf_unchecked(x, &mut scratch);
                }
                next[m][j - 1] = best;
            }
        }
        std::mem::swap(&mut tokens, &mut next);
        // best class end at this frame; ties go to the lower model index
        best_exit = DEAD;
        let mut exit_model = 0;
        for (m, model) in set.models.iter().enumerate() {
            let t = &model.transitions;
            let n = model.n_states();
            for i in 1..=n {
                if t.allowed(i, n + 1) {
                    let s = tokens[m][i - 1].score + t.log_prob(i, n + 1);
                    if s > best_exit.score {
                        best_exit = Token {
                            score: s,
                            hist: tokens[m][i - 1].hist,
                        };
                        exit_model = m;
                    }
                }
            }
        }
        if best_exit.score > f64::NEG_INFINITY {
            records.push(Record {
                model: exit_model,
                prev: best_exit.hist,
            });
            entry = Token {
                score: best_exit.score + enter_cost,
                hist: Some(records.len() - 1),
            };
        } else {
            entry = DEAD;
        }
    }
    if best_exit.score == f64::NEG_INFINITY {
        return Ok((Transcript::default(), f64::NEG_INFINITY));
    }
    let mut labels = Vec::new();
    let mut cur = Some(records.len() - 1);
    while let Some(r) = cur {
        labels.push(set.models[records[r].model].label.clone());
        cur = records[r].prev;
    }
    labels.reverse();
    Ok((Transcript { labels }, best_exit.score))
}

pub fn viterbi_decode(set: &HmmSet, features: &FeatureSequence, insertion_penalty: f64) -> Result<Transcript> {
    Ok(viterbi_decode_scored(set, features, insertion_penalty)?.0)
}

/// Decodes every sequence in parallel, preserving order.
pub fn decode_all(set: &HmmSet, sequences: &[FeatureSequence], insertion_penalty: f64) -> Result<Vec<Transcript>> {
    sequences
        .par_iter()
        .map(|f| viterbi_decode(set, f, insertion_penalty))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::hmm::gmm::GaussianMixture;
    use crate::hmm::model::{HmmModel, Transitions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(rng: &mut ChaCha8Rng, n_classes: usize, n_states: usize) -> HmmSet {
        let models = (0..n_classes)
            .map(|c| {
                let states = (0..n_states)
                    .map(|_| GaussianMixture::single(vec![rng.random_range(-2.0..2.0)], vec![rng.random_range(0.3..2.0)]).unwrap())
                    .collect();
                let mut t = Transitions::topology(n_states, false).unwrap();
                let size = n_states + 2;
                for i in 1..=n_states {
                    let mut row = vec![0.0; size];
                    row[i] = rng.random_range(0.1..0.9);
                    row[i + 1] = 1.0 - row[i];
                    t.set_row(i, &row);
                }
                HmmModel::new(format!("c{c}"), states, t).unwrap()
            })
            .collect();
        HmmSet::new(models, vec![1e-4]).unwrap()
    }

    fn seq(v: &[f64]) -> FeatureSequence {
        FeatureSequence::new(v.iter().map(|x| vec![*x]).collect(), 30.0, FeatureKind::Dct).unwrap()
    }

    #[test]
    fn single_class_yields_one_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = random_set(&mut rng, 1, 3);
        let t = viterbi_decode(&set, &seq(&[0.1, 0.4, -0.3, 0.9, 0.0, 0.2]), 10.0).unwrap();
        assert_eq!(t.labels, vec!["c0"]);
        // shorter than any path through the model
        assert!(viterbi_decode(&set, &seq(&[0.0]), 0.0).unwrap().is_empty());
        assert_eq!(viterbi_decode(&random_set(&mut rng, 2, 1), &seq(&[0.0]), 0.0).unwrap().len(), 1);
    }

    #[test]
    fn penalty_sweep_never_adds_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let set = random_set(&mut rng, 4, 2);
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut last = usize::MAX;
            for p in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0] {
                let n = viterbi_decode(&set, &seq(&x), p).unwrap().len();
                assert!(n <= last);
                last = n;
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_set(&mut rng, 2, 1);
        let f = FeatureSequence::new(vec![vec![0.0, 1.0]], 30.0, FeatureKind::Dct).unwrap();
        assert!(viterbi_decode(&set, &f, 0.0).is_err());
    }
}

//! Flat-start initialization, embedded Baum-Welch re-estimation and mixture growth.
//!
//! For each training sentence the class models named by its transcript are chained into
//! one composite model (exit of one feeds the entry of the next) and forward-backward
//! runs over the composite in the log domain. Statistics are accumulated per class
//! model, so repeated labels share parameters.

use rayon::prelude::*;

use super::gmm::{log_add, log_sum_exp, GaussianMixture, MAX_COMPONENTS};
use super::model::{HmmModel, HmmSet, Transcript, Transitions};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;

pub const DEFAULT_STATES: usize = 3;
pub const DEFAULT_FLOOR_SCALE: f64 = 1e-4;
pub const DEFAULT_SCHEDULE: [usize; 6] = [1, 2, 4, 8, 16, 20];
pub const DEFAULT_RUNS: usize = 5;
/// Lower bound on mixture weights after re-estimation.
pub const MIN_WEIGHT: f64 = 1e-5;
/// Absolute variance floor used when a dimension has no variance at all.
const MIN_VARIANCE: f64 = 1e-12;
/// Components with less occupancy keep their mean and variance.
const MIN_OCCUPANCY: f64 = 1e-10;
/// Sentences per accumulation chunk; fixed so results do not depend on thread count.
const CHUNK: usize = 4;

/// One training or test sentence.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureSequence,
    pub transcript: Transcript,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmmConfig {
    pub n_states: usize,
    /// Label of the class that gets skip and back transitions.
    pub silence: Option<String>,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub floor_scale: f64,
    /// Components per state after each growth step.
    pub schedule: Vec<usize>,
    /// Embedded re-estimation runs after each growth step.
    pub runs: usize,
    pub max_components: usize,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            n_states: DEFAULT_STATES,
            silence: Some(crate::synth::SILENCE.to_string()),
            floor_scale: DEFAULT_FLOOR_SCALE,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            runs: DEFAULT_RUNS,
            max_components: MAX_COMPONENTS,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::invalid("models need at least one emitting state"));
        }
        if !(self.floor_scale > 0.0) {
            return Err(Error::invalid("variance floor scale must be positive"));
        }
        if self.schedule.is_empty() || self.schedule[0] == 0 {
            return Err(Error::invalid("mixture schedule must start at 1 or more components"));
        }
        if self.schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("mixture schedule must be non-decreasing"));
        }
        if *self.schedule.last().unwrap() > self.max_components {
            return Err(Error::invalid(format!(
                "mixture schedule exceeds {} components",
                self.max_components
            )));
        }
        Ok(())
    }
}

/// Global statistics of all frames copied into every state of every model, one
/// component each, uniform allowed transitions.
pub fn flat_start(corpus: &[Utterance], labels: &[String], config: &HmmConfig) -> Result<HmmSet> {
    config.validate()?;
    if labels.is_empty() {
        return Err(Error::invalid("no class labels"));
    }
    let frames: Vec<&Vec<f64>> = corpus.iter().flat_map(|u| u.features.frames()).collect();
    if frames.is_empty() {
        return Err(Error::invalid("flat start needs a non-empty corpus"));
    }
    let d = frames[0].len();
    if let Some(u) = corpus.iter().find(|u| u.features.dim() != d) {
        return Err(Error::invalid(format!("sentence '{}' has dimension {} not {d}", u.id, u.features.dim())));
    }
    let n = frames.len() as f64;
    let mut mean = vec![0.0; d];
    for f in &frames {
        for (m, v) in mean.iter_mut().zip(f.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for f in &frames {
        for ((s, v), m) in var.iter_mut().zip(f.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    let floor: Vec<f64> = var.iter().map(|v| (config.floor_scale * v).max(MIN_VARIANCE)).collect();
    let mut floored_dims = Vec::new();
    for (i, (v, f)) in var.iter_mut().zip(&floor).enumerate() {
        if *v <= *f {
            *v = *f;
            floored_dims.push(i);
        }
    }
    if !floored_dims.is_empty() {
        log::warn!("flat start: {} dimension(s) have no variance and were floored", floored_dims.len());
    }
    let state = GaussianMixture::single(mean, var)?;
    let models = labels
        .iter()
        .map(|l| {
            let silence = config.silence.as_deref() == Some(l.as_str());
            let trans = Transitions::topology(config.n_states, silence)?;
            HmmModel::new(l.clone(), vec![state.clone(); config.n_states], trans)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = HmmSet::new(models, floor)?;
    set.floored_dims = floored_dims;
    Ok(set)
}

/// Splits the heaviest component of every state until each has `target` components.
pub fn split_mixtures(set: &HmmSet, target: usize, max_components: usize) -> Result<HmmSet> {
    if target > max_components {
        return Err(Error::invalid(format!("{target} components exceeds the limit of {max_components}")));
    }
    let mut out = set.clone();
    for m in &mut out.models {
        for s in &mut m.states {
            if target < s.n_components() {
                return Err(Error::invalid(format!(
                    "cannot shrink '{}' from {} to {target} components",
                    m.label,
                    s.n_components()
                )));
            }
            while s.n_components() < target {
                s.split_heaviest();
            }
        }
    }
    Ok(out)
}

/// One emitting state of a composite sentence model.
struct Node {
    model: usize,
    /// 1-based state index inside its model.
    state: usize,
}

/// A transition inside the composite, with the class-model transitions it counts toward.
#[derive(Clone, Copy)]
struct Arc {
    from: usize,
    to: usize,
    logp: f64,
    /// `(model, row, col)` of the transition in class-model coordinates.
    credit: (usize, usize, usize),
    /// For cross-model arcs, the entry transition of the next model.
    entry: Option<(usize, usize, usize)>,
}

struct Composite {
    nodes: Vec<Node>,
    /// `log a(entry -> node)` for the first model's states.
    start: Vec<f64>,
    /// `log a(node -> exit)` for the last model's states.
    finish: Vec<f64>,
    /// Arcs grouped by destination.
    incoming: Vec<Vec<Arc>>,
    /// Arcs grouped by source.
    outgoing: Vec<Vec<Arc>>,
    min_frames: usize,
}

impl Composite {
    fn build(set: &HmmSet, seq: &[usize]) -> Composite {
        let mut nodes = Vec::new();
        let mut offsets = Vec::with_capacity(seq.len());
        for &m in seq {
            offsets.push(nodes.len());
            for s in 1..=set.models[m].n_states() {
                nodes.push(Node { model: m, state: s });
            }
        }
        let total = nodes.len();
        let mut start = vec![f64::NEG_INFINITY; total];
        let mut finish = vec![f64::NEG_INFINITY; total];
        let mut arcs = Vec::new();
        for (pos, &m) in seq.iter().enumerate() {
            let t = &set.models[m].transitions;
            let n = t.n_states();
            let off = offsets[pos];
            for i in 1..=n {
                for j in 1..=n {
                    if t.allowed(i, j) {
                        arcs.push(Arc {
                            from: off + i - 1,
                            to: off + j - 1,
                            logp: t.log_prob(i, j),
                            credit: (m, i, j),
                            entry: None,
                        });
                    }
                }
                if t.allowed(i, n + 1) {
                    if pos + 1 < seq.len() {
                        let nm = seq[pos + 1];
                        let nt = &set.models[nm].transitions;
                        for j in 1..=nt.n_states() {
                            if nt.allowed(0, j) {
                                arcs.push(Arc {
                                    from: off + i - 1,
                                    to: offsets[pos + 1] + j - 1,
                                    logp: t.log_prob(i, n + 1) + nt.log_prob(0, j),
                                    credit: (m, i, n + 1),
                                    entry: Some((nm, 0, j)),
                                });
                            }
                        }
                    } else {
                        finish[off + i - 1] = t.log_prob(i, n + 1);
                    }
                }
            }
            if pos == 0 {
                for j in 1..=n {
                    start[off + j - 1] = t.log_prob(0, j);
                }
            }
        }
        let mut incoming = vec![Vec::new(); total];
        let mut outgoing = vec![Vec::new(); total];
        for a in arcs {
            incoming[a.to].push(a);
            outgoing[a.from].push(a);
        }
        let min_frames = seq.iter().map(|&m| set.models[m].transitions.min_duration()).sum();
        Composite {
            nodes,
            start,
            finish,
            incoming,
            outgoing,
            min_frames,
        }
    }
}

/// Forward and backward lattices of one sentence.
struct Lattice {
    /// `T x S` emission log-likelihoods.
    emit: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    ll_forward: f64,
    ll_backward: f64,
}

fn forward_backward(set: &HmmSet, comp: &Composite, frames: &[Vec<f64>]) -> Lattice {
    let t_len = frames.len();
    let s = comp.nodes.len();
    let mut emit = vec![0.0; t_len * s];
    let mut scratch = Vec::new();
    for (t, x) in frames.iter().enumerate() {
        for (j, node) in comp.nodes.iter().enumerate() {
            emit[t * s + j] = set.models[node.model].states[node.state - 1].logpdf_unchecked(x, &mut scratch);
        }
    }
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s];
    for j in 0..s {
        alpha[j] = comp.start[j] + emit[j];
    }
    for t in 1..t_len {
        for j in 0..s {
            let mut acc = f64::NEG_INFINITY;
            for a in &comp.incoming[j] {
                acc = log_add(acc, alpha[(t - 1) * s + a.from] + a.logp);
            }
            alpha[t * s + j] = acc + emit[t * s + j];
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; t_len * s];
    let last = t_len - 1;
    beta[last * s..].copy_from_slice(&comp.finish);
    for t in (0..last).rev() {
        for i in 0..s {
            let mut acc = f64::NEG_INFINITY;
            for a in &comp.outgoing[i] {
                acc = log_add(acc, a.logp + emit[(t + 1) * s + a.to] + beta[(t + 1) * s + a.to]);
            }
            beta[t * s + i] = acc;
        }
    }
    let ll_forward = log_sum_exp(&(0..s).map(|i| alpha[last * s + i] + comp.finish[i]).collect::<Vec<_>>());
    let ll_backward = log_sum_exp(&(0..s).map(|j| comp.start[j] + emit[j] + beta[j]).collect::<Vec<_>>());
    Lattice {
        emit,
        alpha,
        beta,
        ll_forward,
        ll_backward,
    }
}

/// Forward and backward total log-likelihoods of one sentence under its composite model.
pub fn sentence_log_likelihood(set: &HmmSet, utt: &Utterance) -> Result<(f64, f64)> {
    let seq = set.resolve(&utt.transcript)?;
    if seq.is_empty() {
        return Err(Error::invalid(format!("sentence '{}' has an empty transcript", utt.id)));
    }
    crate::error::ensure_dim(set.dim(), utt.features.dim())?;
    let comp = Composite::build(set, &seq);
    let lat = forward_backward(set, &comp, utt.features.frames());
    Ok((lat.ll_forward, lat.ll_backward))
}

/// Sufficient statistics of one class-model state component, relative to the current
/// mean to limit cancellation.
#[derive(Clone)]
struct ComponentAcc {
    occ: f64,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

#[derive(Clone)]
struct Accumulators {
    /// `[model][state][component]`
    comps: Vec<Vec<Vec<ComponentAcc>>>,
    /// `[model]`, row-major `(n + 2)^2` expected transition counts.
    trans: Vec<Vec<f64>>,
    ll: f64,
    frames: usize,
    used: usize,
}

impl Accumulators {
    fn zeros(set: &HmmSet) -> Self {
        let d = set.dim();
        Self {
            comps: set
                .models
                .iter()
                .map(|m| {
                    m.states
                        .iter()
                        .map(|g| {
                            vec![
                                ComponentAcc {
                                    occ: 0.0,
                                    sum: vec![0.0; d],
                                    sq: vec![0.0; d],
                                };
                                g.n_components()
                            ]
                        })
                        .collect()
                })
                .collect(),
            trans: set.models.iter().map(|m| vec![0.0; m.transitions.size().pow(2)]).collect(),
            ll: 0.0,
            frames: 0,
            used: 0,
        }
    }

    fn add(&mut self, other: &Accumulators) {
        for (a, b) in self.comps.iter_mut().flatten().flatten().zip(other.comps.iter().flatten().flatten()) {
            a.occ += b.occ;
            a.sum.iter_mut().zip(&b.sum).for_each(|(x, y)| *x += y);
            a.sq.iter_mut().zip(&b.sq).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.trans.iter_mut().zip(&other.trans) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.ll += other.ll;
        self.frames += other.frames;
        self.used += other.used;
    }

    fn credit(&mut self, set: &HmmSet, (m, i, j): (usize, usize, usize), v: f64) {
        let size = set.models[m].transitions.size();
        self.trans[m][i * size + j] += v;
    }
}

/// Accumulates one sentence. Returns `false` when it cannot be aligned.
fn accumulate(set: &HmmSet, utt: &Utterance, acc: &mut Accumulators) -> Result<bool> {
    let seq = set.resolve(&utt.transcript)?;
    if seq.is_empty() {
        log::warn!("skipping '{}': empty transcript", utt.id);
        return Ok(false);
    }
    let frames = utt.features.frames();
    let comp = Composite::build(set, &seq);
    if frames.len() < comp.min_frames {
        log::warn!(
            "skipping '{}': {} frames is shorter than the {}-frame minimum path",
            utt.id,
            frames.len(),
            comp.min_frames
        );
        return Ok(false);
    }
    let lat = forward_backward(set, &comp, frames);
    let ll = lat.ll_forward;
    if !ll.is_finite() {
        log::warn!("skipping '{}': no finite alignment", utt.id);
        return Ok(false);
    }
    let s = comp.nodes.len();
    let t_len = frames.len();
    let mut scratch = Vec::new();
    for t in 0..t_len {
        let x = &frames[t];
        for (j, node) in comp.nodes.iter().enumerate() {
            let g = lat.alpha[t * s + j] + lat.beta[t * s + j] - ll;
            if g < -700.0 {
                continue;
            }
            let gamma = g.exp();
            let mix = &set.models[node.model].states[node.state - 1];
            mix.component_logpdfs(x, &mut scratch);
            let lb = lat.emit[t * s + j];
            let state_acc = &mut acc.comps[node.model][node.state - 1];
            for (k, lc) in scratch.iter().enumerate() {
                let w = gamma * (lc - lb).exp();
                if w == 0.0 {
                    continue;
                }
                let ca = &mut state_acc[k];
                ca.occ += w;
                for ((su, sq), (xi, mi)) in ca.sum.iter_mut().zip(ca.sq.iter_mut()).zip(x.iter().zip(&mix.means()[k])) {
                    let z = xi - mi;
                    *su += w * z;
                    *sq += w * z * z;
                }
            }
        }
    }
    // transition counts
    for j in 0..s {
        if comp.start[j] > f64::NEG_INFINITY {
            let g = (comp.start[j] + lat.emit[j] + lat.beta[j] - ll).exp();
            let node = &comp.nodes[j];
            acc.credit(set, (node.model, 0, node.state), g);
        }
        if comp.finish[j] > f64::NEG_INFINITY {
            let g = (lat.alpha[(t_len - 1) * s + j] + comp.finish[j] - ll).exp();
            let node = &comp.nodes[j];
            let n = set.models[node.model].n_states();
            acc.credit(set, (node.model, node.state, n + 1), g);
        }
    }
    for t in 0..t_len - 1 {
        for i in 0..s {
            let a_i = lat.alpha[t * s + i];
            if a_i == f64::NEG_INFINITY {
                continue;
            }
            for a in &comp.outgoing[i] {
                let xi = a_i + a.logp + lat.emit[(t + 1) * s + a.to] + lat.beta[(t + 1) * s + a.to] - ll;
                if xi < -700.0 {
                    continue;
                }
                let v = xi.exp();
                acc.credit(set, a.credit, v);
                if let Some(e) = a.entry {
                    acc.credit(set, e, v);
                }
            }
        }
    }
    acc.ll += ll;
    acc.frames += t_len;
    acc.used += 1;
    Ok(true)
}

/// Weights maximizing `sum occ_k log w_k` subject to `w_k >= MIN_WEIGHT`.
fn floored_weights(occ: &[f64]) -> Vec<f64> {
    let k = occ.len();
    let floor = MIN_WEIGHT.min(1.0 / k as f64);
    let mut clamped = vec![false; k];
    loop {
        let free_occ: f64 = occ.iter().zip(&clamped).filter(|(_, c)| !**c).map(|(o, _)| o).sum();
        let n_clamped = clamped.iter().filter(|c| **c).count();
        let mass = 1.0 - n_clamped as f64 * floor;
        let w: Vec<f64> = occ
            .iter()
            .zip(&clamped)
            .map(|(o, c)| if *c || free_occ <= 0.0 { floor } else { mass * o / free_occ })
            .collect();
        let mut changed = false;
        for (i, wi) in w.iter().enumerate() {
            if !clamped[i] && *wi < floor {
                clamped[i] = true;
                changed = true;
            }
        }
        if !changed {
            let total: f64 = w.iter().sum();
            return w.iter().map(|x| x / total).collect();
        }
    }
}

fn update(set: &HmmSet, acc: &Accumulators) -> Result<HmmSet> {
    let mut out = set.clone();
    let floor = &set.variance_floor;
    for (mi, model) in out.models.iter_mut().enumerate() {
        for (si, state) in model.states.iter_mut().enumerate() {
            let comps = &acc.comps[mi][si];
            let occ: Vec<f64> = comps.iter().map(|c| c.occ).collect();
            if !(occ.iter().sum::<f64>() > MIN_OCCUPANCY) {
                continue;
            }
            let weights = floored_weights(&occ);
            let mut means = state.means().to_vec();
            let mut vars = state.variances().to_vec();
            for (k, c) in comps.iter().enumerate() {
                if c.occ < MIN_OCCUPANCY {
                    continue;
                }
                for i in 0..means[k].len() {
                    let shift = c.sum[i] / c.occ;
                    means[k][i] += shift;
                    vars[k][i] = (c.sq[i] / c.occ - shift * shift).max(floor[i]);
                }
            }
            if means.iter().flatten().chain(vars.iter().flatten()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite update for '{}' state {}", model.label, si + 1)));
            }
            state.set_params(weights, means, vars);
        }
        let size = model.transitions.size();
        for row in 0..size - 1 {
            model.transitions.set_row(row, &acc.trans[mi][row * size..(row + 1) * size]);
        }
    }
    Ok(out)
}

/// `n_iters` runs of embedded re-estimation. Returns the updated set and the corpus
/// log-likelihood computed during each run (under the parameters entering that run).
pub fn embedded_reestimate(set: &HmmSet, corpus: &[Utterance], n_iters: usize) -> Result<(HmmSet, Vec<f64>)> {
    for u in corpus {
        crate::error::ensure_dim(set.dim(), u.features.dim()).map_err(|e| e.at_path(&u.id))?;
        set.resolve(&u.transcript).map_err(|e| e.at_path(&u.id))?;
    }
    let mut current = set.clone();
    let mut history = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let partials = corpus
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = Accumulators::zeros(&current);
                for u in chunk {
                    accumulate(&current, u, &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = Accumulators::zeros(&current);
        for p in &partials {
            total.add(p);
        }
        if total.used == 0 {
            return Err(Error::invalid("no training sentence could be aligned"));
        }
        history.push(total.ll);
        current = update(&current, &total)?;
    }
    Ok((current, history))
}

/// Flat start followed by the mixture schedule with `runs` re-estimations per step.
pub fn train_hmms(corpus: &[Utterance], labels: &[String], config: &HmmConfig) -> Result<HmmSet> {
    let mut set = flat_start(corpus, labels, config)?;
    for &target in &config.schedule {
        set = split_mixtures(&set, target, config.max_components)?;
        let (next, ll) = embedded_reestimate(&set, corpus, config.runs)?;
        log::info!(
            "hmm: {target} component(s), log-likelihood {:.3} -> {:.3}",
            ll.first().copied().unwrap_or(f64::NAN),
            ll.last().copied().unwrap_or(f64::NAN)
        );
        let mut history = set.ll_history.clone();
        history.push((target, ll));
        set = next;
        set.ll_history = history;
    }
    Ok(set)
}

/// Class labels in order of first appearance across transcripts, with `first` (for
/// example the silence label) moved to the front when present.
pub fn collect_labels(corpus: &[Utterance], first: Option<&str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for u in corpus {
        for l in &u.transcript.labels {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
    }
    if let Some(f) = first {
        if let Some(pos) = out.iter().position(|l| l == f) {
            let l = out.remove(pos);
            out.insert(0, l);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn utt(id: &str, frames: Vec<Vec<f64>>, labels: &[&str]) -> Utterance {
        Utterance {
            id: id.into(),
            features: FeatureSequence::new(frames, 30.0, FeatureKind::Dct).unwrap(),
            transcript: Transcript::new(labels.iter().copied()),
        }
    }

    fn one_state() -> HmmConfig {
        HmmConfig {
            n_states: 1,
            silence: None,
            ..Default::default()
        }
    }

    /// Two classes with means at -3 and +3 in every dimension.
    fn two_class_corpus(seed: u64, n: usize) -> Vec<Utterance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let labels: Vec<&str> = (0..4).map(|k| if (k + i) % 2 == 0 { "a" } else { "b" }).collect();
                let mut frames = Vec::new();
                for l in &labels {
                    let mu = if *l == "a" { -3.0 } else { 3.0 };
                    for _ in 0..rng.random_range(4..8) {
                        frames.push((0..2).map(|_| mu + noise.sample(&mut rng)).collect());
                    }
                }
                utt(&format!("u{i}"), frames, &labels)
            })
            .collect()
    }

    #[test]
    fn flat_start_copies_global_statistics() {
        let corpus = two_class_corpus(1, 3);
        let labels = vec!["sil".to_string(), "a".into(), "b".into()];
        let set = flat_start(&corpus, &labels, &HmmConfig::default()).unwrap();
        let first = &set.models[0].states[0];
        assert_eq!(set.models.len() * 3, 9);
        assert!(set.models.iter().flat_map(|m| &m.states).all(|s| s == first));
        let sil = &set.models[0].transitions;
        assert!(sil.allowed(3, 1) && sil.allowed(1, 3));
        for m in &set.models[1..] {
            assert!(!m.transitions.allowed(3, 1) && !m.transitions.allowed(1, 3));
        }
        assert!(set.floored_dims.is_empty());
    }

    #[test]
    fn constant_frames_are_floored_and_flagged() {
        let corpus = vec![utt("c", vec![vec![2.0, 5.0]; 6], &["a"])];
        let set = flat_start(&corpus, &["a".to_string()], &HmmConfig::default()).unwrap();
        assert_eq!(set.floored_dims, vec![0, 1]);
        assert_eq!(set.models[0].states[0].variances()[0], set.variance_floor.clone());
    }

    #[test]
    fn single_state_fixed_point_is_sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random_range(-1.0..3.0), rng.random_range(0.0..0.1)]).collect();
        let corpus = vec![utt("x", frames.clone(), &["a"])];
        let set = flat_start(&corpus, &["a".to_string()], &one_state()).unwrap();
        let (out, ll) = embedded_reestimate(&set, &corpus, 2).unwrap();
        let n = frames.len() as f64;
        for i in 0..2 {
            let mean = frames.iter().map(|f| f[i]).sum::<f64>() / n;
            let var = frames.iter().map(|f| (f[i] - mean).powi(2)).sum::<f64>() / n;
            let g = &out.models[0].states[0];
            assert!((g.means()[0][i] - mean).abs() < 1e-12);
            assert!((g.variances()[0][i] - var.max(set.variance_floor[i])).abs() < 1e-12);
        }
        // self loop probability: (T-1) transitions stay, one exits
        let t = &out.models[0].transitions;
        assert!((t.prob(1, 1) - (n - 1.0) / n).abs() < 1e-12);
        assert!(ll[1] >= ll[0] - 1e-6);
    }

    #[test]
    fn forward_and_backward_agree() {
        let corpus = two_class_corpus(2, 4);
        let labels = collect_labels(&corpus, None);
        let set = flat_start(&corpus, &labels, &HmmConfig::default()).unwrap();
        let set = split_mixtures(&set, 2, 20).unwrap();
        let (set, _) = embedded_reestimate(&set, &corpus, 2).unwrap();
        for u in &corpus {
            let (f, b) = sentence_log_likelihood(&set, u).unwrap();
            assert!(((f - b) / f).abs() < 1e-6, "{f} vs {b}");
        }
    }

    #[test]
    fn training_separates_classes_and_is_monotone() {
        let corpus = two_class_corpus(3, 8);
        let labels = collect_labels(&corpus, None);
        let config = HmmConfig {
            schedule: vec![1, 2, 4],
            silence: None,
            ..Default::default()
        };
        let set = train_hmms(&corpus, &labels, &config).unwrap();
        assert_eq!(set.ll_history.len(), 3);
        for (_, ll) in &set.ll_history {
            assert_eq!(ll.len(), 5);
            for w in ll.windows(2) {
                assert!(w[1] >= w[0] - 1e-6, "{ll:?}");
            }
        }
        let mean_of = |l: &str| -> f64 {
            let m = set.model(l).unwrap();
            let s = &m.states[1];
            s.weights().iter().zip(s.means()).map(|(w, mu)| w * mu[0]).sum()
        };
        let sd = set.model("a").unwrap().states[1].variances()[0][0].sqrt();
        assert!((mean_of("b") - mean_of("a")).abs() > 3.0 * sd);
        for m in &set.models {
            m.transitions.validate().unwrap();
            for s in &m.states {
                assert_eq!(s.n_components(), 4);
                assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn split_to_same_size_is_identity() {
        let corpus = two_class_corpus(4, 2);
        let set = flat_start(&corpus, &collect_labels(&corpus, None), &HmmConfig::default()).unwrap();
        assert_eq!(split_mixtures(&set, 1, 20).unwrap(), set);
        assert!(split_mixtures(&set, 21, 20).is_err());
        let grown = split_mixtures(&set, 20, 20).unwrap();
        assert_eq!(grown.n_components(), 20);
        assert!(split_mixtures(&grown, 4, 20).is_err());
    }

    #[test]
    fn short_sentences_are_skipped() {
        let mut corpus = two_class_corpus(6, 3);
        corpus.push(utt("short", vec![vec![0.0, 0.0]; 2], &["a", "b"]));
        let set = flat_start(&corpus, &collect_labels(&corpus, None), &HmmConfig::default()).unwrap();
        assert!(embedded_reestimate(&set, &corpus, 1).is_ok());
        assert!(embedded_reestimate(&set, &corpus[3..], 1).is_err());
        let unknown = vec![utt("u", vec![vec![0.0, 0.0]; 9], &["zz"])];
        assert!(embedded_reestimate(&set, &unknown, 1).is_err());
    }

    #[test]
    fn floored_weights_respect_floor() {
        let w = floored_weights(&[10.0, 0.0, 1e-9, 5.0]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|x| *x >= MIN_WEIGHT * (1.0 - 1e-12)));
        assert!((w[0] / w[3] - 2.0).abs() < 1e-12);
        assert_eq!(floored_weights(&[1.0, 3.0]), vec![0.25, 0.75]);
    }

    #[test]
    fn label_collection_order() {
        let corpus = vec![utt("a", vec![vec![0.0]; 3], &["x", "sil", "y", "x"])];
        assert_eq!(collect_labels(&corpus, Some("sil")), vec!["sil", "x", "y"]);
    }
}

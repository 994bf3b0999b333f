//! Readable text dumps of model sets and transcript files.
//!
//! Model sets are whitespace-token text starting with `visemekit-hmm 1`; numbers use
//! Rust's shortest round-trip exponent notation so a dump reloads bit-exactly.
//! Transcript files hold one sentence per line: the sentence id followed by its labels,
//! space separated.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::gmm::GaussianMixture;
use super::model::{HmmModel, HmmSet, Transcript, Transitions};
use crate::error::{Error, Result};

pub const HMM_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "visemekit-hmm";

fn put_row(out: &mut String, v: &[f64]) {
    let row: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
    out.push_str(&row.join(" "));
    out.push('\n');
}

pub fn to_text(set: &HmmSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {HMM_FORMAT_VERSION}");
    let _ = writeln!(out, "dim {}", set.dim());
    let _ = write!(out, "floor ");
    put_row(&mut out, &set.variance_floor);
    let idx: Vec<String> = set.floored_dims.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "floored {} {}", set.floored_dims.len(), idx.join(" "));
    let _ = writeln!(out, "history {}", set.ll_history.len());
    for (k, ll) in &set.ll_history {
        let _ = write!(out, "mix {k} {} ", ll.len());
        put_row(&mut out, ll);
    }
    let _ = writeln!(out, "models {}", set.models.len());
    for m in &set.models {
        let n = m.n_states();
        let _ = writeln!(out, "model {} states {n}", m.label);
        let _ = writeln!(out, "transitions");
        let size = n + 2;
        let probs = m.transitions.probs();
        let mask = m.transitions.mask();
        for r in 0..size {
            put_row(&mut out, &probs[r * size..(r + 1) * size]);
        }
        let _ = writeln!(out, "mask");
        for r in 0..size {
            let row: Vec<&str> = mask[r * size..(r + 1) * size].iter().map(|b| if *b { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        for (si, s) in m.states.iter().enumerate() {
            let _ = writeln!(out, "state {} components {}", si + 1, s.n_components());
            for k in 0..s.n_components() {
                let _ = writeln!(out, "weight {:e}", s.weights()[k]);
                let _ = write!(out, "mean ");
                put_row(&mut out, &s.means()[k]);
                let _ = write!(out, "var ");
                put_row(&mut out, &s.variances()[k]);
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Tokens<'a> {
    it: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.it.next().ok_or_else(|| Error::format("hmm set", "unexpected end of file"))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let got = self.next()?;
        if got != word {
            return Err(Error::format("hmm set", format!("expected '{word}', found '{got}'")));
        }
        Ok(())
    }

    fn usize(&mut self) -> Result<usize> {
        let t = self.next()?;
        t.parse().map_err(|_| Error::format("hmm set", format!("bad integer '{t}'")))
    }

    fn f64(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse().map_err(|_| Error::format("hmm set", format!("bad number '{t}'")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn from_text(text: &str) -> Result<HmmSet> {
    let mut t = Tokens {
        it: text.split_whitespace(),
    };
    t.expect(MAGIC)?;
    let version = t.usize()?;
    if version != HMM_FORMAT_VERSION as usize {
        return Err(Error::format("hmm set", format!("unsupported version {version}")));
    }
    t.expect("dim")?;
    let dim = t.usize()?;
    t.expect("floor")?;
    let floor = t.f64s(dim)?;
    t.expect("floored")?;
    let nf = t.usize()?;
    let floored_dims = (0..nf).map(|_| t.usize()).collect::<Result<Vec<_>>>()?;
    t.expect("history")?;
    let nh = t.usize()?;
    let mut ll_history = Vec::with_capacity(nh);
    for _ in 0..nh {
        t.expect("mix")?;
        let k = t.usize()?;
        let n = t.usize()?;
        ll_history.push((k, t.f64s(n)?));
    }
    t.expect("models")?;
    let nm = t.usize()?;
    let mut models = Vec::with_capacity(nm);
    for _ in 0..nm {
        t.expect("model")?;
        let label = t.next()?.to_string();
        t.expect("states")?;
        let n = t.usize()?;
        let size = n + 2;
        t.expect("transitions")?;
        let probs = t.f64s(size * size)?;
        t.expect("mask")?;
        let mask = (0..size * size)
            .map(|_| match t.next()? {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::format("hmm set", format!("bad mask entry '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let transitions = Transitions::from_parts(n, probs, mask)?;
        let mut states = Vec::with_capacity(n);
        for si in 0..n {
            t.expect("state")?;
            if t.usize()? != si + 1 {
                return Err(Error::format("hmm set", format!("states of '{label}' out of order")));
            }
            t.expect("components")?;
            let k = t.usize()?;
            let (mut w, mut mu, mut var) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..k {
                t.expect("weight")?;
                w.push(t.f64()?);
                t.expect("mean")?;
                mu.push(t.f64s(dim)?);
                t.expect("var")?;
                var.push(t.f64s(dim)?);
            }
            states.push(GaussianMixture::new(w, mu, var)?);
        }
        models.push(HmmModel::new(label, states, transitions)?);
    }
    t.expect("end")?;
    if t.it.next().is_some() {
        return Err(Error::format("hmm set", "trailing content after 'end'"));
    }
    let mut set = HmmSet::new(models, floor)?;
    set.floored_dims = floored_dims;
    set.ll_history = ll_history;
    Ok(set)
}

impl HmmSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, to_text(self)).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: &Path) -> Result<HmmSet> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        from_text(&text).map_err(|e| e.at_path(path))
    }
}

pub fn write_transcripts(path: &Path, items: &[(String, Transcript)]) -> Result<()> {
    let mut out = String::new();
    for (id, t) in items {
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("sentence id '{id}' must be a single token")));
        }
        if t.is_empty() {
            let _ = writeln!(out, "{id}");
        } else {
            let _ = writeln!(out, "{id} {t}");
        }
    }
    fs::write(path, out).map_err(|e| Error::from(e).at_path(path))
}

pub fn read_transcripts(path: &Path) -> Result<Vec<(String, Transcript)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let id = it.next().unwrap_or_default().to_string();
        out.push((id, Transcript::new(it)));
    }
    Ok(out)
}

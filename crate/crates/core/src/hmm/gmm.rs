//! Diagonal-covariance Gaussian mixtures evaluated in the log domain.

use crate::error::{ensure_dim, Error, Result};

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Default ceiling on components per state.
pub const MAX_COMPONENTS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    /// Per component: `log w - (d log 2pi + sum log var) / 2`.
    gconst: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        ensure_dim(k, means.len())?;
        ensure_dim(k, variances.len())?;
        let d = means[0].len();
        if d == 0 {
            return Err(Error::invalid("mixture dimension must be positive"));
        }
        for (m, v) in means.iter().zip(&variances) {
            ensure_dim(d, m.len())?;
            ensure_dim(d, v.len())?;
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        if variances.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variances must be positive and finite"));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        let mut g = GaussianMixture {
            weights,
            means,
            variances,
            gconst: vec![],
        };
        g.refresh();
        Ok(g)
    }

    /// One component.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    fn refresh(&mut self) {
        let d = self.dim() as f64;
        self.gconst = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, v)| w.ln() - 0.5 * (d * LOG_2PI + v.iter().map(|x| x.ln()).sum::<f64>()))
            .collect();
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// `log w_k + log N(x; mu_k, diag var_k)` for every component.
    pub fn component_logpdfs(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((g, m), v) in self.gconst.iter().zip(&self.means).zip(&self.variances) {
            let mut q = 0.0;
            for ((xi, mi), vi) in x.iter().zip(m).zip(v) {
                let z = xi - mi;
                q += z * z / vi;
            }
            out.push(g - 0.5 * q);
        }
    }

    /// Log density without dimension checks.
    pub(crate) fn logpdf_unchecked(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.component_logpdfs(x, scratch);
        log_sum_exp(scratch)
    }

    /// Splits the highest-weight component (lowest index on ties) into two with half
    /// the weight each and means moved by `+-0.2` standard deviations per dimension.
    pub fn split_heaviest(&mut self) {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        let w = 0.5 * self.weights[best];
        let var = self.variances[best].clone();
        let mean = self.means[best].clone();
        let up: Vec<f64> = mean.iter().zip(&var).map(|(m, v)| m + 0.2 * v.sqrt()).collect();
        let down: Vec<f64> = mean.iter().zip(&var).map(|(m, v)| m - 0.2 * v.sqrt()).collect();
        self.weights[best] = w;
        self.means[best] = up;
        self.weights.push(w);
        self.means.push(down);
        self.variances.push(var);
        self.refresh();
    }

    /// Replaces the parameters; inputs are assumed already validated by the caller.
    pub(crate) fn set_params(&mut self, weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) {
        self.weights = weights;
        self.means = means;
        self.variances = variances;
        self.refresh();
    }
}

/// `log sum_k exp(v_k)`; `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log density of `x` under `mix`.
pub fn gmm_logpdf(mix: &GaussianMixture, x: &[f64]) -> Result<f64> {
    ensure_dim(mix.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite observation".into()));
    }
    Ok(mix.logpdf_unchecked(x, &mut Vec::with_capacity(mix.n_components())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight linear-domain evaluation of the mixture density.
    fn linear_oracle(w: &[f64], m: &[Vec<f64>], v: &[Vec<f64>], x: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..w.len() {
            let mut dens = 1.0;
            for i in 0..x.len() {
                let z = x[i] - m[k][i];
                dens *= (-(z * z) / (2.0 * v[k][i])).exp() / (2.0 * std::f64::consts::PI * v[k][i]).sqrt();
            }
            total += w[k] * dens;
        }
        total
    }

    #[test]
    fn peak_of_unit_gaussian() {
        for d in [1usize, 3, 12] {
            let g = GaussianMixture::single(vec![0.5; d], vec![1.0; d]).unwrap();
            let got = gmm_logpdf(&g, &vec![0.5; d]).unwrap();
            assert!((got + 0.5 * d as f64 * LOG_2PI).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_components_collapse() {
        let m = vec![1.0, -2.0];
        let v = vec![0.5, 3.0];
        let one = GaussianMixture::single(m.clone(), v.clone()).unwrap();
        let two = GaussianMixture::new(vec![0.5, 0.5], vec![m.clone(), m], vec![v.clone(), v]).unwrap();
        for x in [[0.0, 0.0], [3.0, -1.0], [1.0, -2.0]] {
            let a = gmm_logpdf(&one, &x).unwrap();
            let b = gmm_logpdf(&two, &x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_linear_domain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = 4;
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let m: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let v: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(0.2..2.0)).collect()).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = GaussianMixture::new(w.clone(), m.clone(), v.clone()).unwrap();
            let want = linear_oracle(&w, &m, &v, &x).ln();
            let got = gmm_logpdf(&g, &x).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn far_observations_stay_finite() {
        let g = GaussianMixture::single(vec![0.0; 3], vec![1e-4; 3]).unwrap();
        let v = gmm_logpdf(&g, &[1e3, -1e3, 5e2]).unwrap();
        assert!(v.is_finite() && v < -1e9);
        assert!(gmm_logpdf(&g, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn split_rule() {
        let mut g = GaussianMixture::single(vec![1.0, 2.0], vec![4.0, 0.25]).unwrap();
        g.split_heaviest();
        assert_eq!(g.weights(), &[0.5, 0.5]);
        assert_eq!(g.means()[0], vec![1.4, 2.1]);
        assert_eq!(g.means()[1], vec![0.6, 1.9]);
        assert_eq!(g.variances()[1], vec![4.0, 0.25]);
        g.split_heaviest();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(GaussianMixture::new(vec![0.5, 0.6], vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(GaussianMixture::new(vec![1.0, 0.0], vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(GaussianMixture::single(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn log_add_matches_direct() {
        assert!((log_add(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, -3.0), -3.0);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}

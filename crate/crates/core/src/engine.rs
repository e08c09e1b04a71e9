//! Expectation engine for Gaussian-mixture observations.
//!
//! Every receiver output here is `y = c_j + n` with the component `j` drawn
//! from a finite prior and `n ~ CN(0, s^2 I_d)`. Expectations over `(j, n)`
//! are taken component by component: Gauss-Hermite tensor nodes (or
//! stratified Monte Carlo draws) are placed around each center, and the
//! posterior over components is evaluated in the log domain with
//! max-subtraction. When all centers are real the imaginary noise axis
//! carries no information and is integrated out exactly.

use std::collections::hash_map::{Entry, HashMap};

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inputs::gh_rule;
use crate::seed;

/// Exponent gap below which a mixture term is treated as zero.
const PRUNE: f64 = -40.0;
/// Posterior-marginal residual tolerated by the deterministic engine.
pub const GH_RESIDUAL_TOL: f64 = 1e-6;
/// Work units (samples times components) below which no threads are spawned.
const PAR_THRESHOLD: usize = 1 << 16;

/// Numerical integration method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntegrationEngine {
    /// Tensor Gauss-Hermite rule with `order` nodes per real axis.
    GaussHermite { order: usize },
    /// Stratified Monte Carlo with about `samples` noise draws in total.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for IntegrationEngine {
    fn default() -> Self {
        IntegrationEngine::GaussHermite { order: 16 }
    }
}

impl IntegrationEngine {
    pub fn gauss_hermite(order: usize) -> Self {
        IntegrationEngine::GaussHermite { order }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        IntegrationEngine::MonteCarlo { samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IntegrationEngine::GaussHermite { order } if order == 0 || order > 256 => {
                Err(Error::Argument(format!(
                    "Gauss-Hermite order must be in 1..=256, got {order}"
                )))
            }
            IntegrationEngine::MonteCarlo { samples, .. } if samples < 2 => Err(Error::Argument(
                "Monte Carlo needs at least 2 samples".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Attached to results whose internal consistency check failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyWarning {
    /// Largest deviation of the integrated posterior from the prior.
    pub residual: f64,
    pub threshold: f64,
    pub engine: IntegrationEngine,
}

impl std::fmt::Display for AccuracyWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "posterior residual {:.3e} exceeds {:.1e} under {:?}",
            self.residual, self.threshold, self.engine
        )
    }
}

/// Picks the worse of two optional warnings.
pub(crate) fn worse(
    a: Option<AccuracyWarning>,
    b: Option<AccuracyWarning>,
) -> Option<AccuracyWarning> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.residual >= y.residual { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Finite Gaussian mixture in `C^dim`.
#[derive(Clone, Debug)]
pub(crate) struct Mixture {
    dim: usize,
    centers: Vec<C64>,
    weights: Vec<f64>,
    log_w: Vec<f64>,
    noise_var: f64,
    real: bool,
}

impl Mixture {
    /// `centers` holds `weights.len()` consecutive vectors of length `dim`.
    pub fn new(dim: usize, centers: Vec<C64>, weights: Vec<f64>, noise_var: f64) -> Self {
        assert!(dim >= 1 && centers.len() == dim * weights.len());
        assert!(noise_var > 0.0, "mixture noise must be positive");
        let real = centers.iter().all(|z| z.im == 0.0);
        let log_w = weights.iter().map(|x| x.ln()).collect();
        Self {
            dim,
            centers,
            weights,
            log_w,
            noise_var,
            real,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn center(&self, j: usize) -> &[C64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// The same output law with components of equal center merged.
    ///
    /// Label information depends only on the output law, so it is unchanged.
    pub fn merged(&self) -> Mixture {
        let mut index: HashMap<Vec<[u64; 2]>, usize> = HashMap::new();
        let mut centers = Vec::with_capacity(self.centers.len());
        let mut weights = Vec::with_capacity(self.len());
        for j in 0..self.len() {
            // adding 0.0 maps -0.0 to 0.0
            let key = self
                .center(j)
                .iter()
                .map(|z| [(z.re + 0.0).to_bits(), (z.im + 0.0).to_bits()])
                .collect();
            match index.entry(key) {
                Entry::Occupied(e) => weights[*e.get()] += self.weights[j],
                Entry::Vacant(e) => {
                    e.insert(weights.len());
                    centers.extend_from_slice(self.center(j));
                    weights.push(self.weights[j]);
                }
            }
        }
        Mixture::new(self.dim, centers, weights, self.noise_var)
    }
}

/// Engine output: expectations of the integrand components.
#[derive(Clone, Debug)]
pub(crate) struct Integral {
    pub values: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
    pub warning: Option<AccuracyWarning>,
}

/// Noise offsets with their quadrature weight (the weights sum to 1).
struct NodeSet {
    offsets: Vec<C64>,
    weights: Vec<f64>,
}

fn gh_nodes(dim: usize, real: bool, order: usize, noise_var: f64) -> Result<NodeSet> {
    let rule = gh_rule(order)?;
    let axes = if real { dim } else { 2 * dim };
    let total = order
        .checked_pow(axes as u32)
        .filter(|&n| n <= 1 << 22)
        .ok_or_else(|| {
            Error::Argument(format!(
                "{order}^{axes} quadrature nodes is too many; use Monte Carlo"
            ))
        })?;
    let s = noise_var.sqrt();
    let norm = std::f64::consts::PI.sqrt().powi(axes as i32);
    let mut offsets = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes];
    for _ in 0..total {
        let w: f64 = idx.iter().map(|&i| rule[i].1).product();
        for d in 0..dim {
            let re = s * rule[idx[d]].0;
            let im = if real { 0.0 } else { s * rule[idx[dim + d]].0 };
            offsets.push(C64::new(re, im));
        }
        weights.push(w / norm);
        for digit in idx.iter_mut() {
            *digit += 1;
            if *digit < order {
                break;
            }
            *digit = 0;
        }
    }
    Ok(NodeSet { offsets, weights })
}

/// Evaluates posterior quantities at observation `y`.
///
/// Fills `post` with the posterior over components and returns
/// `log p(y | j) - log p(y)` for the true component `j` with noise `noise`.
#[inline]
fn posterior(mix: &Mixture, y: &[C64], noise: &[C64], post: &mut [f64]) -> f64 {
    let inv = 1.0 / mix.noise_var;
    let dim = mix.dim;
    let mut max = f64::NEG_INFINITY;
    for (k, p) in post.iter_mut().enumerate() {
        let c = &mix.centers[k * dim..(k + 1) * dim];
        let mut d2 = 0.0;
        if mix.real {
            for (yy, cc) in y.iter().zip(c) {
                let t = yy.re - cc.re;
                d2 += t * t;
            }
        } else {
            for (yy, cc) in y.iter().zip(c) {
                d2 += (yy - cc).norm_sqr();
            }
        }
        let e = mix.log_w[k] - d2 * inv;
        *p = e;
        if e > max {
            max = e;
        }
    }
    let mut sum = 0.0;
    for p in post.iter_mut() {
        let g = *p - max;
        *p = if g < PRUNE { 0.0 } else { g.exp() };
        sum += *p;
    }
    let inv_sum = 1.0 / sum;
    post.iter_mut().for_each(|p| *p *= inv_sum);
    let n2: f64 = if mix.real {
        noise.iter().map(|z| z.re * z.re).sum()
    } else {
        noise.iter().map(|z| z.norm_sqr()).sum()
    };
    -n2 * inv - (max + sum.ln())
}

/// Expectation of `f` over the joint law of (component, observation).
///
/// `f(j, posterior, log_ratio, out)` adds the integrand values for one sample
/// into `out` (length `m`, zeroed by the caller).
pub(crate) fn integrate<F>(
    mix: &Mixture,
    engine: &IntegrationEngine,
    m: usize,
    f: F,
) -> Result<Integral>
where
    F: Fn(usize, &[f64], f64, &mut [f64]) + Sync,
{
    engine.validate()?;
    let jn = mix.len();
    let dim = mix.dim;
    match *engine {
        IntegrationEngine::GaussHermite { order } => {
            let nodes = gh_nodes(dim, mix.real, order, mix.noise_var)?;
            let n_nodes = nodes.weights.len();
            let per_component = |j: usize| {
                let mut acc = vec![0.0; m + jn];
                let mut out = vec![0.0; m];
                let mut post = vec![0.0; jn];
                let mut y = vec![C64::new(0.0, 0.0); dim];
                let c = mix.center(j);
                let wj = mix.weight(j);
                if wj == 0.0 {
                    return acc;
                }
                for (q, &wq) in nodes.weights.iter().enumerate() {
                    let noise = &nodes.offsets[q * dim..(q + 1) * dim];
                    for d in 0..dim {
                        y[d] = c[d] + noise[d];
                    }
                    let lr = posterior(mix, &y, noise, &mut post);
                    out.iter_mut().for_each(|v| *v = 0.0);
                    f(j, &post, lr, &mut out);
                    let w = wj * wq;
                    for (a, v) in acc.iter_mut().zip(&out) {
                        *a += w * v;
                    }
                    for (a, p) in acc[m..].iter_mut().zip(&post) {
                        *a += w * p;
                    }
                }
                acc
            };
            let partial: Vec<Vec<f64>> = if n_nodes * jn * jn >= PAR_THRESHOLD {
                (0..jn).into_par_iter().map(per_component).collect()
            } else {
                (0..jn).map(per_component).collect()
            };
            let mut total = vec![0.0; m + jn];
            for p in &partial {
                for (t, v) in total.iter_mut().zip(p) {
                    *t += v;
                }
            }
            let residual = residual(mix, &total[m..]);
            let warning = (residual > GH_RESIDUAL_TOL).then_some(AccuracyWarning {
                residual,
                threshold: GH_RESIDUAL_TOL,
                engine: *engine,
            });
            total.truncate(m);
            Ok(Integral {
                values: total,
                std_err: None,
                warning,
            })
        }
        IntegrationEngine::MonteCarlo {
            samples,
            seed: base,
        } => {
            let s = mix.noise_var.sqrt();
            let real = mix.real;
            let per_component = |j: usize| {
                let wj = mix.weight(j);
                if wj == 0.0 {
                    return (vec![0.0; m + jn], vec![0.0; m]);
                }
                let nj = ((samples as f64 * wj).round() as usize).max(2);
                let mut rng = seed::rng(seed::derive(base, 0x4d43, j as u64));
                let mut s1 = vec![0.0; m + jn];
                let mut s2 = vec![0.0; m];
                let mut out = vec![0.0; m];
                let mut post = vec![0.0; jn];
                let mut y = vec![C64::new(0.0, 0.0); dim];
                let mut noise = vec![C64::new(0.0, 0.0); dim];
                let c = mix.center(j);
                for _ in 0..nj {
                    for d in 0..dim {
                        noise[d] = if real {
                            let a: f64 = rng.sample(StandardNormal);
                            C64::new(s * a * std::f64::consts::FRAC_1_SQRT_2, 0.0)
                        } else {
                            let a: f64 = rng.sample(StandardNormal);
                            let b: f64 = rng.sample(StandardNormal);
                            C64::new(a, b) * (s * std::f64::consts::FRAC_1_SQRT_2)
                        };
                        y[d] = c[d] + noise[d];
                    }
                    let lr = posterior(mix, &y, &noise, &mut post);
                    out.iter_mut().for_each(|v| *v = 0.0);
                    f(j, &post, lr, &mut out);
                    for i in 0..m {
                        s1[i] += out[i];
                        s2[i] += out[i] * out[i];
                    }
                    for (a, p) in s1[m..].iter_mut().zip(&post) {
                        *a += p;
                    }
                }
                let n = nj as f64;
                let mut mean = vec![0.0; m + jn];
                let mut var = vec![0.0; m];
                for i in 0..m + jn {
                    mean[i] = wj * s1[i] / n;
                }
                for i in 0..m {
                    let mu = s1[i] / n;
                    let v = ((s2[i] / n - mu * mu) * n / (n - 1.0)).max(0.0);
                    var[i] = wj * wj * v / n;
                }
                (mean, var)
            };
            let partial: Vec<(Vec<f64>, Vec<f64>)> =
                (0..jn).into_par_iter().map(per_component).collect();
            let mut total = vec![0.0; m + jn];
            let mut var = vec![0.0; m];
            for (mu, v) in &partial {
                for (t, x) in total.iter_mut().zip(mu) {
                    *t += x;
                }
                for (t, x) in var.iter_mut().zip(v) {
                    *t += x;
                }
            }
            let residual = residual(mix, &total[m..]);
            let threshold = 5.0 / (samples as f64).sqrt();
            let warning = (residual > threshold).then_some(AccuracyWarning {
                residual,
                threshold,
                engine: *engine,
            });
            total.truncate(m);
            Ok(Integral {
                values: total,
                std_err: Some(var.into_iter().map(f64::sqrt).collect()),
                warning,
            })
        }
    }
}

fn residual(mix: &Mixture, marginal: &[f64]) -> f64 {
    marginal
        .iter()
        .zip(&mix.weights)
        .map(|(a, w)| (a - w).abs())
        .fold(0.0, f64::max)
}

/// Mutual information in nats between the component label and the output.
///
/// Quadrature runs on the merged mixture; Monte Carlo keeps the components
/// so its draws do not depend on coincident centers.
pub(crate) fn label_information(mix: &Mixture, engine: &IntegrationEngine) -> Result<Integral> {
    let merged;
    let mix = match engine {
        IntegrationEngine::GaussHermite { .. } => {
            merged = mix.merged();
            &merged
        }
        IntegrationEngine::MonteCarlo { .. } => mix,
    };
    if mix.weights.iter().filter(|w| **w > 0.0).count() <= 1 {
        return Ok(Integral {
            values: vec![0.0],
            std_err: matches!(engine, IntegrationEngine::MonteCarlo { .. }).then(|| vec![0.0]),
            warning: None,
        });
    }
    integrate(mix, engine, 1, |_, _, lr, out| out[0] = lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bpsk_mix(a: f64) -> Mixture {
        Mixture::new(
            1,
            vec![C64::new(-a, 0.0), C64::new(a, 0.0)],
            vec![0.5, 0.5],
            1.0,
        )
    }

    #[test]
    fn merging_equal_centers_keeps_the_information() {
        let a = 0.7;
        let split = Mixture::new(
            1,
            vec![
                C64::new(-a, 0.0),
                C64::new(0.0, 0.0),
                C64::new(-0.0, 0.0),
                C64::new(a, 0.0),
            ],
            vec![0.25; 4],
            1.0,
        );
        let merged = split.merged();
        assert_eq!(merged.len(), 3);
        assert_eq!(merged.weight(1), 0.5);
        let e = IntegrationEngine::gauss_hermite(24);
        let i = label_information(&split, &e).unwrap().values[0];
        let j = integrate(&merged, &e, 1, |_, _, lr, out| out[0] = lr)
            .unwrap()
            .values[0];
        let k = integrate(&split, &e, 1, |_, _, lr, out| out[0] = lr)
            .unwrap()
            .values[0];
        assert!((i - j).abs() < 1e-14);
        assert!((i - k).abs() < 1e-12);
    }

    #[test]
    fn node_weights_sum_to_one() {
        for (dim, real) in [(1, true), (1, false), (2, false)] {
            let n = gh_nodes(dim, real, 6, 2.0).unwrap();
            let s: f64 = n.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            // second moment of each real axis is noise_var / 2
            let m2: f64 = n
                .weights
                .iter()
                .enumerate()
                .map(|(q, w)| w * n.offsets[q * dim].re.powi(2))
                .sum();
            assert!((m2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn real_fast_path_matches_complex_tensor() {
        let mix = bpsk_mix(1.3);
        let real = label_information(&mix, &IntegrationEngine::gauss_hermite(40)).unwrap();
        let mut cplx = mix.clone();
        cplx.real = false;
        let full = label_information(&cplx, &IntegrationEngine::gauss_hermite(40)).unwrap();
        assert!((real.values[0] - full.values[0]).abs() < 1e-12);
    }

    #[test]
    fn separated_components_carry_full_entropy() {
        let mix = bpsk_mix(50.0);
        let i = label_information(&mix, &IntegrationEngine::gauss_hermite(16)).unwrap();
        assert!((i.values[0] - 2f64.ln()).abs() < 1e-12);
        assert!(i.warning.is_none());
    }

    #[test]
    fn coincident_components_carry_nothing() {
        let mix = bpsk_mix(0.0);
        let i = label_information(&mix, &IntegrationEngine::gauss_hermite(8)).unwrap();
        assert!(i.values[0].abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_is_seed_deterministic_with_error_bars() {
        let mix = bpsk_mix(1.0);
        let e = IntegrationEngine::monte_carlo(20_000, 3);
        let a = label_information(&mix, &e).unwrap();
        let b = label_information(&mix, &e).unwrap();
        assert_eq!(a.values, b.values);
        let se = a.std_err.unwrap()[0];
        assert!(se > 0.0 && se < 0.01);
        let exact = label_information(&mix, &IntegrationEngine::gauss_hermite(64)).unwrap();
        assert!((a.values[0] - exact.values[0]).abs() < 4.0 * se);
    }

    #[test]
    fn coarse_rule_raises_a_warning() {
        let mix = Mixture::new(
            1,
            (0..8).map(|k| C64::new(k as f64 * 0.9, 0.0)).collect(),
            vec![0.125; 8],
            1.0,
        );
        let i = label_information(&mix, &IntegrationEngine::gauss_hermite(2)).unwrap();
        assert!(i.warning.is_some());
    }

    #[test]
    fn bad_engines_are_rejected() {
        assert!(IntegrationEngine::gauss_hermite(0).validate().is_err());
        assert!(IntegrationEngine::monte_carlo(1, 0).validate().is_err());
    }
}

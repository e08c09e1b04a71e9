//! Input laws: Gaussian, BPSK and finite constellations with point masses.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::hermite::GaussHermite;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the probability sum.
pub const PROB_TOL: f64 = 1e-12;
/// Tolerance on the zero-mean and unit-power moments.
pub const MOMENT_TOL: f64 = 1e-6;

/// A finite, zero-mean, unit-power constellation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstellationFile", into = "ConstellationFile")]
pub struct Constellation {
    points: Vec<C64>,
    probs: Vec<f64>,
}

impl Constellation {
    pub fn new(points: Vec<C64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(Error::Argument(format!(
                "constellation needs matching non-empty points/probs, got {} and {}",
                points.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Argument(
                "point masses must be finite and >= 0".into(),
            ));
        }
        if points
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::Argument(
                "constellation points must be finite".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Argument(format!(
                "point masses sum to {total}, not 1"
            )));
        }
        let mean: C64 = points.iter().zip(&probs).map(|(x, p)| x * p).sum();
        if mean.norm() > MOMENT_TOL {
            return Err(Error::Argument(format!(
                "constellation mean {mean} is not zero"
            )));
        }
        let power: f64 = points
            .iter()
            .zip(&probs)
            .map(|(x, p)| x.norm_sqr() * p)
            .sum();
        if (power - 1.0).abs() > MOMENT_TOL {
            return Err(Error::Argument(format!(
                "constellation power {power} is not 1"
            )));
        }
        Ok(Self { points, probs })
    }

    pub fn bpsk() -> Self {
        Self {
            points: vec![C64::new(-1.0, 0.0), C64::new(1.0, 0.0)],
            probs: vec![0.5, 0.5],
        }
    }

    /// Equiprobable unit-power `m`-PAM on the real axis.
    pub fn pam(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Argument("PAM needs at least 2 points".into()));
        }
        let raw: Vec<f64> = (0..m).map(|i| 2.0 * i as f64 - (m as f64 - 1.0)).collect();
        let scale = (raw.iter().map(|x| x * x).sum::<f64>() / m as f64).sqrt();
        let points = raw.iter().map(|x| C64::new(x / scale, 0.0)).collect();
        Self::new(points, vec![1.0 / m as f64; m])
    }

    /// Equiprobable unit-power square QAM with `side * side` points.
    pub fn qam(side: usize) -> Result<Self> {
        let pam = Self::pam(side)?;
        let mut points = Vec::with_capacity(side * side);
        for a in &pam.points {
            for b in &pam.points {
                points.push(C64::new(a.re, b.re) / 2f64.sqrt());
            }
        }
        Self::new(points, vec![1.0 / (side * side) as f64; side * side])
    }

    /// Product Gauss-Hermite discretization of a unit circular Gaussian with
    /// `per_dim` nodes on each real axis.
    ///
    /// Matches every moment of `CN(0, 1)` up to order `2 * per_dim - 1` per axis.
    pub fn gaussian_quadrature(per_dim: usize) -> Result<Self> {
        let rule = gh_rule(per_dim)?;
        let mut points = Vec::with_capacity(per_dim * per_dim);
        let mut probs = Vec::with_capacity(per_dim * per_dim);
        let pi = std::f64::consts::PI;
        for &(ta, wa) in rule.iter() {
            for &(tb, wb) in rule.iter() {
                points.push(C64::new(ta, tb));
                probs.push(wa * wb / pi);
            }
        }
        // renormalize away the eigen-solver rounding
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(points, probs)
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.points.iter().all(|z| z.im == 0.0)
    }

    pub fn from_toml_str(text: &str, context: &str) -> Result<Self> {
        let file: ConstellationFile = toml::from_str(text).map_err(|e| Error::Parse {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        Self::try_from(file)
    }

    /// Loads a TOML file holding `points = [[re, im, prob], ...]`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ConstellationFile::from(self.clone())).expect("plain arrays serialize")
    }
}

/// On-disk form: one `[re, im, prob]` triple per point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationFile {
    pub points: Vec<[f64; 3]>,
}

impl TryFrom<ConstellationFile> for Constellation {
    type Error = Error;
    fn try_from(f: ConstellationFile) -> Result<Self> {
        let points = f.points.iter().map(|t| C64::new(t[0], t[1])).collect();
        let probs = f.points.iter().map(|t| t[2]).collect();
        Constellation::new(points, probs)
    }
}

impl From<Constellation> for ConstellationFile {
    fn from(c: Constellation) -> Self {
        ConstellationFile {
            points: c
                .points
                .iter()
                .zip(&c.probs)
                .map(|(z, p)| [z.re, z.im, *p])
                .collect(),
        }
    }
}

/// Per-user input law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputSpec {
    Gaussian,
    Bpsk,
    Discrete(Constellation),
}

impl InputSpec {
    pub fn is_gaussian(&self) -> bool {
        matches!(self, InputSpec::Gaussian)
    }

    /// The point-mass law, or `None` for Gaussian inputs.
    pub fn constellation(&self) -> Option<Constellation> {
        match self {
            InputSpec::Gaussian => None,
            InputSpec::Bpsk => Some(Constellation::bpsk()),
            InputSpec::Discrete(c) => Some(c.clone()),
        }
    }
}

/// Shared `(node, weight)` pairs of a quadrature rule.
pub(crate) type Rule = Arc<[(f64, f64)]>;

/// Gauss-Hermite nodes and weights for the weight `exp(-t^2)`, sorted by node.
///
/// Rules are built once per order and shared.
pub(crate) fn gh_rule(order: usize) -> Result<Rule> {
    static RULES: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let n = std::num::NonZeroUsize::new(order)
        .ok_or_else(|| Error::Argument("quadrature order must be >= 1".into()))?;
    let rules = RULES.get_or_init(Default::default);
    if let Some(rule) = rules.lock().expect("rule cache lock").get(&order) {
        return Ok(Arc::clone(rule));
    }
    let mut pairs: Vec<(f64, f64)> = GaussHermite::new(n).iter().map(|&(t, w)| (t, w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rule: Rule = pairs.into();
    rules
        .lock()
        .expect("rule cache lock")
        .insert(order, Arc::clone(&rule));
    Ok(rule)
}

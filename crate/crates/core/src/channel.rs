//! Rayleigh block fading and transmitter-side autoregressive prediction.
//!
//! Gains are indexed `h[k][l]` with `k` the receiver and `l` the transmitter,
//! so row `k` holds the two links heard by base station `k`:
//!
//! ```text
//! y_k = sqrt(snr) * (h_k1 sqrt(P1) x1 + h_k2 sqrt(P2) x2) + n_k,   n_k ~ CN(0, sigma_k^2)
//! ```
//!
//! Prediction replaces per-block feedback: the AR recursion is run forward
//! without innovations, and the accumulated innovation variance of the two
//! links entering receiver `k` is folded into `sigma_k^2` on top of the unit
//! thermal noise.

use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, Error, Result};
use crate::ids::{Mac, User};
use crate::seed;

/// True 2x2 link gains of one fading block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    h: [[C64; 2]; 2],
    snr: f64,
    real_only: bool,
}

impl ChannelMatrix {
    pub fn new(h: [[C64; 2]; 2], snr: f64) -> Result<Self> {
        check_nonneg("snr", snr)?;
        if h.iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Argument("channel gains must be finite".into()));
        }
        let real_only = h.iter().flatten().all(|z| z.im == 0.0);
        Ok(Self { h, snr, real_only })
    }

    /// Real-valued gains; the matrix is flagged `real_only`.
    pub fn real(h: [[f64; 2]; 2], snr: f64) -> Result<Self> {
        let c = h.map(|row| row.map(|x| C64::new(x, 0.0)));
        Self::new(c, snr)
    }

    /// Unit gains on every link, the channel of the surface figures.
    pub fn all_ones(snr: f64) -> Result<Self> {
        Self::real([[1.0, 1.0], [1.0, 1.0]], snr)
    }

    pub fn gain(&self, rx: Mac, tx: User) -> C64 {
        self.h[rx.index()][tx.index()]
    }

    pub fn gains(&self) -> &[[C64; 2]; 2] {
        &self.h
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn real_only(&self) -> bool {
        self.real_only
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        check_nonneg("snr", snr)?;
        Ok(Self {
            snr,
            ..self.clone()
        })
    }
}

/// Sign in front of the AR memory sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Negative sum, `H(t) = -rho * sum H(t-i) + Omega(t)`.
    #[default]
    AsWritten,
    /// Positive sum, the usual correlated-fading recursion.
    Standard,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            SignConvention::AsWritten => -1.0,
            SignConvention::Standard => 1.0,
        }
    }
}

/// Autoregressive fading model of order `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    order: usize,
    rho: f64,
    sign: SignConvention,
    innovation_variance: f64,
}

impl ArModel {
    pub fn new(
        order: usize,
        rho: f64,
        sign: SignConvention,
        innovation_variance: f64,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("AR order must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain {
                name: "rho",
                value: rho,
                expected: "in [0, 1]",
            });
        }
        check_nonneg("innovation_variance", innovation_variance)?;
        Ok(Self {
            order,
            rho,
            sign,
            innovation_variance,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sign(&self) -> SignConvention {
        self.sign
    }

    pub fn innovation_variance(&self) -> f64 {
        self.innovation_variance
    }

    fn coeff(&self) -> f64 {
        self.sign.factor() * self.rho
    }

    /// Impulse response of the recursion, `psi_0 = 1`.
    fn impulse(&self, len: usize) -> Vec<f64> {
        let c = self.coeff();
        let mut psi = Vec::with_capacity(len);
        for n in 0..len {
            if n == 0 {
                psi.push(1.0);
            } else {
                let s: f64 = (1..=n.min(self.order)).map(|i| psi[n - i]).sum();
                psi.push(c * s);
            }
        }
        psi
    }

    /// Per-link prediction error variance `j` blocks past the last pilot.
    pub fn error_variance(&self, horizon: usize) -> f64 {
        let psi = self.impulse(horizon);
        self.innovation_variance * psi.iter().map(|p| p * p).sum::<f64>()
    }

    /// Innovation-free continuation of each entry of `history` (oldest first).
    ///
    /// Returns `horizon` predicted rows; the recursion is applied entrywise, so
    /// any fixed-size group of links can be predicted.
    pub fn extrapolate<const N: usize>(
        &self,
        history: &[[C64; N]],
        horizon: usize,
    ) -> Result<Vec<[C64; N]>> {
        if history.len() < self.order {
            return Err(Error::Precondition(format!(
                "AR order {} needs {} past samples, got {}",
                self.order,
                self.order,
                history.len()
            )));
        }
        let c = self.coeff();
        let mut buf: Vec<[C64; N]> = history[history.len() - self.order..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut next = [C64::new(0.0, 0.0); N];
            for past in buf.iter().rev().take(self.order) {
                for (acc, v) in next.iter_mut().zip(past) {
                    *acc += v;
                }
            }
            for v in next.iter_mut() {
                *v *= c;
            }
            buf.push(next);
            out.push(next);
        }
        Ok(out)
    }
}

impl Default for ArModel {
    /// First order, `rho = 1`, negative sum, unit innovation.
    fn default() -> Self {
        Self {
            order: 1,
            rho: 1.0,
            sign: SignConvention::AsWritten,
            innovation_variance: 1.0,
        }
    }
}

/// Block and pilot layout of the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Symbols per fading block.
    pub k: usize,
    /// Transmit antennas.
    pub m: usize,
    /// Pilot symbols per block and antenna.
    pub l_pilots: usize,
    /// Coherence time in blocks.
    pub t: usize,
    /// Number of coherence periods.
    pub n_blocks: usize,
}

impl FrameConfig {
    pub fn new(k: usize, m: usize, l_pilots: usize, t: usize, n_blocks: usize) -> Result<Self> {
        let f = Self {
            k,
            m,
            l_pilots,
            t,
            n_blocks,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let overhead = self.m * self.l_pilots;
        if overhead < 1 || self.k <= overhead {
            return Err(Error::Argument(format!(
                "frame needs K > M*L >= 1, got K={} M={} L={}",
                self.k, self.m, self.l_pilots
            )));
        }
        if self.t == 0 {
            return Err(Error::Argument("coherence time must be >= 1 block".into()));
        }
        Ok(())
    }

    /// Fraction of each block left for data, `(K - M L) / K`.
    pub fn rate_prefactor(&self) -> f64 {
        (self.k - self.m * self.l_pilots) as f64 / self.k as f64
    }
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            k: 100,
            m: 1,
            l_pilots: 1,
            t: 1,
            n_blocks: 250,
        }
    }
}

/// Predicted gains together with the receiver noise they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedChannel {
    h: [[C64; 2]; 2],
    sigma_sq: [f64; 2],
    horizon: usize,
    snr: f64,
}

impl EstimatedChannel {
    pub fn new(h: [[C64; 2]; 2], sigma_sq: [f64; 2], horizon: usize, snr: f64) -> Result<Self> {
        let ch = ChannelMatrix::new(h, snr)?;
        for (i, &s) in sigma_sq.iter().enumerate() {
            if !(s.is_finite() && s >= 1.0) {
                return Err(Error::Domain {
                    name: if i == 0 { "sigma1_sq" } else { "sigma2_sq" },
                    value: s,
                    expected: "finite and >= 1",
                });
            }
        }
        if horizon == 0 && sigma_sq != [1.0, 1.0] {
            return Err(Error::Argument(
                "a pilot-fresh estimate (horizon 0) must carry unit noise".into(),
            ));
        }
        Ok(Self {
            h: ch.h,
            sigma_sq,
            horizon,
            snr,
        })
    }

    /// Perfect CSI: the true gains with unit noise.
    pub fn perfect(ch: &ChannelMatrix) -> Self {
        Self {
            h: ch.h,
            sigma_sq: [1.0, 1.0],
            horizon: 0,
            snr: ch.snr,
        }
    }

    /// Convenience for real gains at unit noise.
    pub fn real(h: [[f64; 2]; 2], snr: f64) -> Result<Self> {
        Ok(Self::perfect(&ChannelMatrix::real(h, snr)?))
    }

    pub fn gain(&self, rx: Mac, tx: User) -> C64 {
        self.h[rx.index()][tx.index()]
    }

    pub fn gains(&self) -> &[[C64; 2]; 2] {
        &self.h
    }

    pub fn sigma_sq(&self, rx: Mac) -> f64 {
        self.sigma_sq[rx.index()]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn real_only(&self) -> bool {
        self.h.iter().flatten().all(|z| z.im == 0.0)
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        check_nonneg("snr", snr)?;
        Ok(Self {
            snr,
            ..self.clone()
        })
    }

    /// Same estimate with one gain replaced.
    pub fn with_gain(&self, rx: Mac, tx: User, g: C64) -> Result<Self> {
        let mut h = self.h;
        h[rx.index()][tx.index()] = g;
        Self::new(h, self.sigma_sq, self.horizon, self.snr)
    }

    /// Users relabelled and receivers relabelled, `h'[k][l] = h[3-k][3-l]`.
    pub fn swapped(&self) -> Self {
        Self {
            h: [[self.h[1][1], self.h[1][0]], [self.h[0][1], self.h[0][0]]],
            sigma_sq: [self.sigma_sq[1], self.sigma_sq[0]],
            horizon: self.horizon,
            snr: self.snr,
        }
    }

    /// Noiseless amplitudes `sqrt(snr) h_kl sqrt(P_l)` seen at receiver `rx`.
    pub(crate) fn amplitudes(&self, rx: Mac, powers: [f64; 2]) -> [C64; 2] {
        let s = self.snr.sqrt();
        let row = self.h[rx.index()];
        [
            row[0] * (s * powers[0].sqrt()),
            row[1] * (s * powers[1].sqrt()),
        ]
    }
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64, real_only: bool) -> C64 {
    if real_only {
        let x: f64 = rng.sample(StandardNormal);
        C64::new(variance.sqrt() * x, 0.0)
    } else {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let s = (0.5 * variance).sqrt();
        C64::new(s * a, s * b)
    }
}

/// Draws i.i.d. unit-variance Rayleigh gains.
pub fn sample_channel(rng_seed: u64, snr: f64, real_only: bool) -> Result<ChannelMatrix> {
    check_nonneg("snr", snr)?;
    let mut rng = seed::rng(rng_seed);
    let mut h = [[C64::new(0.0, 0.0); 2]; 2];
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = complex_gaussian(&mut rng, 1.0, real_only);
        }
    }
    Ok(ChannelMatrix { h, snr, real_only })
}

/// One step of the AR recursion; `history` is oldest first and has length `L`.
///
/// The output inherits `snr` from the newest sample and is real when every
/// history sample is real.
pub fn ar_step(
    history: &[ChannelMatrix],
    model: &ArModel,
    innovation_seed: u64,
) -> Result<ChannelMatrix> {
    if history.len() != model.order {
        return Err(Error::Argument(format!(
            "history length {} does not match AR order {}",
            history.len(),
            model.order
        )));
    }
    let real_only = history.iter().all(|h| h.real_only);
    let c = model.coeff();
    let mut rng = seed::rng(innovation_seed);
    let mut h = [[C64::new(0.0, 0.0); 2]; 2];
    for (k, row) in h.iter_mut().enumerate() {
        for (l, entry) in row.iter_mut().enumerate() {
            let mem: C64 = history.iter().map(|m| m.h[k][l]).sum();
            *entry = mem * c + complex_gaussian(&mut rng, model.innovation_variance, real_only);
        }
    }
    Ok(ChannelMatrix {
        h,
        snr: history[history.len() - 1].snr,
        real_only,
    })
}

/// Predicts the next `horizon` blocks from noiseless pilots (oldest first).
///
/// Element `j-1` carries horizon `j` and `sigma_k^2 = 1 + 2 * var_j`, where
/// `var_j` is the per-link error variance after `j` steps.
pub fn predict_block(
    history: &[ChannelMatrix],
    model: &ArModel,
    horizon: usize,
) -> Result<Vec<EstimatedChannel>> {
    if horizon == 0 {
        return Err(Error::Argument("prediction horizon must be >= 1".into()));
    }
    if history.is_empty() {
        return Err(Error::Precondition("no pilot available".into()));
    }
    let flat: Vec<[C64; 4]> = history
        .iter()
        .map(|m| [m.h[0][0], m.h[0][1], m.h[1][0], m.h[1][1]])
        .collect();
    let snr = history[history.len() - 1].snr;
    let means = model.extrapolate(&flat, horizon)?;
    Ok(means
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let j = i + 1;
            let s = 1.0 + 2.0 * model.error_variance(j);
            EstimatedChannel {
                h: [[f[0], f[1]], [f[2], f[3]]],
                sigma_sq: [s, s],
                horizon: j,
                snr,
            }
        })
        .collect())
}

/// A run of `n_blocks` channels: the first `min(L, n)` are fresh Rayleigh
/// draws, the rest follow the AR recursion.
pub fn ar_trace(
    model: &ArModel,
    n_blocks: usize,
    snr: f64,
    real_only: bool,
    seed: u64,
) -> Result<Vec<ChannelMatrix>> {
    let mut out: Vec<ChannelMatrix> = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let next = if b < model.order {
            sample_channel(seed::derive(seed, 1, b as u64), snr, real_only)?
        } else {
            ar_step(
                &out[b - model.order..b],
                model,
                seed::derive(seed, 2, b as u64),
            )?
        };
        out.push(next);
    }
    Ok(out)
}

/// Writes a channel trace with columns `block,k,l,re,im` (1-based `k`, `l`).
pub fn write_trace_csv(path: &Path, trace: &[ChannelMatrix]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(["block", "k", "l", "re", "im"])
        .map_err(csv_err)?;
    for (b, m) in trace.iter().enumerate() {
        for k in 0..2 {
            for l in 0..2 {
                let z = m.h[k][l];
                w.write_record([
                    b.to_string(),
                    (k + 1).to_string(),
                    (l + 1).to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a trace written by [`write_trace_csv`]; every block gets `snr`.
pub fn read_trace_csv(path: &Path, snr: f64) -> Result<Vec<ChannelMatrix>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let parse = |field: &str, what: &str| -> Result<f64> {
        field.trim().parse::<f64>().map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: format!("{what}: {e}"),
        })
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut blocks: Vec<[[Option<C64>; 2]; 2]> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 5 {
            return Err(Error::Parse {
                context: path.display().to_string(),
                message: format!("expected 5 fields, got {}", rec.len()),
            });
        }
        let b = parse(&rec[0], "block")? as usize;
        let k = parse(&rec[1], "k")? as usize;
        let l = parse(&rec[2], "l")? as usize;
        if !(1..=2).contains(&k) || !(1..=2).contains(&l) {
            return Err(Error::Parse {
                context: path.display().to_string(),
                message: format!("link index ({k},{l}) out of range"),
            });
        }
        let z = C64::new(parse(&rec[3], "re")?, parse(&rec[4], "im")?);
        if blocks.len() <= b {
            blocks.resize(b + 1, [[None; 2]; 2]);
        }
        blocks[b][k - 1][l - 1] = Some(z);
    }
    blocks
        .into_iter()
        .enumerate()
        .map(|(b, m)| {
            let mut h = [[C64::new(0.0, 0.0); 2]; 2];
            for k in 0..2 {
                for l in 0..2 {
                    h[k][l] = m[k][l].ok_or_else(|| Error::Parse {
                        context: path.display().to_string(),
                        message: format!("block {b} misses link ({},{})", k + 1, l + 1),
                    })?;
                }
            }
            ChannelMatrix::new(h, snr)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_channel(7, 1.0, false).unwrap();
        let b = sample_channel(7, 1.0, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_channel(8, 1.0, false).unwrap());
    }

    #[test]
    fn real_mode_has_zero_imaginary_parts() {
        for s in 0..50 {
            let m = sample_channel(s, 2.0, true).unwrap();
            assert!(m.real_only());
            assert!(m.gains().iter().flatten().all(|z| z.im == 0.0));
        }
    }

    #[test]
    fn negative_snr_is_rejected() {
        assert!(matches!(
            sample_channel(1, -1.0, false),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn rayleigh_second_moment_is_unity() {
        let n = 100_000;
        for real in [false, true] {
            let mut acc = [[0.0; 2]; 2];
            for s in 0..n {
                let m = sample_channel(seed::derive(99, 0, s), 1.0, real).unwrap();
                for (acc_row, h_row) in acc.iter_mut().zip(&m.h) {
                    for (a, h) in acc_row.iter_mut().zip(h_row) {
                        *a += h.norm_sqr();
                    }
                }
            }
            // |h|^2 has variance 1 (complex) or 2 (real); 3 sigma bound.
            let tol = 3.0 * if real { 2f64.sqrt() } else { 1.0 } / (n as f64).sqrt();
            for v in acc.iter().flatten() {
                let mean = v / n as f64;
                assert!((mean - 1.0).abs() < tol.min(0.02), "mean {mean}");
            }
        }
    }

    #[test]
    fn zero_rho_leaves_only_the_innovation() {
        let model = ArModel::new(1, 0.0, SignConvention::AsWritten, 1.0).unwrap();
        let hist = [sample_channel(3, 1.0, true).unwrap()];
        let out = ar_step(&hist, &model, 11).unwrap();
        let zero = ChannelMatrix::real([[0.0; 2]; 2], 1.0).unwrap();
        let pure = ar_step(&[zero], &model, 11).unwrap();
        assert_eq!(out.gains(), pure.gains());
    }

    #[test]
    fn first_order_unit_rho_applies_the_sign() {
        let hist = [sample_channel(3, 1.0, true).unwrap()];
        for sign in [SignConvention::AsWritten, SignConvention::Standard] {
            let noisy = ArModel::new(1, 1.0, sign, 1.0).unwrap();
            let zero = ChannelMatrix::real([[0.0; 2]; 2], 1.0).unwrap();
            let omega = ar_step(&[zero], &noisy, 5).unwrap();
            let out = ar_step(&hist, &noisy, 5).unwrap();
            for k in 0..2 {
                for l in 0..2 {
                    let expect = hist[0].h[k][l] * sign.factor() + omega.h[k][l];
                    assert_eq!(out.h[k][l], expect);
                }
            }
        }
    }

    #[test]
    fn noiseless_standard_recursion_persists() {
        let model = ArModel::new(1, 1.0, SignConvention::Standard, 0.0).unwrap();
        let hist = [sample_channel(21, 1.0, false).unwrap()];
        assert_eq!(ar_step(&hist, &model, 4).unwrap(), hist[0]);
    }

    #[test]
    fn history_length_must_match_order() {
        let model = ArModel::new(2, 0.5, SignConvention::Standard, 1.0).unwrap();
        let hist = [sample_channel(1, 1.0, false).unwrap()];
        assert!(matches!(ar_step(&hist, &model, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn noiseless_prediction_keeps_unit_noise() {
        let model = ArModel::new(1, 1.0, SignConvention::Standard, 0.0).unwrap();
        let hist = [sample_channel(2, 1.0, false).unwrap()];
        let p = predict_block(&hist, &model, 3).unwrap();
        assert_eq!(p.len(), 3);
        for (j, e) in p.iter().enumerate() {
            assert_eq!(e.horizon(), j + 1);
            assert_eq!(e.sigma_sq(Mac::One), 1.0);
            assert_eq!(e.sigma_sq(Mac::Two), 1.0);
            assert_eq!(e.gains(), hist[0].gains());
        }
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let hist = [sample_channel(2, 1.0, false).unwrap()];
        assert!(predict_block(&hist, &ArModel::default(), 0).is_err());
    }

    #[test]
    fn two_step_error_variance_matches_simulation() {
        let v = 0.7;
        let model = ArModel::new(1, 1.0, SignConvention::Standard, v).unwrap();
        let pilot = sample_channel(5, 1.0, false).unwrap();
        let pred = predict_block(std::slice::from_ref(&pilot), &model, 2).unwrap();
        assert!((pred[1].sigma_sq(Mac::One) - (1.0 + 2.0 * 2.0 * v)).abs() < 1e-12);

        let trials = 100_000u64;
        let mut acc = [0.0; 2];
        for t in 0..trials {
            let h1 = ar_step(std::slice::from_ref(&pilot), &model, seed::derive(7, 0, t)).unwrap();
            let h2 = ar_step(std::slice::from_ref(&h1), &model, seed::derive(7, 1, t)).unwrap();
            for (k, a) in acc.iter_mut().enumerate() {
                *a += (0..2)
                    .map(|l| (h2.h[k][l] - pred[1].h[k][l]).norm_sqr())
                    .sum::<f64>();
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let empirical = 1.0 + a / trials as f64;
            let rel = (empirical - pred[1].sigma_sq[k]).abs() / pred[1].sigma_sq[k];
            assert!(
                rel < 0.01,
                "receiver {k}: {empirical} vs {}",
                pred[1].sigma_sq[k]
            );
        }
    }

    #[test]
    fn second_order_prediction_uses_both_samples() {
        let model = ArModel::new(2, 0.5, SignConvention::Standard, 1.0).unwrap();
        let a = [C64::new(1.0, 0.0)];
        let b = [C64::new(3.0, 0.0)];
        let out = model.extrapolate(&[a, b], 2).unwrap();
        assert_eq!(out[0][0], C64::new(2.0, 0.0));
        assert_eq!(out[1][0], C64::new(2.5, 0.0));
        // psi = 1, 0.5, 0.75
        assert!((model.error_variance(3) - (1.0 + 0.25 + 0.5625)).abs() < 1e-15);
    }

    #[test]
    fn frame_prefactor() {
        let f = FrameConfig::new(100, 1, 1, 1, 10).unwrap();
        assert!((f.rate_prefactor() - 0.99).abs() < 1e-15);
        assert!(FrameConfig::new(4, 2, 2, 1, 1).is_err());
        assert!(FrameConfig::new(4, 1, 0, 1, 1).is_err());
    }

    #[test]
    fn estimate_validation() {
        let h = [[C64::new(1.0, 0.0); 2]; 2];
        assert!(EstimatedChannel::new(h, [0.5, 1.0], 1, 1.0).is_err());
        assert!(EstimatedChannel::new(h, [2.0, 1.0], 0, 1.0).is_err());
        assert!(EstimatedChannel::new(h, [2.0, 1.0], 1, 1.0).is_ok());
    }

    #[test]
    fn trace_csv_round_trips() {
        let model = ArModel::default();
        let trace = ar_trace(&model, 6, 1.0, false, 17).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("block,k,l,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 6 * 4);
        let back = read_trace_csv(&path, 1.0).unwrap();
        assert_eq!(back, trace);
    }

    proptest! {
        #[test]
        fn sigma_is_monotone_in_horizon(
            order in 1usize..4,
            rho in 0.0f64..=1.0,
            v in 0.01f64..3.0,
            standard in any::<bool>(),
        ) {
            let sign = if standard { SignConvention::Standard } else { SignConvention::AsWritten };
            let model = ArModel::new(order, rho, sign, v).unwrap();
            let hist: Vec<_> = (0..order).map(|i| sample_channel(i as u64, 1.0, false).unwrap()).collect();
            let p = predict_block(&hist, &model, 8).unwrap();
            for w in p.windows(2) {
                prop_assert!(w[1].sigma_sq(Mac::One) >= w[0].sigma_sq(Mac::One));
                prop_assert!(w[1].sigma_sq(Mac::Two) >= w[0].sigma_sq(Mac::Two));
            }
            prop_assert!(p[0].sigma_sq(Mac::One) >= 1.0);
        }

        #[test]
        fn traces_are_deterministic(seed in any::<u64>(), n in 1usize..20) {
            let model = ArModel::new(1, 0.9, SignConvention::Standard, 0.19).unwrap();
            let a = ar_trace(&model, n, 1.0, false, seed).unwrap();
            let b = ar_trace(&model, n, 1.0, false, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

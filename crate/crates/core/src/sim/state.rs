//! What each base station knows and holds between rounds.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, EstimatedChannel};
use crate::error::{check_nonneg, check_positive, Error, Result};
use crate::estimation::posterior_mean;
use crate::ids::{Mac, User};
use crate::inputs::InputSpec;
use crate::optimizer::Design;
use crate::power::PowerProfile;
use crate::C64;

/// One receiver's gains `(h_k1, h_k2)` with the noise level they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsiRow {
    pub rx: Mac,
    pub h: [C64; 2],
    pub sigma_sq: f64,
    /// Blocks since the pilot this row is based on.
    pub horizon: usize,
    pub snr: f64,
}

impl CsiRow {
    /// Pilot-fresh row of a true channel: horizon 0, unit noise.
    pub fn pilot(ch: &ChannelMatrix, rx: Mac) -> Self {
        Self {
            rx,
            h: ch.gains()[rx.index()],
            sigma_sq: 1.0,
            horizon: 0,
            snr: ch.snr(),
        }
    }

    /// Row `rx` of an estimate.
    pub fn of_estimate(ch: &EstimatedChannel, rx: Mac) -> Self {
        Self {
            rx,
            h: ch.gains()[rx.index()],
            sigma_sq: ch.sigma_sq(rx),
            horizon: ch.horizon(),
            snr: ch.snr(),
        }
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        check_nonneg("snr", snr)?;
        Ok(Self {
            snr,
            ..self.clone()
        })
    }
}

/// Joins the two rows into the full estimate.
pub(crate) fn assemble(a: &CsiRow, b: &CsiRow) -> Result<EstimatedChannel> {
    if a.rx == b.rx {
        return Err(Error::Argument(format!(
            "both rows belong to receiver {}",
            a.rx
        )));
    }
    if a.snr != b.snr {
        return Err(Error::Argument(format!(
            "rows disagree on snr: {} vs {}",
            a.snr, b.snr
        )));
    }
    let (r1, r2) = if a.rx == Mac::One { (a, b) } else { (b, a) };
    EstimatedChannel::new(
        [r1.h, r2.h],
        [r1.sigma_sq, r2.sigma_sq],
        r1.horizon.max(r2.horizon),
        a.snr,
    )
}

/// Backhaul gate: rows are exchanged only while the load is below `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackhaulConfig {
    pub bandwidth_load: f64,
    pub tau: f64,
}

impl BackhaulConfig {
    pub fn new(bandwidth_load: f64, tau: f64) -> Result<Self> {
        Ok(Self {
            bandwidth_load: check_nonneg("bandwidth_load", bandwidth_load)?,
            tau: check_positive("tau", tau)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.bandwidth_load, self.tau).map(|_| ())
    }

    pub fn cooperates(&self) -> bool {
        self.bandwidth_load < self.tau
    }
}

impl Default for BackhaulConfig {
    fn default() -> Self {
        Self {
            bandwidth_load: 0.0,
            tau: 1.0,
        }
    }
}

/// The model a base station decodes its own user with.
///
/// Observations are multiplied by `input_scale` before the conditional mean
/// under `channel` and `powers` is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub channel: EstimatedChannel,
    pub powers: PowerProfile,
    pub input_scale: f64,
}

/// One base station between rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsState {
    id: Mac,
    local: Vec<CsiRow>,
    peer: Option<CsiRow>,
    design: Option<Design>,
    decoder: Option<Decoder>,
    peer_reads: usize,
    exchanges: usize,
}

impl BsState {
    /// A base station serving receiver `id` with no pilots yet.
    pub fn new(id: Mac) -> Self {
        Self {
            id,
            local: Vec::new(),
            peer: None,
            design: None,
            decoder: None,
            peer_reads: 0,
            exchanges: 0,
        }
    }

    pub fn with_pilots(id: Mac, rows: impl IntoIterator<Item = CsiRow>) -> Result<Self> {
        let mut s = Self::new(id);
        for r in rows {
            s.push_pilot(r)?;
        }
        Ok(s)
    }

    /// Appends the newest local row.
    pub fn push_pilot(&mut self, row: CsiRow) -> Result<()> {
        if row.rx != self.id {
            return Err(Error::Argument(format!(
                "base station {} cannot hold the row of receiver {}",
                self.id, row.rx
            )));
        }
        self.local.push(row);
        Ok(())
    }

    pub fn id(&self) -> Mac {
        self.id
    }

    /// Local rows, oldest first.
    pub fn local(&self) -> &[CsiRow] {
        &self.local
    }

    pub fn latest(&self) -> Option<&CsiRow> {
        self.local.last()
    }

    /// Inspection of the peer slot; does not count as a read.
    pub fn peer_csi(&self) -> Option<&CsiRow> {
        self.peer.as_ref()
    }

    pub fn design(&self) -> Option<&Design> {
        self.design.as_ref()
    }

    pub fn decoder(&self) -> Option<&Decoder> {
        self.decoder.as_ref()
    }

    /// Times a round used the peer row.
    pub fn peer_reads(&self) -> usize {
        self.peer_reads
    }

    /// Rows received over the backhaul.
    pub fn exchanges(&self) -> usize {
        self.exchanges
    }

    /// Conditional mean of the own user's symbol given observation `y`.
    pub fn decode(&self, y: C64, inputs: &[InputSpec; 2]) -> Result<C64> {
        let d = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Precondition("no design has been solved yet".into()))?;
        let own: User = self.id.own_user();
        Ok(posterior_mean(y * d.input_scale, &d.channel, &d.powers, inputs, self.id)?[own.index()])
    }

    pub(crate) fn newest(&self) -> Result<&CsiRow> {
        self.local.last().ok_or_else(|| {
            Error::Precondition(format!("base station {} holds no pilot estimate", self.id))
        })
    }

    /// Drops what the previous round left behind.
    pub(crate) fn begin_round(&mut self) {
        self.peer = None;
        self.design = None;
        self.decoder = None;
    }

    pub(crate) fn receive(&mut self, row: CsiRow) {
        self.peer = Some(row);
        self.exchanges += 1;
    }

    pub(crate) fn read_peer(&mut self) -> Result<CsiRow> {
        let row = self.peer.clone().ok_or_else(|| {
            Error::Precondition(format!("base station {} has no peer row", self.id))
        })?;
        self.peer_reads += 1;
        Ok(row)
    }

    pub(crate) fn commit(&mut self, design: Design, decoder: Decoder) {
        self.design = Some(design);
        self.decoder = Some(decoder);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rx: Mac) -> CsiRow {
        CsiRow::pilot(
            &ChannelMatrix::real([[1.0, 0.5], [0.3, 0.8]], 2.0).unwrap(),
            rx,
        )
    }

    #[test]
    fn gate_is_strict() {
        assert!(BackhaulConfig::new(0.5, 1.0).unwrap().cooperates());
        assert!(!BackhaulConfig::new(1.0, 1.0).unwrap().cooperates());
        assert!(BackhaulConfig::new(1.0, 0.0).is_err());
        assert!(BackhaulConfig::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn rows_assemble_in_receiver_order() {
        let ch = assemble(&row(Mac::Two), &row(Mac::One)).unwrap();
        assert_eq!(ch.gain(Mac::One, User::Two), C64::new(0.5, 0.0));
        assert_eq!(ch.gain(Mac::Two, User::One), C64::new(0.3, 0.0));
        assert!(assemble(&row(Mac::One), &row(Mac::One)).is_err());
    }

    #[test]
    fn foreign_rows_are_rejected() {
        let mut s = BsState::new(Mac::One);
        assert!(s.push_pilot(row(Mac::Two)).is_err());
        assert!(s.newest().is_err());
        s.push_pilot(row(Mac::One)).unwrap();
        assert_eq!(s.local().len(), 1);
    }

    #[test]
    fn peer_slot_starts_empty_and_counts_reads() {
        let mut s = BsState::with_pilots(Mac::One, [row(Mac::One)]).unwrap();
        assert!(s.peer_csi().is_none());
        assert!(s.read_peer().is_err());
        s.receive(row(Mac::Two));
        assert_eq!(s.exchanges(), 1);
        assert_eq!(s.peer_reads(), 0);
        s.read_peer().unwrap();
        assert_eq!(s.peer_reads(), 1);
        s.begin_round();
        assert!(s.peer_csi().is_none());
    }

    #[test]
    fn decoding_needs_a_design() {
        let s = BsState::with_pilots(Mac::One, [row(Mac::One)]).unwrap();
        assert!(s
            .decode(C64::new(1.0, 0.0), &[InputSpec::Bpsk, InputSpec::Bpsk])
            .is_err());
    }
}

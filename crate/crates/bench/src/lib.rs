//! Shared fixtures for the benchmarks in `benches/`.

use mcp_core::{EstimatedChannel, InputSpec, PowerProfile, Result};

/// A seeded perfect-CSI complex channel at `snr`.
pub fn channel(seed: u64, snr: f64) -> Result<EstimatedChannel> {
    mcp_core::sample_channel(seed, snr, false).map(|c| EstimatedChannel::perfect(&c))
}

/// Both users at power 1.
pub fn unit_powers() -> PowerProfile {
    PowerProfile::new(1.0, 1.0).expect("positive powers")
}

pub const BPSK: [InputSpec; 2] = [InputSpec::Bpsk, InputSpec::Bpsk];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let ch = channel(1, 2.0).unwrap();
        assert_eq!(ch.snr(), 2.0);
        assert_eq!(unit_powers().p1(), 1.0);
    }
}

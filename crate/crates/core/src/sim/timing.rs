//! Per-hop service times shared by the engine and the latency closed form.

use crate::estimator::LayerRates;
use crate::fabric::{CDC_SYNC_CYCLES, LANE_FIFO_WIDTH, VS_FIFO_WIDTH};
use crate::types::{ClockDomain, Picos, Rate};

pub fn asic_cdc() -> Picos {
    ClockDomain::asic().cycles(CDC_SYNC_CYCLES)
}

pub fn fpga_cdc() -> Picos {
    ClockDomain::fpga().cycles(CDC_SYNC_CYCLES)
}

pub fn phy_rate() -> Rate {
    Rate::from_gbps(LayerRates::default().phy_lane_gbps)
}

/// The IPI moves packets one at a time at the aggregate stream rate.
pub fn ipi_rate() -> Rate {
    Rate::from_gbps(LayerRates::default().asic_total())
}

pub fn lane_words(frame_len: usize) -> u32 {
    (frame_len as u64 * 8).div_ceil(LANE_FIFO_WIDTH as u64) as u32
}

pub fn vs_words(frame_len: usize) -> u32 {
    (frame_len as u64 * 8).div_ceil(VS_FIFO_WIDTH as u64) as u32
}

/// The OPI reads one vS output word per ASIC cycle.
pub fn opi_move(frame_len: usize) -> Picos {
    ClockDomain::asic().cycles(vs_words(frame_len) as u64)
}

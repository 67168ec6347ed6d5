//! ASIC-side queueing substrate: FIFO inventory, occupancy and SRAM tiling.

mod fifo;
mod tiling;

pub use fifo::{FifoSpec, FifoState, Storage};
pub use tiling::{plan_tiling, tiling_csv, MacroConstraints, MacroUse, TilingError, TilingPlan, TILING_CSV_HEADER};

use thiserror::Error;

use crate::types::{ClockDomain, MAX_SLOTS, PHYS_LANES, VRX_LANE, VTX_LANE};

pub const VS_FIFO_DEPTH: u32 = 52;
pub const VS_FIFO_WIDTH: u32 = 289;
pub const LANE_FIFO_DEPTH: u32 = 66;
pub const LANE_FIFO_WIDTH: u32 = 417;
/// Read-domain cycles before a write is visible to the reader, and
/// write-domain cycles before freed words are visible to the writer.
pub const CDC_SYNC_CYCLES: u64 = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FabricError {
    #[error("slot count {0} outside 1..={MAX_SLOTS}")]
    SlotCount(usize),
    #[error("lane count {0} outside 1..={PHYS_LANES}")]
    LaneCount(usize),
    #[error("loopback must be 0 or 2 lanes, got {0}")]
    Loopback(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FifoRole {
    VsIn(u8),
    VsOut(u8),
    Rx(u8),
    Tx(u8),
}

impl FifoRole {
    pub fn label(self) -> String {
        match self {
            FifoRole::VsIn(s) => format!("vs{s}_in"),
            FifoRole::VsOut(s) => format!("vs{s}_out"),
            FifoRole::Rx(l) => format!("rx{l}"),
            FifoRole::Tx(l) => format!("tx{l}"),
        }
    }
}

pub fn fifo_spec(role: FifoRole, constraints: &MacroConstraints) -> FifoSpec {
    let (asic, fpga) = (ClockDomain::asic(), ClockDomain::fpga());
    let (depth, width, write_domain, read_domain) = match role {
        FifoRole::VsIn(_) => (VS_FIFO_DEPTH, VS_FIFO_WIDTH, asic, fpga),
        FifoRole::VsOut(_) => (VS_FIFO_DEPTH, VS_FIFO_WIDTH, fpga, asic),
        FifoRole::Rx(_) | FifoRole::Tx(_) => (LANE_FIFO_DEPTH, LANE_FIFO_WIDTH, asic.clone(), asic),
    };
    let storage = plan_tiling(depth, width, constraints).map(|p| p.storage()).unwrap_or(Storage::Flipflop);
    FifoSpec { fifo_id: role.label(), depth, width, write_domain, read_domain, storage }
}

/// Roles in inventory order: vS input/output pairs, then RX and TX per lane,
/// with vRX and vTX closing the lane-side lists.
pub fn inventory_roles(slot_count: usize, lane_count: usize, loopback: usize) -> Result<Vec<FifoRole>, FabricError> {
    if !(1..=MAX_SLOTS).contains(&slot_count) {
        return Err(FabricError::SlotCount(slot_count));
    }
    if !(1..=PHYS_LANES).contains(&lane_count) {
        return Err(FabricError::LaneCount(lane_count));
    }
    if loopback != 0 && loopback != 2 {
        return Err(FabricError::Loopback(loopback));
    }
    let mut roles = Vec::new();
    for s in 0..slot_count as u8 {
        roles.push(FifoRole::VsIn(s));
        roles.push(FifoRole::VsOut(s));
    }
    roles.extend((0..lane_count as u8).map(FifoRole::Rx));
    if loopback == 2 {
        roles.push(FifoRole::Rx(VRX_LANE));
    }
    roles.extend((0..lane_count as u8).map(FifoRole::Tx));
    if loopback == 2 {
        roles.push(FifoRole::Tx(VTX_LANE));
    }
    Ok(roles)
}

pub fn build_inventory(slot_count: usize, lane_count: usize, loopback: usize) -> Result<Vec<FifoSpec>, FabricError> {
    let c = MacroConstraints::default();
    Ok(inventory_roles(slot_count, lane_count, loopback)?.into_iter().map(|r| fifo_spec(r, &c)).collect())
}

/// Tiling plan for every FIFO in an inventory.
pub fn plan_inventory(fifos: &[FifoSpec], c: &MacroConstraints) -> Result<Vec<(FifoSpec, TilingPlan)>, TilingError> {
    fifos.iter().map(|f| Ok((f.clone(), plan_tiling(f.depth, f.width, c)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_inventory() {
        let inv = build_inventory(26, 32, 2).unwrap();
        assert_eq!(inv.len(), 118);
        // Independent oracle: 52 vS-side FIFOs of 52x289 plus 66 lane-side of 66x417.
        let oracle: u64 = 52 * (52 * 289) + 66 * (66 * 417);
        assert_eq!(oracle, 2_597_908);
        assert_eq!(inv.iter().map(FifoSpec::capacity_bits).sum::<u64>(), oracle);
        assert_eq!((oracle as f64 / 8.0 / 1024.0).round(), 317.0);
        assert_eq!(inv.iter().filter(|f| f.storage == Storage::Flipflop).count(), 52);
    }

    #[test]
    fn single_slot_inventory() {
        assert_eq!(build_inventory(1, 32, 2).unwrap().len(), 68);
        assert_eq!(build_inventory(0, 32, 2), Err(FabricError::SlotCount(0)));
        assert_eq!(build_inventory(27, 32, 2), Err(FabricError::SlotCount(27)));
    }

    #[test]
    fn csv_report() {
        let inv = build_inventory(1, 1, 0).unwrap();
        let rows = plan_inventory(&inv, &MacroConstraints::default()).unwrap();
        let csv = tiling_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TILING_CSV_HEADER);
        assert_eq!(lines[1], "vs0_in,52,289,flipflop,-,0,15028,0");
        assert_eq!(lines[3], "rx0,66,417,sram,64x144,3,28482,960");
    }
}

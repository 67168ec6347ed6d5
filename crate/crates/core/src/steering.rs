//! Ingress and egress steering: the tables the IPI and OPI consult, the
//! classification rules, and the OPI's round-robin arbiter.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::types::{is_valid_vid, parse_vlan, DeviceId, LaneId, Packet, LANE_COUNT, PHYS_LANES, VRX_LANE, VTX_LANE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DropReason {
    NoTag,
    NoEntry,
    ExplicitDrop,
    SlotUnavailable,
    SlotBackpressure,
    Oversize,
    RxOverflow,
    Unauthorized,
    ParseError,
    PipelineDrop,
    Reconfig,
    LoopLimit,
}

impl DropReason {
    pub const ALL: [DropReason; 12] = [
        DropReason::NoTag,
        DropReason::NoEntry,
        DropReason::ExplicitDrop,
        DropReason::SlotUnavailable,
        DropReason::SlotBackpressure,
        DropReason::Oversize,
        DropReason::RxOverflow,
        DropReason::Unauthorized,
        DropReason::ParseError,
        DropReason::PipelineDrop,
        DropReason::Reconfig,
        DropReason::LoopLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoTag => "no_tag",
            DropReason::NoEntry => "no_entry",
            DropReason::ExplicitDrop => "explicit_drop",
            DropReason::SlotUnavailable => "slot_unavailable",
            DropReason::SlotBackpressure => "slot_backpressure",
            DropReason::Oversize => "oversize",
            DropReason::RxOverflow => "rx_overflow",
            DropReason::Unauthorized => "unauthorized",
            DropReason::ParseError => "parse_error",
            DropReason::PipelineDrop => "pipeline_drop",
            DropReason::Reconfig => "reconfig",
            DropReason::LoopLimit => "loop_limit",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IngressAction {
    Forward(DeviceId),
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EgressAction {
    /// Bitmap of authorized TX lanes.
    Forward(u64),
    Drop,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SteeringError {
    #[error("vid {0} is not a valid steering key")]
    InvalidVid(u16),
    #[error("lane {0} cannot {1}")]
    BadLane(u8, &'static str),
    #[error("device {0} is not a configured slot")]
    BadDevice(u8),
    #[error("entry already exists")]
    Duplicate,
    #[error("entry not found")]
    NotFound,
    #[error("empty lane set")]
    EmptyLaneSet,
}

/// Bitmap of every lane that can transmit.
pub const TX_LANE_MASK: u64 = ((1u64 << PHYS_LANES) - 1) | (1u64 << VTX_LANE);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteeringTables {
    slot_count: usize,
    ingress: BTreeMap<(u8, u16), IngressAction>,
    egress: BTreeMap<(u16, u8), EgressAction>,
}

impl SteeringTables {
    pub fn new(slot_count: usize) -> Self {
        Self { slot_count, ingress: BTreeMap::new(), egress: BTreeMap::new() }
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    fn check_device(&self, d: DeviceId) -> Result<(), SteeringError> {
        if d.index() < self.slot_count {
            Ok(())
        } else {
            Err(SteeringError::BadDevice(d.0))
        }
    }

    /// Insert-if-absent. A second entry for the same (lane, vid) is rejected
    /// and the table is left unchanged.
    pub fn ingress_add(&mut self, lane: LaneId, vid: u16, action: IngressAction) -> Result<(), SteeringError> {
        if !is_valid_vid(vid) {
            return Err(SteeringError::InvalidVid(vid));
        }
        if !lane.can_receive() {
            return Err(SteeringError::BadLane(lane.0, "receive"));
        }
        if let IngressAction::Forward(d) = action {
            self.check_device(d)?;
        }
        match self.ingress.entry((lane.0, vid)) {
            std::collections::btree_map::Entry::Occupied(_) => Err(SteeringError::Duplicate),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(action);
                Ok(())
            }
        }
    }

    pub fn ingress_del(&mut self, lane: LaneId, vid: u16) -> Result<IngressAction, SteeringError> {
        self.ingress.remove(&(lane.0, vid)).ok_or(SteeringError::NotFound)
    }

    pub fn ingress_lookup(&self, lane: LaneId, vid: u16) -> Option<IngressAction> {
        self.ingress.get(&(lane.0, vid)).copied()
    }

    pub fn ingress_entries(&self) -> impl Iterator<Item = ((LaneId, u16), IngressAction)> + '_ {
        self.ingress.iter().map(|((l, v), a)| ((LaneId(*l), *v), *a))
    }

    pub fn egress_add(&mut self, vid: u16, device: DeviceId, action: EgressAction) -> Result<(), SteeringError> {
        if !is_valid_vid(vid) {
            return Err(SteeringError::InvalidVid(vid));
        }
        self.check_device(device)?;
        if let EgressAction::Forward(mask) = action {
            if mask == 0 {
                return Err(SteeringError::EmptyLaneSet);
            }
            if mask & !TX_LANE_MASK != 0 {
                let bad = (mask & !TX_LANE_MASK).trailing_zeros() as u8;
                return Err(SteeringError::BadLane(bad, "transmit"));
            }
        }
        match self.egress.entry((vid, device.0)) {
            std::collections::btree_map::Entry::Occupied(_) => Err(SteeringError::Duplicate),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(action);
                Ok(())
            }
        }
    }

    pub fn egress_del(&mut self, vid: u16, device: DeviceId) -> Result<EgressAction, SteeringError> {
        self.egress.remove(&(vid, device.0)).ok_or(SteeringError::NotFound)
    }

    pub fn egress_lookup(&self, vid: u16, device: DeviceId) -> Option<EgressAction> {
        self.egress.get(&(vid, device.0)).copied()
    }

    pub fn egress_entries(&self) -> impl Iterator<Item = ((u16, DeviceId), EgressAction)> + '_ {
        self.egress.iter().map(|((v, d), a)| ((*v, DeviceId(*d)), *a))
    }

    pub fn ingress_len(&self) -> usize {
        self.ingress.len()
    }

    pub fn egress_len(&self) -> usize {
        self.egress.len()
    }

    /// Ingress decision. On forward the VLAN view and device id are stamped
    /// onto the packet. Slot availability is the caller's concern.
    pub fn ipi_classify(&self, pkt: &mut Packet) -> Result<DeviceId, DropReason> {
        let tag = parse_vlan(&pkt.frame).ok_or(DropReason::NoTag)?;
        pkt.vlan = Some(tag);
        match self.ingress_lookup(pkt.rx_lane, tag.vid) {
            None => Err(DropReason::NoEntry),
            Some(IngressAction::Drop) => Err(DropReason::ExplicitDrop),
            Some(IngressAction::Forward(d)) => {
                pkt.device_id = Some(d);
                Ok(d)
            }
        }
    }

    /// Egress authorization of a port a slot asked for.
    pub fn opi_classify(&self, pkt: &Packet, requested: LaneId) -> Result<LaneId, DropReason> {
        let device = pkt.device_id.ok_or(DropReason::Unauthorized)?;
        let vid = parse_vlan(&pkt.frame).map(|t| t.vid).ok_or(DropReason::NoEntry)?;
        match self.egress_lookup(vid, device) {
            None => Err(DropReason::NoEntry),
            Some(EgressAction::Drop) => Err(DropReason::ExplicitDrop),
            Some(EgressAction::Forward(mask)) => {
                if (requested.0 as usize) < LANE_COUNT && mask & (1 << requested.0) != 0 {
                    Ok(requested)
                } else {
                    Err(DropReason::Unauthorized)
                }
            }
        }
    }

    pub fn dump_ingress_csv(&self) -> String {
        let mut out = String::from("table,lane,vid,action,device\n");
        for ((l, v), a) in self.ingress_entries() {
            let _ = match a {
                IngressAction::Forward(d) => writeln!(out, "ingress,{},{},forward,{}", l.0, v, d.0),
                IngressAction::Drop => writeln!(out, "ingress,{},{},drop,", l.0, v),
            };
        }
        out
    }

    pub fn dump_egress_csv(&self) -> String {
        let mut out = String::from("table,vid,device,action,lanes\n");
        for ((v, d), a) in self.egress_entries() {
            let _ = match a {
                EgressAction::Forward(m) => writeln!(out, "egress,{},{},forward,{}", v, d.0, lane_list(m)),
                EgressAction::Drop => writeln!(out, "egress,{},{},drop,", v, d.0),
            };
        }
        out
    }
}

/// `1;2;33` style rendering of a lane bitmap.
pub fn lane_list(mask: u64) -> String {
    (0..LANE_COUNT).filter(|l| mask & (1 << l) != 0).map(|l| l.to_string()).collect::<Vec<_>>().join(";")
}

pub fn lane_mask(lanes: &[u8]) -> u64 {
    lanes.iter().fold(0, |m, l| m | (1u64 << (*l as u32 % 64)))
}

/// Rotating pointer over `n` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn position(&self) -> usize {
        self.next
    }

    /// First candidate at or after the pointer satisfying `ready`; the
    /// pointer moves past it.
    pub fn pick(&mut self, n: usize, mut ready: impl FnMut(usize) -> bool) -> Option<usize> {
        if n == 0 {
            return None;
        }
        let start = self.next % n;
        let found = (0..n).map(|k| (start + k) % n).find(|i| ready(*i))?;
        self.next = (found + 1) % n;
        Some(found)
    }
}

/// Head of one slot's output FIFO as the OPI sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotHead {
    pub target: LaneId,
    /// Words the packet needs in the TX FIFO.
    pub words: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub slot: usize,
    pub lane: LaneId,
}

/// Per-TX-lane round-robin pointers over slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpiArbiter {
    pointers: Vec<RoundRobin>,
}

impl Default for OpiArbiter {
    fn default() -> Self {
        Self { pointers: vec![RoundRobin::default(); LANE_COUNT] }
    }
}

impl OpiArbiter {
    pub fn pointer(&self, lane: LaneId) -> usize {
        self.pointers[lane.index()].position()
    }

    /// One arbitration round: at most one grant per idle TX lane. A head
    /// moves only when its TX FIFO can take it whole; otherwise it waits.
    pub fn arbitrate(&mut self, heads: &[Option<SlotHead>], tx_free_words: &[u32], lane_idle: &[bool]) -> Vec<Move> {
        let mut moves = Vec::new();
        for lane in 0..LANE_COUNT {
            if !lane_idle.get(lane).copied().unwrap_or(false) {
                continue;
            }
            let free = tx_free_words.get(lane).copied().unwrap_or(0);
            let pick = self.pointers[lane]
                .pick(heads.len(), |s| heads[s].is_some_and(|h| h.target.index() == lane && h.words <= free));
            if let Some(slot) = pick {
                moves.push(Move { slot, lane: LaneId(lane as u8) });
            }
        }
        moves
    }
}

pub fn is_loopback(lane: LaneId) -> bool {
    lane.0 == VRX_LANE || lane.0 == VTX_LANE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameTemplate;

    fn tagged(vid: u16, lane: u8) -> Packet {
        Packet::new(0, FrameTemplate::new(vid).build(64, 0), LaneId(lane), 0)
    }

    #[test]
    fn ingress_classification() {
        let mut t = SteeringTables::new(26);
        t.ingress_add(LaneId(3), 10, IngressAction::Forward(DeviceId(5))).unwrap();
        let mut p = tagged(10, 3);
        assert_eq!(t.ipi_classify(&mut p), Ok(DeviceId(5)));
        assert_eq!(p.device_id, Some(DeviceId(5)));
        let mut p = tagged(10, 4);
        assert_eq!(t.ipi_classify(&mut p), Err(DropReason::NoEntry));
        let mut untagged = tagged(10, 3);
        untagged.frame[12] = 0x08;
        untagged.frame[13] = 0x00;
        assert_eq!(t.ipi_classify(&mut untagged), Err(DropReason::NoTag));
        t.ingress_add(LaneId(4), 10, IngressAction::Drop).unwrap();
        assert_eq!(t.ipi_classify(&mut tagged(10, 4)), Err(DropReason::ExplicitDrop));
    }

    #[test]
    fn ingress_write_rules() {
        let mut t = SteeringTables::new(4);
        t.ingress_add(LaneId(1), 10, IngressAction::Forward(DeviceId(0))).unwrap();
        let before = t.clone();
        assert_eq!(t.ingress_add(LaneId(1), 10, IngressAction::Forward(DeviceId(1))), Err(SteeringError::Duplicate));
        assert_eq!(t.ingress_add(LaneId(2), 4095, IngressAction::Drop), Err(SteeringError::InvalidVid(4095)));
        assert_eq!(t.ingress_add(LaneId(2), 10, IngressAction::Forward(DeviceId(4))), Err(SteeringError::BadDevice(4)));
        assert_eq!(t.ingress_add(LaneId(33), 10, IngressAction::Drop), Err(SteeringError::BadLane(33, "receive")));
        assert_eq!(t, before);
        t.ingress_add(LaneId(2), 10, IngressAction::Forward(DeviceId(1))).unwrap();
    }

    #[test]
    fn egress_authorization() {
        let mut t = SteeringTables::new(26);
        t.egress_add(10, DeviceId(5), EgressAction::Forward(lane_mask(&[1, 2]))).unwrap();
        let mut p = tagged(10, 0);
        p.device_id = Some(DeviceId(5));
        assert_eq!(t.opi_classify(&p, LaneId(2)), Ok(LaneId(2)));
        assert_eq!(t.opi_classify(&p, LaneId(7)), Err(DropReason::Unauthorized));
        p.device_id = Some(DeviceId(6));
        assert_eq!(t.opi_classify(&p, LaneId(2)), Err(DropReason::NoEntry));
        assert_eq!(
            t.egress_add(11, DeviceId(0), EgressAction::Forward(1 << 32)),
            Err(SteeringError::BadLane(32, "transmit"))
        );
    }

    #[test]
    fn dumps() {
        let mut t = SteeringTables::new(26);
        t.ingress_add(LaneId(3), 10, IngressAction::Forward(DeviceId(5))).unwrap();
        t.egress_add(10, DeviceId(5), EgressAction::Forward(lane_mask(&[1, 33]))).unwrap();
        assert_eq!(t.dump_ingress_csv(), "table,lane,vid,action,device\ningress,3,10,forward,5\n");
        assert_eq!(t.dump_egress_csv(), "table,vid,device,action,lanes\negress,10,5,forward,1;33\n");
    }

    fn head(lane: u8) -> Option<SlotHead> {
        Some(SlotHead { target: LaneId(lane), words: 4 })
    }

    #[test]
    fn arbiter_single_slot() {
        let mut a = OpiArbiter::default();
        let moves = a.arbitrate(&[None, head(0)], &[66; LANE_COUNT], &[true; LANE_COUNT]);
        assert_eq!(moves, vec![Move { slot: 1, lane: LaneId(0) }]);
    }

    #[test]
    fn arbiter_pointer_decides_contention() {
        let mut a = OpiArbiter::default();
        let heads = [head(0), head(0)];
        let free = [66; LANE_COUNT];
        let idle = [true; LANE_COUNT];
        assert_eq!(a.arbitrate(&heads, &free, &idle)[0].slot, 0);
        assert_eq!(a.pointer(LaneId(0)), 1);
        assert_eq!(a.arbitrate(&heads, &free, &idle)[0].slot, 1);
        assert_eq!(a.arbitrate(&heads, &free, &idle)[0].slot, 0);
    }

    #[test]
    fn arbiter_skips_blocked_lane() {
        // Hand-simulated: slot 0 -> lane 0 (full), slot 1 -> lane 1 (free).
        let mut a = OpiArbiter::default();
        let mut free = [66; LANE_COUNT];
        free[0] = 2;
        let heads = [head(0), head(1)];
        let idle = [true; LANE_COUNT];
        assert_eq!(a.arbitrate(&heads, &free, &idle), vec![Move { slot: 1, lane: LaneId(1) }]);
        free[0] = 66;
        let heads = [head(0), None];
        assert_eq!(a.arbitrate(&heads, &free, &idle), vec![Move { slot: 0, lane: LaneId(0) }]);
    }
}

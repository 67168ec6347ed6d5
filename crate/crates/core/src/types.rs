//! Shared vocabulary: simulated time, clock domains, lanes, VLAN tags,
//! device identifiers and the packet that flows through the platform.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time and durations, in picoseconds.
pub type Picos = u64;

pub const PS_PER_NS: Picos = 1_000;
pub const PS_PER_US: Picos = 1_000_000;
pub const PS_PER_MS: Picos = 1_000_000_000;

/// Number of physical 100G lanes.
pub const PHYS_LANES: usize = 32;
/// Virtual loopback receive port.
pub const VRX_LANE: u8 = 32;
/// Virtual loopback transmit port; frames sent here re-enter on [`VRX_LANE`].
pub const VTX_LANE: u8 = 33;
/// Physical lanes plus the two loopback ports.
pub const LANE_COUNT: usize = 34;

/// Architectural limit on the number of virtual switch slots.
pub const MAX_SLOTS: usize = 26;

pub const MIN_FRAME: usize = 64;
pub const MAX_FRAME: usize = 9216;

/// Preamble, start-of-frame delimiter and inter-frame gap.
pub const ETH_FRAMING_BYTES: usize = 20;

pub const TPID_8021Q: u16 = 0x8100;

/// Bits a frame occupies on the wire, framing overhead included.
pub fn wire_bits(frame_len: usize) -> u64 {
    ((frame_len + ETH_FRAMING_BYTES) * 8) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockDomain {
    pub name: &'static str,
    pub frequency_hz: f64,
    /// `1 / frequency`, rounded to the nearest picosecond.
    pub period_ps: Picos,
}

impl ClockDomain {
    pub fn new(name: &'static str, frequency_hz: f64) -> Self {
        assert!(frequency_hz > 0.0, "clock frequency must be positive");
        let period_ps = (1e12 / frequency_hz).round() as Picos;
        Self { name, frequency_hz, period_ps }
    }

    /// 1 GHz standard-cell logic.
    pub fn asic() -> Self {
        Self::new("asic", 1.0e9)
    }

    /// 718.4 MHz FPGA fabric; the period rounds to 1392 ps.
    pub fn fpga() -> Self {
        Self::new("fpga", 718.4e6)
    }

    pub fn cycles(&self, n: u64) -> Picos {
        n * self.period_ps
    }
}

/// A link or server rate. Stored in kbit/s so that serialization delays are
/// exact integer divisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate {
    kbps: u64,
}

impl Rate {
    pub fn from_gbps(gbps: f64) -> Self {
        assert!(gbps > 0.0, "rate must be positive");
        Self { kbps: (gbps * 1e6).round() as u64 }
    }

    pub fn gbps(self) -> f64 {
        self.kbps as f64 / 1e6
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self { kbps: ((self.kbps as f64) * factor).round().max(1.0) as u64 }
    }

    /// Time to push `bits` through at this rate, rounded up to a whole picosecond.
    pub fn serialization(self, bits: u64) -> Picos {
        let num = bits as u128 * 1_000_000_000u128;
        num.div_ceil(self.kbps as u128) as Picos
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} Gbps", self.gbps())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("device id {0} out of range (slot count {1})")]
    DeviceOutOfRange(u8, usize),
    #[error("lane {0} out of range")]
    LaneOutOfRange(u8),
    #[error("vid {0} is not a valid steering key (1..=4094)")]
    InvalidVid(u16),
    #[error("invalid duration '{0}'")]
    BadDuration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u8);

impl LaneId {
    pub fn new(v: u8) -> Result<Self, TypeError> {
        if (v as usize) < LANE_COUNT {
            Ok(Self(v))
        } else {
            Err(TypeError::LaneOutOfRange(v))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_physical(self) -> bool {
        (self.0 as usize) < PHYS_LANES
    }

    /// Lanes that can carry frames out of the chip (physical lanes and vTX).
    pub fn can_transmit(self) -> bool {
        self.is_physical() || self.0 == VTX_LANE
    }

    /// Lanes that can bring frames in (physical lanes and vRX).
    pub fn can_receive(self) -> bool {
        self.is_physical() || self.0 == VRX_LANE
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u8);

impl DeviceId {
    pub fn new(v: u8, slot_count: usize) -> Result<Self, TypeError> {
        if (v as usize) < slot_count.min(MAX_SLOTS) {
            Ok(Self(v))
        } else {
            Err(TypeError::DeviceOutOfRange(v, slot_count))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 802.1Q tag control information. The TPID is implied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VlanTag {
    pub pcp: u8,
    pub dei: bool,
    pub vid: u16,
}

impl VlanTag {
    pub fn new(vid: u16) -> Self {
        Self { pcp: 0, dei: false, vid }
    }

    pub fn tci(&self) -> u16 {
        ((self.pcp as u16 & 0x7) << 13) | ((self.dei as u16) << 12) | (self.vid & 0x0fff)
    }

    pub fn to_bytes(&self) -> [u8; 4] {
        let tci = self.tci();
        [0x81, 0x00, (tci >> 8) as u8, tci as u8]
    }
}

pub fn is_valid_vid(vid: u16) -> bool {
    (1..=4094).contains(&vid)
}

/// Extracts a single 802.1Q tag at offset 12. VIDs 0 and 4095 are reserved
/// and yield `None`, as do short frames and other ethertypes.
pub fn parse_vlan(frame: &[u8]) -> Option<VlanTag> {
    if frame.len() < 18 {
        return None;
    }
    if u16::from_be_bytes([frame[12], frame[13]]) != TPID_8021Q {
        return None;
    }
    let tci = u16::from_be_bytes([frame[14], frame[15]]);
    let vid = tci & 0x0fff;
    if !is_valid_vid(vid) {
        return None;
    }
    Some(VlanTag { pcp: (tci >> 13) as u8, dei: tci & 0x1000 != 0, vid })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    /// Unique per injected frame; copies made by flooding keep the id.
    pub id: u64,
    pub frame: Vec<u8>,
    pub rx_lane: LaneId,
    /// Time the last bit was received on the ingress PHY.
    pub arrival_time: Picos,
    pub vlan: Option<VlanTag>,
    pub device_id: Option<DeviceId>,
    /// Lane and tag at first injection, for per-flow accounting.
    pub origin: (LaneId, Option<u16>),
    /// Wire size at injection; goodput is accounted in these bits.
    pub origin_bits: u64,
    pub loop_count: u8,
}

impl Packet {
    pub fn new(id: u64, frame: Vec<u8>, rx_lane: LaneId, arrival_time: Picos) -> Self {
        let vlan = parse_vlan(&frame);
        let origin_bits = wire_bits(frame.len());
        Self {
            id,
            rx_lane,
            arrival_time,
            vlan,
            device_id: None,
            origin: (rx_lane, vlan.map(|t| t.vid)),
            origin_bits,
            frame,
            loop_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    pub fn bits(&self) -> u64 {
        self.frame.len() as u64 * 8
    }

    pub fn wire_bits(&self) -> u64 {
        wire_bits(self.frame.len())
    }
}

/// Parses durations such as `1ms`, `250us`, `10ns`, `1392ps` or `0.5ms`.
pub fn parse_duration(s: &str) -> Result<Picos, TypeError> {
    let t = s.trim();
    let bad = || TypeError::BadDuration(s.to_string());
    let split = t.find(|c: char| c.is_ascii_alphabetic()).ok_or_else(bad)?;
    let (num, unit) = t.split_at(split);
    let scale: Picos = match unit.trim() {
        "ps" => 1,
        "ns" => PS_PER_NS,
        "us" => PS_PER_US,
        "ms" => PS_PER_MS,
        "s" => 1_000 * PS_PER_MS,
        _ => return Err(bad()),
    };
    let num = num.trim();
    if let Ok(v) = num.parse::<u64>() {
        return v.checked_mul(scale).ok_or_else(bad);
    }
    let v: f64 = num.parse().map_err(|_| bad())?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(bad());
    }
    Ok((v * scale as f64).round() as Picos)
}

pub fn format_duration(ps: Picos) -> String {
    if ps != 0 && ps.is_multiple_of(PS_PER_MS) {
        format!("{}ms", ps / PS_PER_MS)
    } else if ps != 0 && ps.is_multiple_of(PS_PER_US) {
        format!("{}us", ps / PS_PER_US)
    } else if ps != 0 && ps.is_multiple_of(PS_PER_NS) {
        format!("{}ns", ps / PS_PER_NS)
    } else {
        format!("{ps}ps")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tagged(tci: [u8; 2]) -> Vec<u8> {
        let mut f = vec![0u8; 64];
        f[12] = 0x81;
        f[13] = 0x00;
        f[14] = tci[0];
        f[15] = tci[1];
        f
    }

    #[test]
    fn parse_vlan_extracts_vid() {
        let tag = parse_vlan(&tagged([0x00, 0x0a])).unwrap();
        assert_eq!(tag, VlanTag { pcp: 0, dei: false, vid: 10 });
    }

    #[test]
    fn parse_vlan_untagged() {
        let mut f = vec![0u8; 64];
        f[12] = 0x08;
        assert_eq!(parse_vlan(&f), None);
    }

    #[test]
    fn parse_vlan_rejects_reserved_vids() {
        // 802.1Q: VID 0x000 means priority-tagged only, 0xFFF is reserved.
        assert_eq!(parse_vlan(&tagged([0x0f, 0xff])), None);
        assert_eq!(parse_vlan(&tagged([0x00, 0x00])), None);
        assert_eq!(parse_vlan(&tagged([0xef, 0xfe])).map(|t| t.vid), Some(4094));
    }

    #[test]
    fn parse_vlan_short_frame() {
        assert_eq!(parse_vlan(&tagged([0, 10])[..17]), None);
    }

    #[test]
    fn clock_periods() {
        assert_eq!(ClockDomain::asic().period_ps, 1000);
        assert_eq!(ClockDomain::fpga().period_ps, 1392);
    }

    #[test]
    fn serialization_is_exact() {
        assert_eq!(Rate::from_gbps(100.0).serialization(wire_bits(1518)), 123_040);
        // 12304 bits at 132.63 Gbps = 92769.35 ps
        assert_eq!(Rate::from_gbps(132.63).serialization(12_304), 92_770);
        assert_eq!(Rate::from_gbps(132.63).scaled(0.95).gbps(), 125.9985);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("1ms").unwrap(), PS_PER_MS);
        assert_eq!(parse_duration("250 us").unwrap(), 250 * PS_PER_US);
        assert_eq!(parse_duration("0.5ms").unwrap(), PS_PER_MS / 2);
        assert_eq!(parse_duration("1392ps").unwrap(), 1392);
        assert!(parse_duration("12").is_err());
        assert!(parse_duration("3 parsecs").is_err());
        assert_eq!(format_duration(20 * PS_PER_US), "20us");
        assert_eq!(format_duration(1392), "1392ps");
    }

    proptest! {
        #[test]
        fn vlan_round_trip(pcp in 0u8..8, dei: bool, vid in 1u16..=4094, pad in 0usize..64) {
            let tag = VlanTag { pcp, dei, vid };
            let mut frame = vec![0xaau8; 12];
            frame.extend_from_slice(&tag.to_bytes());
            frame.extend(std::iter::repeat_n(0x55, 2 + pad));
            prop_assert_eq!(parse_vlan(&frame), Some(tag));
            prop_assert_eq!(parse_vlan(&frame), parse_vlan(&frame.clone()));
        }
    }
}

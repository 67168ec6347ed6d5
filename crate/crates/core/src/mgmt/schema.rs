//! Payload layouts per (target, resource). Fields are packed MSB first from
//! payload bit 127; table keys sit right-aligned in the low bits.

use thiserror::Error;

use crate::pipeline::{prefix_mask, EntryAction, EntryActionKind, MatchKey, MatchKind, PipelineSpec};
use crate::steering::{EgressAction, IngressAction};
use crate::types::{DeviceId, LANE_COUNT};

/// Set in bit 127 to request the entry at an index (low 16 bits) instead of
/// a key lookup. Used for dumps.
pub const INDEX_FLAG: u128 = 1 << 127;

pub fn index_read(index: u16) -> u128 {
    INDEX_FLAG | index as u128
}

pub fn index_of(payload: u128) -> Option<u16> {
    (payload & INDEX_FLAG != 0).then_some(payload as u16)
}

pub const ACT_DELETE: u8 = 0;
pub const ACT_FORWARD: u8 = 1;
pub const ACT_DROP: u8 = 2;
pub const ACT_NO_OP: u8 = 3;
pub const ACT_PORT_SET: u8 = 4;

struct Packer {
    value: u128,
    top: u32,
}

impl Packer {
    fn new() -> Self {
        Self { value: 0, top: 128 }
    }

    fn put(&mut self, width: u32, v: u128) {
        self.top -= width;
        self.value |= (v & mask(width)) << self.top;
    }
}

struct Unpacker {
    value: u128,
    top: u32,
}

impl Unpacker {
    fn new(value: u128) -> Self {
        Self { value, top: 128 }
    }

    fn take(&mut self, width: u32) -> u128 {
        self.top -= width;
        (self.value >> self.top) & mask(width)
    }
}

fn mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// [flag 1][lane 6][vid 12][action 2][device 5]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngressRecord {
    pub lane: u8,
    pub vid: u16,
    pub action: u8,
    pub device: u8,
}

impl IngressRecord {
    pub fn encode(&self) -> u128 {
        let mut p = Packer::new();
        p.put(1, 0);
        p.put(6, self.lane as u128);
        p.put(12, self.vid as u128);
        p.put(2, self.action as u128);
        p.put(5, self.device as u128);
        p.value
    }

    pub fn decode(payload: u128) -> Self {
        let mut u = Unpacker::new(payload);
        u.take(1);
        Self { lane: u.take(6) as u8, vid: u.take(12) as u16, action: u.take(2) as u8, device: u.take(5) as u8 }
    }

    pub fn from_entry(lane: u8, vid: u16, a: IngressAction) -> Self {
        match a {
            IngressAction::Forward(d) => Self { lane, vid, action: ACT_FORWARD, device: d.0 },
            IngressAction::Drop => Self { lane, vid, action: ACT_DROP, device: 0 },
        }
    }

    pub fn to_action(&self) -> Option<IngressAction> {
        match self.action {
            ACT_FORWARD => Some(IngressAction::Forward(DeviceId(self.device))),
            ACT_DROP => Some(IngressAction::Drop),
            _ => None,
        }
    }
}

/// [flag 1][vid 12][device 5][action 2][lanes 34]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EgressRecord {
    pub vid: u16,
    pub device: u8,
    pub action: u8,
    pub lanes: u64,
}

impl EgressRecord {
    pub fn encode(&self) -> u128 {
        let mut p = Packer::new();
        p.put(1, 0);
        p.put(12, self.vid as u128);
        p.put(5, self.device as u128);
        p.put(2, self.action as u128);
        p.put(LANE_COUNT as u32, self.lanes as u128);
        p.value
    }

    pub fn decode(payload: u128) -> Self {
        let mut u = Unpacker::new(payload);
        u.take(1);
        Self {
            vid: u.take(12) as u16,
            device: u.take(5) as u8,
            action: u.take(2) as u8,
            lanes: u.take(LANE_COUNT as u32) as u64,
        }
    }

    pub fn from_entry(vid: u16, device: DeviceId, a: EgressAction) -> Self {
        match a {
            EgressAction::Forward(m) => Self { vid, device: device.0, action: ACT_FORWARD, lanes: m },
            EgressAction::Drop => Self { vid, device: device.0, action: ACT_DROP, lanes: 0 },
        }
    }

    pub fn to_action(&self) -> Option<EgressAction> {
        match self.action {
            ACT_FORWARD => Some(EgressAction::Forward(self.lanes)),
            ACT_DROP => Some(EgressAction::Drop),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("table '{0}' needs {1} payload bits")]
    TooWide(String, u32),
    #[error("unknown table {0}")]
    UnknownTable(u8),
}

/// Wire layout of one vS table:
/// [flag 1][action 3][param 6 or 34][priority 8 if ternary][prefix 8 if lpm]
/// [per-field prefix lengths if ternary] ... [key, right-aligned].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub table_id: u8,
    pub name: String,
    pub kind: MatchKind,
    pub fields: Vec<(String, u32)>,
    pub port_set: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRecord {
    pub action: u8,
    pub param: u64,
    pub key: MatchKey,
}

fn len_bits(width: u32) -> u32 {
    32 - width.leading_zeros()
}

impl TableSchema {
    pub fn for_table(spec: &PipelineSpec, table_id: u8) -> Result<Self, SchemaError> {
        let stage = spec.stage_by_id(table_id).ok_or(SchemaError::UnknownTable(table_id))?;
        let fields: Vec<(String, u32)> = stage.key.iter().cloned().zip(spec.key_widths(stage)).collect();
        let s = Self {
            table_id,
            name: stage.name.clone(),
            kind: stage.match_kind,
            fields,
            port_set: stage.actions.contains(&EntryActionKind::PortSet),
        };
        if s.bits() > 128 {
            return Err(SchemaError::TooWide(s.name.clone(), s.bits()));
        }
        Ok(s)
    }

    pub fn by_name(spec: &PipelineSpec, name: &str) -> Option<Result<Self, SchemaError>> {
        spec.stage(name).map(|st| Self::for_table(spec, st.table_id))
    }

    pub fn key_width(&self) -> u32 {
        self.fields.iter().map(|f| f.1).sum()
    }

    fn param_width(&self) -> u32 {
        if self.port_set {
            LANE_COUNT as u32
        } else {
            6
        }
    }

    fn header_bits(&self) -> u32 {
        let mut b = 1 + 3 + self.param_width();
        match self.kind {
            MatchKind::Exact => {}
            MatchKind::Lpm => b += 8,
            MatchKind::Ternary => b += 8 + self.fields.iter().map(|f| len_bits(f.1)).sum::<u32>(),
        }
        b
    }

    pub fn bits(&self) -> u32 {
        self.header_bits() + self.key_width()
    }

    /// Per-field prefix lengths of a ternary mask. Non-prefix masks are
    /// reported by their leading ones.
    pub fn field_prefixes(&self, mask_bits: u128) -> Vec<u32> {
        let mut shift = self.key_width();
        self.fields
            .iter()
            .map(|(_, w)| {
                shift -= w;
                let m = (mask_bits >> shift) & mask(*w);
                let lead = (m << (128 - w)).leading_ones();
                lead.min(*w)
            })
            .collect()
    }

    pub fn mask_from_prefixes(&self, lens: &[u32]) -> u128 {
        self.fields.iter().zip(lens).fold(0u128, |acc, ((_, w), l)| (acc << w) | prefix_mask((*l).min(*w) as u8, *w))
    }

    pub fn encode(&self, rec: &TableRecord) -> u128 {
        let mut p = Packer::new();
        p.put(1, 0);
        p.put(3, rec.action as u128);
        p.put(self.param_width(), rec.param as u128);
        let key = match rec.key {
            MatchKey::Exact(v) => v,
            MatchKey::Lpm { value, prefix_len } => {
                p.put(8, prefix_len as u128);
                value
            }
            MatchKey::Ternary { value, mask: m, priority } => {
                p.put(8, priority as u128);
                for (l, (_, w)) in self.field_prefixes(m).into_iter().zip(&self.fields) {
                    p.put(len_bits(*w), l as u128);
                }
                value
            }
        };
        p.value | (key & mask(self.key_width()))
    }

    pub fn decode(&self, payload: u128) -> TableRecord {
        let mut u = Unpacker::new(payload);
        u.take(1);
        let action = u.take(3) as u8;
        let param = u.take(self.param_width()) as u64;
        let value = payload & mask(self.key_width());
        let key = match self.kind {
            MatchKind::Exact => MatchKey::Exact(value),
            MatchKind::Lpm => MatchKey::Lpm { value, prefix_len: u.take(8) as u8 },
            MatchKind::Ternary => {
                let priority = u.take(8) as u32;
                let lens: Vec<u32> = self.fields.iter().map(|(_, w)| u.take(len_bits(*w)) as u32).collect();
                let m = self.mask_from_prefixes(&lens);
                MatchKey::Ternary { value: value & m, mask: m, priority }
            }
        };
        TableRecord { action, param, key }
    }
}

pub fn action_code(a: EntryAction) -> (u8, u64) {
    match a {
        EntryAction::Forward(p) => (ACT_FORWARD, p as u64),
        EntryAction::Drop => (ACT_DROP, 0),
        EntryAction::NoOp => (ACT_NO_OP, 0),
        EntryAction::PortSet(m) => (ACT_PORT_SET, m),
    }
}

pub fn action_from_code(code: u8, param: u64) -> Option<EntryAction> {
    match code {
        ACT_FORWARD if (param as usize) < LANE_COUNT => Some(EntryAction::Forward(param as u8)),
        ACT_DROP => Some(EntryAction::Drop),
        ACT_NO_OP => Some(EntryAction::NoOp),
        ACT_PORT_SET => Some(EntryAction::PortSet(param)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builtin_specs;

    #[test]
    fn builtin_tables_fit_payload() {
        for spec in builtin_specs().values() {
            for st in &spec.stages {
                let s = TableSchema::for_table(spec, st.table_id).unwrap();
                assert!(s.bits() <= 128, "{} {}", spec.name, s.bits());
            }
        }
        let fw = &builtin_specs()["firewall"];
        assert_eq!(TableSchema::for_table(fw, 0).unwrap().bits(), 127);
    }

    #[test]
    fn steering_records_round_trip() {
        let r = IngressRecord { lane: 33, vid: 4094, action: ACT_FORWARD, device: 25 };
        assert_eq!(IngressRecord::decode(r.encode()), r);
        assert_eq!(index_of(r.encode()), None);
        let e = EgressRecord { vid: 7, device: 3, action: ACT_FORWARD, lanes: (1 << 33) | 5 };
        assert_eq!(EgressRecord::decode(e.encode()), e);
        assert_eq!(index_of(index_read(9)), Some(9));
    }

    #[test]
    fn ternary_round_trip() {
        let fw = &builtin_specs()["firewall"];
        let s = TableSchema::for_table(fw, 0).unwrap();
        let m = s.mask_from_prefixes(&[24, 0, 8, 16]);
        let rec = TableRecord {
            action: ACT_FORWARD,
            param: 4,
            key: MatchKey::Ternary { value: (0x0a00_0100u128 << 56) & m | (17 << 16) | 80, mask: m, priority: 9 },
        };
        assert_eq!(s.decode(s.encode(&rec)), rec);
        assert_eq!(s.field_prefixes(m), vec![24, 0, 8, 16]);
    }
}

//! Compiles a [`PipelineSpec`] into a resolved program and runs packets
//! through it against one instance's private tables and registers.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::spec::*;
use super::table::{MatchKey, MatchTable, TableError};
use crate::types::{parse_vlan, DeviceId, LaneId, Packet, Picos, LANE_COUNT};

const META_FIELDS: &[(&str, u32)] = &[
    ("meta.ingress_port", 8),
    ("meta.device_id", 8),
    ("meta.ingress_ts", 64),
    ("meta.egress_ts", 64),
    ("meta.queue_bits", 64),
    ("meta.packet_len", 16),
];

pub(crate) fn meta_width(name: &str) -> Option<u32> {
    META_FIELDS.iter().find(|(n, _)| *n == name).map(|(_, w)| *w)
}

pub type FieldId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FieldLoc {
    Header { hdr: usize, bit_off: usize, width: u32 },
    Meta { slot: usize, width: u32 },
    Reg(usize),
}

impl FieldLoc {
    fn width(&self) -> u32 {
        match *self {
            FieldLoc::Header { width, .. } | FieldLoc::Meta { width, .. } => width,
            FieldLoc::Reg(_) => 64,
        }
    }
}

#[derive(Debug, Clone)]
struct HeaderDef {
    len: usize,
    /// (bit offset, width) of the select field.
    select: Option<(usize, u32)>,
    transitions: Vec<(u64, usize)>,
    default_next: Option<usize>,
}

/// Actions an entry may carry. These are the only actions the control plane
/// can install; everything else is fixed by the spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryAction {
    Forward(u8),
    Drop,
    NoOp,
    /// Bitmap of lanes.
    PortSet(u64),
}

impl EntryAction {
    pub fn kind(&self) -> EntryActionKind {
        match self {
            EntryAction::Forward(_) => EntryActionKind::Forward,
            EntryAction::Drop => EntryActionKind::Drop,
            EntryAction::NoOp => EntryActionKind::NoOp,
            EntryAction::PortSet(_) => EntryActionKind::PortSet,
        }
    }

    fn from_spec(a: &ActionSpec) -> Option<Self> {
        Some(match a {
            ActionSpec::Forward { port } => EntryAction::Forward(*port),
            ActionSpec::Drop => EntryAction::Drop,
            ActionSpec::NoOp => EntryAction::NoOp,
            ActionSpec::PortSet { ports } => EntryAction::PortSet(ports_to_mask(ports)),
            _ => return None,
        })
    }
}

pub fn ports_to_mask(ports: &[u8]) -> u64 {
    ports.iter().filter(|p| (**p as usize) < LANE_COUNT).fold(0, |m, p| m | 1 << p)
}

pub fn mask_to_ports(mask: u64) -> Vec<u8> {
    (0..LANE_COUNT as u8).filter(|p| mask & (1 << p) != 0).collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Entry(EntryAction),
    Flood { members: usize },
    SetField(FieldId, u64),
    AddToField(FieldId, i64),
    Learn { table: usize, key: Vec<FieldId>, value: FieldId },
    PushHeader { header: usize, after: usize, fields: Vec<(u32, Operand)> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operand {
    Const(u64),
    Field(FieldId),
}

#[derive(Debug)]
struct Program {
    spec: PipelineSpec,
    headers: Vec<HeaderDef>,
    fields: Vec<FieldLoc>,
    field_ids: BTreeMap<String, FieldId>,
    deparser: Vec<usize>,
    defaults: Vec<Action>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub id: u8,
    pub apply: bool,
    pub allowed: Vec<EntryActionKind>,
    key: Vec<FieldId>,
    pub key_widths: Vec<u32>,
    pub entries: MatchTable<EntryAction>,
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InstanceCounters {
    pub packets: u64,
    pub emitted: u64,
    pub parse_errors: u64,
    pub drops: u64,
    pub learn_rejects: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EgressMeta {
    pub port: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketContext {
    /// Time the instance starts processing the packet.
    pub ingress_ts: Picos,
    /// Time the packet leaves the instance.
    pub egress_ts: Picos,
    /// Bits left in the instance's input queue.
    pub queue_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineDrop {
    ParseError,
    /// Explicit drop, or no forwarding decision reached.
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutcome {
    Emit(Vec<(Packet, EgressMeta)>),
    Drop(PipelineDrop),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineFault {
    #[error("{spec}: flood membership table '{table}' returned a non port-set action")]
    FloodMembers { spec: String, table: String },
}

/// Live state of one deployed virtual switch. Tables and registers are
/// owned by the instance; the compiled program is immutable and shared.
#[derive(Debug, Clone)]
pub struct VsInstance {
    program: Arc<Program>,
    pub device_id: DeviceId,
    pub registers: Vec<u64>,
    pub tables: Vec<Table>,
    pub counters: InstanceCounters,
}

fn invalid(spec: &PipelineSpec, msg: impl Into<String>) -> SpecError {
    SpecError::Invalid(spec.name.clone(), msg.into())
}

fn compile(spec: &PipelineSpec) -> Result<(Program, Vec<Table>), SpecError> {
    if !(spec.rate_gbps > 0.0 && spec.rate_gbps.is_finite()) {
        return Err(invalid(spec, "rate_gbps must be positive"));
    }
    if spec.latency_cycles < 1 {
        return Err(invalid(spec, "latency_cycles must be at least 1"));
    }
    if spec.parser.is_empty() {
        return Err(invalid(spec, "parser has no states"));
    }
    if spec.stages.is_empty() {
        return Err(invalid(spec, "pipeline has no stages"));
    }

    // Headers: parsed states first, then headers introduced by push_header.
    let mut headers: Vec<HeaderDef> = Vec::new();
    let mut header_idx: BTreeMap<String, usize> = BTreeMap::new();
    let mut fields: Vec<FieldLoc> = Vec::new();
    let mut field_ids: BTreeMap<String, FieldId> = BTreeMap::new();
    for st in &spec.parser {
        if header_idx.insert(st.name.clone(), headers.len()).is_some() {
            return Err(invalid(spec, format!("duplicate parser state '{}'", st.name)));
        }
        if st.length == 0 {
            return Err(invalid(spec, format!("header '{}' has zero length", st.name)));
        }
        let mut off = 0usize;
        let mut select = None;
        for f in &st.fields {
            if f.width == 0 || f.width > MAX_FIELD_BITS {
                return Err(invalid(spec, format!("field {}.{} width {}", st.name, f.name, f.width)));
            }
            let name = format!("{}.{}", st.name, f.name);
            let loc = FieldLoc::Header { hdr: headers.len(), bit_off: off, width: f.width };
            if field_ids.insert(name.clone(), fields.len()).is_some() {
                return Err(invalid(spec, format!("duplicate field '{name}'")));
            }
            fields.push(loc);
            if st.select.as_deref() == Some(f.name.as_str()) {
                select = Some((off, f.width));
            }
            off += f.width as usize;
        }
        if off != st.length * 8 {
            return Err(invalid(
                spec,
                format!("header '{}' fields cover {} bits, length is {} bytes", st.name, off, st.length),
            ));
        }
        if st.select.is_some() && select.is_none() {
            return Err(invalid(spec, format!("select field of '{}' not found", st.name)));
        }
        headers.push(HeaderDef { len: st.length, select, transitions: Vec::new(), default_next: None });
    }
    let header_of = |idx: &BTreeMap<String, usize>, name: &str| {
        idx.get(name).copied().ok_or_else(|| invalid(spec, format!("unknown header '{name}'")))
    };
    for (i, st) in spec.parser.iter().enumerate() {
        let mut tr = Vec::new();
        for t in &st.transitions {
            tr.push((t.value, header_of(&header_idx, &t.next)?));
        }
        headers[i].transitions = tr;
        headers[i].default_next = st.default_next.as_deref().map(|n| header_of(&header_idx, n)).transpose()?;
    }
    for (slot, (name, width)) in META_FIELDS.iter().enumerate() {
        field_ids.insert(name.to_string(), fields.len());
        fields.push(FieldLoc::Meta { slot, width: *width });
    }
    for r in 0..spec.registers {
        field_ids.insert(format!("reg.{r}"), fields.len());
        fields.push(FieldLoc::Reg(r));
    }

    // Pushed headers.
    let mut push_bytes = 0usize;
    for stage in &spec.stages {
        let pushes = std::iter::once(&stage.default_action);
        for a in pushes {
            if let ActionSpec::PushHeader { header, fields: rec, .. } = a {
                let bits: u32 = rec.iter().map(|f| f.width).sum();
                if !bits.is_multiple_of(8) || rec.iter().any(|f| f.width == 0 || f.width > MAX_FIELD_BITS) {
                    return Err(invalid(spec, format!("pushed header '{header}' is not byte aligned")));
                }
                push_bytes += bits as usize / 8;
                if header_idx.contains_key(header) {
                    return Err(invalid(spec, format!("pushed header '{header}' shadows a parsed one")));
                }
                header_idx.insert(header.clone(), headers.len());
                headers.push(HeaderDef {
                    len: bits as usize / 8,
                    select: None,
                    transitions: Vec::new(),
                    default_next: None,
                });
            }
        }
    }
    if push_bytes > HEADROOM_BYTES {
        return Err(invalid(spec, format!("pushes add {push_bytes} bytes, headroom is {HEADROOM_BYTES}")));
    }

    let resolve =
        |name: &str| field_ids.get(name).copied().ok_or_else(|| invalid(spec, format!("unknown field '{name}'")));

    let mut tables: Vec<Table> = Vec::new();
    let mut table_idx: BTreeMap<u8, usize> = BTreeMap::new();
    for stage in &spec.stages {
        if table_idx.insert(stage.table_id, tables.len()).is_some() {
            return Err(invalid(spec, format!("duplicate table id {}", stage.table_id)));
        }
        let key: Vec<FieldId> = stage.key.iter().map(|k| resolve(k)).collect::<Result<_, _>>()?;
        let key_widths: Vec<u32> = key.iter().map(|f| fields[*f].width()).collect();
        let key_width: u32 = key_widths.iter().sum();
        if key_width > MAX_KEY_BITS {
            return Err(invalid(spec, format!("table '{}' key is {key_width} bits", stage.name)));
        }
        if key.is_empty() && !stage.entries.is_empty() {
            return Err(invalid(spec, format!("keyless table '{}' has entries", stage.name)));
        }
        let mut entries = MatchTable::new(stage.match_kind, key_width, stage.capacity);
        for e in &stage.entries {
            let act =
                EntryAction::from_spec(&e.action).filter(|a| stage.actions.contains(&a.kind())).ok_or_else(|| {
                    invalid(spec, format!("entry action '{}' not allowed in '{}'", e.action.kind_name(), stage.name))
                })?;
            let mk = entry_key(e, stage.match_kind, &key_widths)
                .ok_or_else(|| invalid(spec, format!("malformed entry in '{}'", stage.name)))?;
            entries.insert(mk, act).map_err(|err| invalid(spec, format!("table '{}': {err}", stage.name)))?;
        }
        tables.push(Table {
            name: stage.name.clone(),
            id: stage.table_id,
            apply: stage.apply,
            allowed: stage.actions.clone(),
            key,
            key_widths,
            entries,
            hits: 0,
            misses: 0,
        });
    }

    let mut defaults = Vec::new();
    for stage in &spec.stages {
        let a = &stage.default_action;
        let compiled = match a {
            ActionSpec::Flood { members } => {
                let idx = *table_idx
                    .get(members)
                    .ok_or_else(|| invalid(spec, format!("flood members table {members} missing")))?;
                if spec.stages[idx].match_kind != MatchKind::Exact {
                    return Err(invalid(spec, "flood members table must be exact"));
                }
                Action::Flood { members: idx }
            }
            ActionSpec::SetField { field, value } => Action::SetField(resolve(field)?, *value),
            ActionSpec::AddToField { field, delta } => Action::AddToField(resolve(field)?, *delta),
            ActionSpec::Learn { table, key, value } => {
                let idx = *table_idx.get(table).ok_or_else(|| invalid(spec, format!("learn table {table} missing")))?;
                let key: Vec<FieldId> = key.iter().map(|k| resolve(k)).collect::<Result<_, _>>()?;
                let width: u32 = key.iter().map(|f| fields[*f].width()).sum();
                if tables[idx].entries.kind() != MatchKind::Exact || width != tables[idx].entries.key_width() {
                    return Err(invalid(spec, format!("learn key does not fit table {table}")));
                }
                Action::Learn { table: idx, key, value: resolve(value)? }
            }
            ActionSpec::PushHeader { header, after, fields: rec } => {
                let ops = rec
                    .iter()
                    .map(|f| {
                        Ok((
                            f.width,
                            match &f.from {
                                Some(src) => Operand::Field(resolve(src)?),
                                None => Operand::Const(f.value),
                            },
                        ))
                    })
                    .collect::<Result<Vec<_>, SpecError>>()?;
                Action::PushHeader { header: header_idx[header], after: header_of(&header_idx, after)?, fields: ops }
            }
            other => Action::Entry(EntryAction::from_spec(other).expect("entry-style action")),
        };
        defaults.push(compiled);
    }

    let mut deparser = Vec::new();
    for name in &spec.deparser {
        let h = header_of(&header_idx, name)?;
        if deparser.contains(&h) {
            return Err(invalid(spec, format!("header '{name}' emitted twice")));
        }
        deparser.push(h);
    }
    for a in &defaults {
        if let Action::PushHeader { header, after, .. } = a {
            let pos = deparser.iter().position(|h| h == after);
            if pos.map(|p| deparser.get(p + 1)) != Some(Some(header)) {
                return Err(invalid(spec, "pushed header must be emitted right after its anchor"));
            }
        }
    }

    Ok((Program { spec: spec.clone(), headers, fields, field_ids, deparser, defaults }, tables))
}

fn entry_key(e: &MatchEntry, kind: MatchKind, widths: &[u32]) -> Option<MatchKey> {
    if e.key.len() != widths.len() {
        return None;
    }
    let pack = |vals: &[u64]| -> Option<u128> {
        vals.iter().zip(widths).try_fold(0u128, |acc, (v, w)| {
            let lim = if *w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
            (*v <= lim).then_some((acc << w) | *v as u128)
        })
    };
    let value = pack(&e.key)?;
    Some(match kind {
        MatchKind::Exact => MatchKey::Exact(value),
        MatchKind::Lpm => MatchKey::Lpm { value, prefix_len: e.prefix_len? },
        MatchKind::Ternary => MatchKey::Ternary { value, mask: pack(e.mask.as_ref()?)?, priority: e.priority? },
    })
}

fn low_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

fn read_bits(buf: &[u8], bit_off: usize, width: u32) -> u64 {
    let first = bit_off / 8;
    let last = (bit_off + width as usize - 1) / 8;
    let span = buf[first..=last].iter().fold(0u128, |acc, b| (acc << 8) | *b as u128);
    let shift = (last - first + 1) * 8 - bit_off % 8 - width as usize;
    ((span >> shift) & low_mask(width)) as u64
}

fn write_bits(buf: &mut [u8], bit_off: usize, width: u32, value: u64) {
    let first = bit_off / 8;
    let last = (bit_off + width as usize - 1) / 8;
    let span = buf[first..=last].iter().fold(0u128, |acc, b| (acc << 8) | *b as u128);
    let shift = (last - first + 1) * 8 - bit_off % 8 - width as usize;
    let m = low_mask(width) << shift;
    let span = (span & !m) | (((value as u128) << shift) & m);
    for (i, b) in buf[first..=last].iter_mut().rev().enumerate() {
        *b = (span >> (8 * i)) as u8;
    }
}

/// Per-packet header vector.
struct Phv {
    offsets: Vec<Option<usize>>,
    parse_order: Vec<usize>,
    payload_off: usize,
    pushed: Vec<(usize, Vec<u8>)>,
    meta: [u64; META_FIELDS.len()],
}

enum Decision {
    Port(u8),
    Ports(u64),
    Drop,
}

impl VsInstance {
    pub fn new(spec: &PipelineSpec, device_id: DeviceId) -> Result<Self, SpecError> {
        let (program, tables) = compile(spec)?;
        Ok(Self {
            registers: vec![0; spec.registers],
            program: Arc::new(program),
            device_id,
            tables,
            counters: InstanceCounters::default(),
        })
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.program.spec
    }

    /// Validates a spec without keeping the instance.
    pub fn check(spec: &PipelineSpec) -> Result<(), SpecError> {
        compile(spec).map(|_| ())
    }

    pub fn table_index(&self, table_id: u8) -> Result<usize, TableError> {
        self.tables.iter().position(|t| t.id == table_id).ok_or(TableError::UnknownTable(table_id))
    }

    pub fn table_by_name(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_write(&mut self, table_id: u8, key: MatchKey, action: EntryAction) -> Result<(), TableError> {
        let i = self.table_index(table_id)?;
        let t = &mut self.tables[i];
        if !t.allowed.contains(&action.kind()) {
            return Err(TableError::ActionNotAllowed(kind_name(action.kind())));
        }
        t.entries.insert(key, action)
    }

    pub fn table_read(&self, table_id: u8, key: &MatchKey) -> Result<Option<EntryAction>, TableError> {
        self.tables[self.table_index(table_id)?].entries.get(key).map(|o| o.copied())
    }

    pub fn table_delete(&mut self, table_id: u8, key: &MatchKey) -> Result<Option<EntryAction>, TableError> {
        let i = self.table_index(table_id)?;
        self.tables[i].entries.remove(key)
    }

    /// Forgets all control-plane and learned state.
    pub fn reset_state(&mut self) {
        let fresh = Self::new(&self.program.spec, self.device_id).expect("spec compiled before");
        *self = fresh;
    }

    fn field(&self, phv: &Phv, frame: &[u8], f: FieldId) -> Option<u64> {
        match self.program.fields[f] {
            FieldLoc::Header { hdr, bit_off, width } => {
                let off = phv.offsets.get(hdr).copied().flatten()?;
                Some(read_bits(frame, off * 8 + bit_off, width))
            }
            FieldLoc::Meta { slot, .. } => Some(phv.meta[slot]),
            FieldLoc::Reg(r) => Some(self.registers[r]),
        }
    }

    fn set_field(&mut self, phv: &mut Phv, frame: &mut [u8], f: FieldId, value: u64) {
        match self.program.fields[f] {
            FieldLoc::Header { hdr, bit_off, width } => {
                if let Some(off) = phv.offsets.get(hdr).copied().flatten() {
                    write_bits(frame, off * 8 + bit_off, width, value);
                }
            }
            FieldLoc::Meta { slot, width } => phv.meta[slot] = value & low_mask(width) as u64,
            FieldLoc::Reg(r) => self.registers[r] = value,
        }
    }

    fn build_key(&self, phv: &Phv, frame: &[u8], key: &[FieldId]) -> Option<u128> {
        let mut v = 0u128;
        for f in key {
            let w = self.program.fields[*f].width();
            v = (v << w) | self.field(phv, frame, *f)? as u128;
        }
        Some(v)
    }

    fn parse(&self, frame: &[u8]) -> Option<Phv> {
        let headers = &self.program.headers;
        let mut offsets = vec![None; headers.len()];
        let mut parse_order = Vec::new();
        let mut off = 0usize;
        let mut state = Some(0usize);
        while let Some(h) = state {
            let def = &headers[h];
            if offsets[h].is_some() || off + def.len > frame.len() {
                return None;
            }
            offsets[h] = Some(off);
            parse_order.push(h);
            state = match def.select {
                Some((bit_off, width)) => {
                    let v = read_bits(frame, off * 8 + bit_off, width);
                    def.transitions.iter().find(|(tv, _)| *tv == v).map(|(_, n)| *n).or(def.default_next)
                }
                None => def.default_next,
            };
            off += def.len;
        }
        Some(Phv { offsets, parse_order, payload_off: off, pushed: Vec::new(), meta: [0; META_FIELDS.len()] })
    }

    fn deparse(&self, frame: Vec<u8>, phv: &Phv) -> Vec<u8> {
        let emitted: Vec<usize> = self
            .program
            .deparser
            .iter()
            .copied()
            .filter(|h| phv.offsets[*h].is_some() || phv.pushed.iter().any(|(p, _)| p == h))
            .collect();
        if phv.pushed.is_empty() && emitted == phv.parse_order {
            return frame;
        }
        let extra: usize = phv.pushed.iter().map(|(_, b)| b.len()).sum();
        let mut out = Vec::with_capacity(frame.len() + extra);
        for h in emitted {
            if let Some(off) = phv.offsets[h] {
                out.extend_from_slice(&frame[off..off + self.program.headers[h].len]);
            } else if let Some((_, bytes)) = phv.pushed.iter().find(|(p, _)| *p == h) {
                out.extend_from_slice(bytes);
            }
        }
        out.extend_from_slice(&frame[phv.payload_off..]);
        out
    }

    /// Runs one packet through parser, stages and deparser. Only this
    /// instance's tables, registers and counters are touched.
    pub fn process_packet(&mut self, pkt: Packet, ctx: &PacketContext) -> Result<PipelineOutcome, PipelineFault> {
        self.counters.packets += 1;
        let Some(mut phv) = self.parse(&pkt.frame) else {
            self.counters.parse_errors += 1;
            self.counters.drops += 1;
            return Ok(PipelineOutcome::Drop(PipelineDrop::ParseError));
        };
        let ingress = pkt.rx_lane.0;
        phv.meta =
            [ingress as u64, self.device_id.0 as u64, ctx.ingress_ts, ctx.egress_ts, ctx.queue_bits, pkt.len() as u64];
        let mut frame = pkt.frame.clone();
        let mut decision: Option<Decision> = None;

        for ti in 0..self.tables.len() {
            if !self.tables[ti].apply {
                continue;
            }
            let hit = if self.tables[ti].key.is_empty() {
                None
            } else {
                self.build_key(&phv, &frame, &self.tables[ti].key)
                    .and_then(|k| self.tables[ti].entries.lookup(k).copied())
            };
            let action = match hit {
                Some(a) => {
                    self.tables[ti].hits += 1;
                    Action::Entry(a)
                }
                None => {
                    self.tables[ti].misses += 1;
                    self.program.defaults[ti].clone()
                }
            };
            if let Some(d) = self.execute(&action, &mut phv, &mut frame)? {
                decision = Some(d);
            }
        }

        let ports = match decision {
            Some(Decision::Port(p)) => 1u64 << p,
            Some(Decision::Ports(m)) => m & !(1u64 << ingress),
            Some(Decision::Drop) | None => 0,
        };
        let ports = ports & ((1u64 << LANE_COUNT) - 1);
        if ports == 0 {
            self.counters.drops += 1;
            return Ok(PipelineOutcome::Drop(PipelineDrop::Dropped));
        }
        let frame = self.deparse(frame, &phv);
        let vlan = parse_vlan(&frame);
        let mut out = Vec::new();
        for p in mask_to_ports(ports) {
            let mut copy = pkt.clone();
            copy.frame = frame.clone();
            copy.vlan = vlan;
            out.push((copy, EgressMeta { port: LaneId(p) }));
        }
        self.counters.emitted += out.len() as u64;
        Ok(PipelineOutcome::Emit(out))
    }

    fn execute(&mut self, action: &Action, phv: &mut Phv, frame: &mut [u8]) -> Result<Option<Decision>, PipelineFault> {
        Ok(match action {
            Action::Entry(EntryAction::Forward(p)) => Some(Decision::Port(*p)),
            Action::Entry(EntryAction::PortSet(m)) => Some(Decision::Ports(*m)),
            Action::Entry(EntryAction::Drop) => Some(Decision::Drop),
            Action::Entry(EntryAction::NoOp) => None,
            Action::Flood { members } => {
                let t = &self.tables[*members];
                let hit = self.build_key(phv, frame, &t.key).and_then(|k| t.entries.lookup(k).copied());
                match hit {
                    Some(EntryAction::PortSet(m)) => Some(Decision::Ports(m)),
                    Some(_) => {
                        return Err(PipelineFault::FloodMembers {
                            spec: self.program.spec.name.clone(),
                            table: t.name.clone(),
                        })
                    }
                    None => Some(Decision::Drop),
                }
            }
            Action::SetField(f, v) => {
                self.set_field(phv, frame, *f, *v);
                None
            }
            Action::AddToField(f, delta) => {
                if let Some(v) = self.field(phv, frame, *f) {
                    let w = self.program.fields[*f].width();
                    let nv = (v as i128 + *delta as i128).rem_euclid(1i128 << w) as u64;
                    self.set_field(phv, frame, *f, nv);
                }
                None
            }
            Action::Learn { table, key, value } => {
                let k = self.build_key(phv, frame, key);
                let port = self.field(phv, frame, *value);
                if let (Some(k), Some(port)) = (k, port) {
                    let t = &mut self.tables[*table];
                    if t.entries.insert(MatchKey::Exact(k), EntryAction::Forward(port as u8)).is_err() {
                        self.counters.learn_rejects += 1;
                    }
                }
                None
            }
            Action::PushHeader { header, after, fields } => {
                if phv.offsets[*after].is_some() {
                    let bits: u32 = fields.iter().map(|(w, _)| *w).sum();
                    let mut bytes = vec![0u8; bits as usize / 8];
                    let mut off = 0usize;
                    for (w, op) in fields {
                        let v = match op {
                            Operand::Const(c) => *c,
                            Operand::Field(f) => self.field(phv, frame, *f).unwrap_or(0),
                        };
                        write_bits(&mut bytes, off, *w, v & low_mask(*w) as u64);
                        off += *w as usize;
                    }
                    phv.pushed.push((*header, bytes));
                }
                None
            }
        })
    }

    /// Current fields a name resolves to; used by management drivers.
    pub fn has_field(&self, name: &str) -> bool {
        self.program.field_ids.contains_key(name)
    }
}

pub fn kind_name(k: EntryActionKind) -> &'static str {
    match k {
        EntryActionKind::Forward => "forward",
        EntryActionKind::Drop => "drop",
        EntryActionKind::NoOp => "no_op",
        EntryActionKind::PortSet => "port_set",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_access_round_trip() {
        let mut buf = [0u8; 6];
        write_bits(&mut buf, 3, 12, 0xabc);
        assert_eq!(read_bits(&buf, 3, 12), 0xabc);
        write_bits(&mut buf, 0, 3, 0b101);
        assert_eq!(read_bits(&buf, 0, 3), 0b101);
        assert_eq!(read_bits(&buf, 3, 12), 0xabc);
        write_bits(&mut buf, 0, 48, 0x0102_0304_0506);
        assert_eq!(buf, [1, 2, 3, 4, 5, 6]);
    }
}

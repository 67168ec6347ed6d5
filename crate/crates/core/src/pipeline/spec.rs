//! Declarative description of a virtual switch: parser graph, match-action
//! stages, deparser, resource footprint and rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum bytes a pipeline may add to a frame.
pub const HEADROOM_BYTES: usize = 64;
pub const DEFAULT_TABLE_CAPACITY: usize = 4096;
pub const DEFAULT_REGISTERS: usize = 8;
pub const MAX_KEY_BITS: u32 = 128;
pub const MAX_FIELD_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: String,
    pub rate_gbps: f64,
    pub latency_cycles: u32,
    #[serde(default = "default_registers")]
    pub registers: usize,
    pub footprint: ResourceFootprint,
    pub parser: Vec<ParserState>,
    pub stages: Vec<MatchActionStage>,
    pub deparser: Vec<String>,
}

fn default_registers() -> usize {
    DEFAULT_REGISTERS
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceFootprint {
    pub luts: u64,
    pub ffs: u64,
    pub brams: u64,
}

impl ResourceFootprint {
    pub const fn new(luts: u64, ffs: u64, brams: u64) -> Self {
        Self { luts, ffs, brams }
    }

    /// True when every resource of `self` is within `budget`.
    pub fn fits_within(&self, budget: &ResourceFootprint) -> bool {
        self.luts <= budget.luts && self.ffs <= budget.ffs && self.brams <= budget.brams
    }
}

impl std::ops::Add for ResourceFootprint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { luts: self.luts + o.luts, ffs: self.ffs + o.ffs, brams: self.brams + o.brams }
    }
}

impl std::iter::Sum for ResourceFootprint {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// One node of the parser graph. Fields are laid out back to back, MSB first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserState {
    pub name: String,
    /// Header length in bytes.
    pub length: usize,
    pub fields: Vec<FieldDef>,
    /// Field of this header whose value selects the next state.
    #[serde(default)]
    pub select: Option<String>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    /// Next state when no transition matches; `None` accepts.
    #[serde(default)]
    pub default_next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDef {
    pub name: String,
    pub width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub value: u64,
    pub next: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Ternary,
    Lpm,
}

/// Actions the control plane may install into a table's entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryActionKind {
    Forward,
    Drop,
    NoOp,
    PortSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchActionStage {
    pub name: String,
    pub table_id: u8,
    pub match_kind: MatchKind,
    /// Fields concatenated MSB-first into the lookup key. Empty means every
    /// packet misses and runs the default action.
    #[serde(default)]
    pub key: Vec<String>,
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_entry_actions")]
    pub actions: Vec<EntryActionKind>,
    #[serde(default)]
    pub entries: Vec<MatchEntry>,
    pub default_action: ActionSpec,
    /// Lookup-only tables (flood membership, for instance) are not walked.
    #[serde(default = "yes")]
    pub apply: bool,
}

fn default_capacity() -> usize {
    DEFAULT_TABLE_CAPACITY
}

fn default_entry_actions() -> Vec<EntryActionKind> {
    vec![EntryActionKind::Forward, EntryActionKind::Drop]
}

fn yes() -> bool {
    true
}

/// A preloaded entry. `key` holds one value per key field; `mask` (ternary)
/// likewise. `prefix_len` applies to the concatenated key (lpm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchEntry {
    pub key: Vec<u64>,
    #[serde(default)]
    pub mask: Option<Vec<u64>>,
    #[serde(default)]
    pub prefix_len: Option<u8>,
    #[serde(default)]
    pub priority: Option<u32>,
    pub action: ActionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSpec {
    Forward {
        port: u8,
    },
    PortSet {
        ports: Vec<u8>,
    },
    /// Copy to every port of the packet's VLAN except the ingress port. The
    /// VLAN's ports come from a `port_set` entry in the `members` table.
    Flood {
        members: u8,
    },
    Drop,
    SetField {
        field: String,
        value: u64,
    },
    AddToField {
        field: String,
        delta: i64,
    },
    /// Installs `key <- fields` into an exact table with a forward to the
    /// port held in `value`.
    Learn {
        table: u8,
        key: Vec<String>,
        value: String,
    },
    /// Inserts a header built from `fields` right after `after`, when that
    /// header is present.
    PushHeader {
        header: String,
        after: String,
        fields: Vec<RecordField>,
    },
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordField {
    pub width: u32,
    /// Source field; when absent the constant `value` is emitted.
    #[serde(default)]
    pub from: Option<String>,
    #[serde(default)]
    pub value: u64,
}

impl ActionSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ActionSpec::Forward { .. } => "forward",
            ActionSpec::PortSet { .. } => "port_set",
            ActionSpec::Flood { .. } => "flood",
            ActionSpec::Drop => "drop",
            ActionSpec::SetField { .. } => "set_field",
            ActionSpec::AddToField { .. } => "add_to_field",
            ActionSpec::Learn { .. } => "learn",
            ActionSpec::PushHeader { .. } => "push_header",
            ActionSpec::NoOp => "no_op",
        }
    }

    pub fn entry_kind(&self) -> Option<EntryActionKind> {
        match self {
            ActionSpec::Forward { .. } => Some(EntryActionKind::Forward),
            ActionSpec::Drop => Some(EntryActionKind::Drop),
            ActionSpec::NoOp => Some(EntryActionKind::NoOp),
            ActionSpec::PortSet { .. } => Some(EntryActionKind::PortSet),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("spec '{0}': {1}")]
    Invalid(String, String),
    #[error("spec document: {0}")]
    Parse(String),
}

impl PipelineSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline spec serializes")
    }

    pub fn stage(&self, name: &str) -> Option<&MatchActionStage> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn stage_by_id(&self, table_id: u8) -> Option<&MatchActionStage> {
        self.stages.iter().find(|s| s.table_id == table_id)
    }

    /// Width in bits of a named field, if it exists.
    pub fn field_width(&self, field: &str) -> Option<u32> {
        if let Some(w) = super::instance::meta_width(field) {
            return Some(w);
        }
        if field.starts_with("reg.") {
            return Some(64);
        }
        let (hdr, fname) = field.split_once('.')?;
        self.parser.iter().find(|p| p.name == hdr)?.fields.iter().find(|f| f.name == fname).map(|f| f.width)
    }

    pub fn key_widths(&self, stage: &MatchActionStage) -> Vec<u32> {
        stage.key.iter().map(|f| self.field_width(f).unwrap_or(0)).collect()
    }
}

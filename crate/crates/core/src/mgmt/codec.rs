use std::fmt;

use thiserror::Error;

use crate::types::MAX_SLOTS;

pub const FRAME_BITS: u32 = 146;
/// 146 bits right-aligned in 19 bytes; the top 6 bits are zero.
pub const FRAME_BYTES: usize = 19;

pub const TARGET_IPI: u8 = 62;
pub const TARGET_OPI: u8 = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    TableWrite = 1,
    TableRead = 2,
    RegWrite = 3,
    RegRead = 4,
    ReadReply = 5,
    Ack = 6,
    Nack = 7,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::TableWrite,
        Opcode::TableRead,
        Opcode::RegWrite,
        Opcode::RegRead,
        Opcode::ReadReply,
        Opcode::Ack,
        Opcode::Nack,
    ];

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get((c as usize).wrapping_sub(1)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Slot(u8),
    Ipi,
    Opi,
}

impl Target {
    pub fn code(self) -> u8 {
        match self {
            Target::Slot(s) => s,
            Target::Ipi => TARGET_IPI,
            Target::Opi => TARGET_OPI,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            TARGET_IPI => Some(Target::Ipi),
            TARGET_OPI => Some(Target::Opi),
            s if (s as usize) < MAX_SLOTS => Some(Target::Slot(s)),
            _ => None,
        }
    }

    /// Outbound channel carrying replies for this target.
    pub fn reply_channel(self) -> u8 {
        match self {
            Target::Slot(s) => s,
            Target::Ipi | Target::Opi => 0,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Slot(s) => write!(f, "vs{s}"),
            Target::Ipi => f.write_str("ipi"),
            Target::Opi => f.write_str("opi"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NackReason {
    NoDevice = 1,
    Rejected = 2,
    NotFound = 3,
    BadAddress = 4,
    Protocol = 5,
    TableFull = 6,
}

impl NackReason {
    pub fn from_code(c: u128) -> Option<Self> {
        Some(match c {
            1 => NackReason::NoDevice,
            2 => NackReason::Rejected,
            3 => NackReason::NotFound,
            4 => NackReason::BadAddress,
            5 => NackReason::Protocol,
            6 => NackReason::TableFull,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NackReason::NoDevice => "no_device",
            NackReason::Rejected => "rejected",
            NackReason::NotFound => "not_found",
            NackReason::BadAddress => "bad_address",
            NackReason::Protocol => "protocol",
            NackReason::TableFull => "table_full",
        }
    }
}

/// opcode 4 | target 6 | resource_id 8 | payload 128, MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlFrame {
    pub opcode: Opcode,
    pub target: Target,
    pub resource_id: u8,
    pub payload: u128,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CodecError {
    #[error("reserved opcode {0}")]
    ReservedOpcode(u8),
    #[error("reserved target {0}")]
    ReservedTarget(u8),
    #[error("padding bits set")]
    Padding,
}

impl ControlFrame {
    pub fn new(opcode: Opcode, target: Target, resource_id: u8, payload: u128) -> Self {
        Self { opcode, target, resource_id, payload }
    }

    pub fn ack(req: &ControlFrame) -> Self {
        Self::new(Opcode::Ack, req.target, req.resource_id, 0)
    }

    pub fn nack(req: &ControlFrame, reason: NackReason) -> Self {
        Self::new(Opcode::Nack, req.target, req.resource_id, reason as u128)
    }

    pub fn reply(req: &ControlFrame, payload: u128) -> Self {
        Self::new(Opcode::ReadReply, req.target, req.resource_id, payload)
    }

    pub fn nack_reason(&self) -> Option<NackReason> {
        (self.opcode == Opcode::Nack).then(|| NackReason::from_code(self.payload)).flatten()
    }

    /// The 18 header bits: opcode | target | resource_id.
    pub fn header(&self) -> u32 {
        ((self.opcode as u32) << 14) | ((self.target.code() as u32) << 8) | self.resource_id as u32
    }

    pub fn encode(&self) -> [u8; FRAME_BYTES] {
        let mut out = [0u8; FRAME_BYTES];
        out[..3].copy_from_slice(&self.header().to_be_bytes()[1..]);
        out[3..].copy_from_slice(&self.payload.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8; FRAME_BYTES]) -> Result<Self, CodecError> {
        let header = u32::from_be_bytes([0, bytes[0], bytes[1], bytes[2]]);
        if header >> 18 != 0 {
            return Err(CodecError::Padding);
        }
        let op = (header >> 14) as u8;
        let target = ((header >> 8) & 0x3f) as u8;
        let opcode = Opcode::from_code(op).ok_or(CodecError::ReservedOpcode(op))?;
        let target = Target::from_code(target).ok_or(CodecError::ReservedTarget(target))?;
        let payload = u128::from_be_bytes(bytes[3..].try_into().expect("16 payload bytes"));
        Ok(Self { opcode, target, resource_id: header as u8, payload })
    }
}

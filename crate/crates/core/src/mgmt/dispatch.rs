use super::codec::{ControlFrame, NackReason, Opcode, Target, FRAME_BYTES};
use super::schema::*;
use crate::pipeline::{TableError, VsInstance};
use crate::steering::{SteeringError, SteeringTables};
use crate::types::{DeviceId, LaneId};

/// What the management interface can reach inside the platform.
pub trait ControlPlane {
    fn steering(&self) -> &SteeringTables;
    fn steering_mut(&mut self) -> &mut SteeringTables;
    /// `None` for slots that are empty or reconfiguring.
    fn instance_mut(&mut self, slot: DeviceId) -> Option<&mut VsInstance>;
    /// Read-only counter registers of the IPI or OPI.
    fn interface_counters(&self, target: Target) -> Vec<u64>;
}

pub const IPI_COUNTERS: [&str; 7] =
    ["forwarded", "no_tag", "no_entry", "explicit_drop", "slot_unavailable", "slot_backpressure", "oversize"];
pub const OPI_COUNTERS: [&str; 4] = ["moved", "unauthorized", "no_entry", "explicit_drop"];

/// Decodes and dispatches a raw frame; undecodable frames get a protocol
/// NACK addressed to the IPI.
pub fn dispatch_bytes(bytes: &[u8; FRAME_BYTES], cp: &mut dyn ControlPlane) -> ControlFrame {
    match ControlFrame::decode(bytes) {
        Ok(f) => dispatch(&f, cp),
        Err(_) => ControlFrame::new(Opcode::Nack, Target::Ipi, bytes[2], NackReason::Protocol as u128),
    }
}

/// Applies one request and builds its reply. Requests take effect
/// atomically; a rejected write leaves all state unchanged.
pub fn dispatch(f: &ControlFrame, cp: &mut dyn ControlPlane) -> ControlFrame {
    let res = match f.target {
        Target::Ipi => ipi(f, cp),
        Target::Opi => opi(f, cp),
        Target::Slot(s) => slot(f, s, cp),
    };
    match res {
        Ok(Some(payload)) => ControlFrame::reply(f, payload),
        Ok(None) => ControlFrame::ack(f),
        Err(r) => ControlFrame::nack(f, r),
    }
}

type Outcome = Result<Option<u128>, NackReason>;

fn steering_err(e: SteeringError) -> NackReason {
    match e {
        SteeringError::NotFound => NackReason::NotFound,
        _ => NackReason::Rejected,
    }
}

fn counters(f: &ControlFrame, cp: &dyn ControlPlane) -> Outcome {
    match f.opcode {
        Opcode::RegRead => cp
            .interface_counters(f.target)
            .get(f.resource_id as usize)
            .map(|v| Some(*v as u128))
            .ok_or(NackReason::BadAddress),
        _ => Err(NackReason::Rejected),
    }
}

fn ipi(f: &ControlFrame, cp: &mut dyn ControlPlane) -> Outcome {
    match f.opcode {
        Opcode::RegRead | Opcode::RegWrite => return counters(f, cp),
        Opcode::TableWrite | Opcode::TableRead => {}
        _ => return Err(NackReason::Protocol),
    }
    if f.resource_id != 0 {
        return Err(NackReason::BadAddress);
    }
    if f.opcode == Opcode::TableRead {
        let t = cp.steering();
        if let Some(i) = index_of(f.payload) {
            let ((l, v), a) = t.ingress_entries().nth(i as usize).ok_or(NackReason::NotFound)?;
            return Ok(Some(IngressRecord::from_entry(l.0, v, a).encode()));
        }
        let r = IngressRecord::decode(f.payload);
        let a = t.ingress_lookup(LaneId(r.lane), r.vid).ok_or(NackReason::NotFound)?;
        return Ok(Some(IngressRecord::from_entry(r.lane, r.vid, a).encode()));
    }
    let r = IngressRecord::decode(f.payload);
    let t = cp.steering_mut();
    if r.action == ACT_DELETE {
        t.ingress_del(LaneId(r.lane), r.vid).map_err(steering_err)?;
    } else {
        let a = r.to_action().ok_or(NackReason::Protocol)?;
        t.ingress_add(LaneId(r.lane), r.vid, a).map_err(steering_err)?;
    }
    Ok(None)
}

fn opi(f: &ControlFrame, cp: &mut dyn ControlPlane) -> Outcome {
    match f.opcode {
        Opcode::RegRead | Opcode::RegWrite => return counters(f, cp),
        Opcode::TableWrite | Opcode::TableRead => {}
        _ => return Err(NackReason::Protocol),
    }
    if f.resource_id != 0 {
        return Err(NackReason::BadAddress);
    }
    if f.opcode == Opcode::TableRead {
        let t = cp.steering();
        if let Some(i) = index_of(f.payload) {
            let ((v, d), a) = t.egress_entries().nth(i as usize).ok_or(NackReason::NotFound)?;
            return Ok(Some(EgressRecord::from_entry(v, d, a).encode()));
        }
        let r = EgressRecord::decode(f.payload);
        let a = t.egress_lookup(r.vid, DeviceId(r.device)).ok_or(NackReason::NotFound)?;
        return Ok(Some(EgressRecord::from_entry(r.vid, DeviceId(r.device), a).encode()));
    }
    let r = EgressRecord::decode(f.payload);
    let t = cp.steering_mut();
    if r.action == ACT_DELETE {
        t.egress_del(r.vid, DeviceId(r.device)).map_err(steering_err)?;
    } else {
        let a = r.to_action().ok_or(NackReason::Protocol)?;
        t.egress_add(r.vid, DeviceId(r.device), a).map_err(steering_err)?;
    }
    Ok(None)
}

fn table_err(e: TableError) -> NackReason {
    match e {
        TableError::UnknownTable(_) => NackReason::BadAddress,
        TableError::TableFull(_) => NackReason::TableFull,
        _ => NackReason::Rejected,
    }
}

fn slot(f: &ControlFrame, s: u8, cp: &mut dyn ControlPlane) -> Outcome {
    if s as usize >= cp.steering().slot_count() {
        return Err(NackReason::NoDevice);
    }
    let vs = cp.instance_mut(DeviceId(s)).ok_or(NackReason::NoDevice)?;
    match f.opcode {
        Opcode::RegRead => {
            vs.registers.get(f.resource_id as usize).map(|v| Some(*v as u128)).ok_or(NackReason::BadAddress)
        }
        Opcode::RegWrite => {
            let r = vs.registers.get_mut(f.resource_id as usize).ok_or(NackReason::BadAddress)?;
            *r = f.payload as u64;
            Ok(None)
        }
        Opcode::TableRead | Opcode::TableWrite => {
            let schema = TableSchema::for_table(vs.spec(), f.resource_id).map_err(|e| match e {
                SchemaError::UnknownTable(_) => NackReason::BadAddress,
                SchemaError::TooWide(..) => NackReason::Rejected,
            })?;
            let ti = vs.table_index(f.resource_id).map_err(table_err)?;
            if f.opcode == Opcode::TableRead {
                if let Some(i) = index_of(f.payload) {
                    let entries = vs.tables[ti].entries.entries();
                    let (key, a) = entries.get(i as usize).ok_or(NackReason::NotFound)?;
                    let (action, param) = action_code(**a);
                    return Ok(Some(schema.encode(&TableRecord { action, param, key: *key })));
                }
                let rec = schema.decode(f.payload);
                let a = vs.table_read(f.resource_id, &rec.key).map_err(table_err)?.ok_or(NackReason::NotFound)?;
                let (action, param) = action_code(a);
                return Ok(Some(schema.encode(&TableRecord { action, param, ..rec })));
            }
            let rec = schema.decode(f.payload);
            if rec.action == ACT_DELETE {
                vs.table_delete(f.resource_id, &rec.key).map_err(table_err)?.ok_or(NackReason::NotFound)?;
            } else {
                let a = action_from_code(rec.action, rec.param).ok_or(NackReason::Protocol)?;
                vs.table_write(f.resource_id, rec.key, a).map_err(table_err)?;
            }
            Ok(None)
        }
        _ => Err(NackReason::Protocol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builtin_spec;
    use crate::steering::IngressAction;
    use std::collections::BTreeMap;

    struct Bench {
        steering: SteeringTables,
        slots: BTreeMap<u8, VsInstance>,
    }

    impl ControlPlane for Bench {
        fn steering(&self) -> &SteeringTables {
            &self.steering
        }
        fn steering_mut(&mut self) -> &mut SteeringTables {
            &mut self.steering
        }
        fn instance_mut(&mut self, slot: DeviceId) -> Option<&mut VsInstance> {
            self.slots.get_mut(&slot.0)
        }
        fn interface_counters(&self, t: Target) -> Vec<u64> {
            match t {
                Target::Ipi => vec![7; IPI_COUNTERS.len()],
                _ => vec![3; OPI_COUNTERS.len()],
            }
        }
    }

    fn bench() -> Bench {
        let mut slots = BTreeMap::new();
        slots.insert(0, VsInstance::new(&builtin_spec("l2_switch").unwrap(), DeviceId(0)).unwrap());
        slots.insert(5, VsInstance::new(&builtin_spec("router").unwrap(), DeviceId(5)).unwrap());
        Bench { steering: SteeringTables::new(26), slots }
    }

    fn ingress(op: Opcode, lane: u8, vid: u16, action: u8, device: u8) -> ControlFrame {
        ControlFrame::new(op, Target::Ipi, 0, IngressRecord { lane, vid, action, device }.encode())
    }

    #[test]
    fn ingress_write_then_read() {
        let mut b = bench();
        let r = dispatch(&ingress(Opcode::TableWrite, 3, 10, ACT_FORWARD, 5), &mut b);
        assert_eq!(r.opcode, Opcode::Ack);
        let r = dispatch(&ingress(Opcode::TableRead, 3, 10, 0, 0), &mut b);
        assert_eq!(r.opcode, Opcode::ReadReply);
        assert_eq!(IngressRecord::decode(r.payload).to_action(), Some(IngressAction::Forward(DeviceId(5))));
        assert_eq!(r.target.reply_channel(), 0);
    }

    #[test]
    fn duplicate_ingress_rejected() {
        let mut b = bench();
        dispatch(&ingress(Opcode::TableWrite, 3, 10, ACT_FORWARD, 5), &mut b);
        let before = b.steering.clone();
        let r = dispatch(&ingress(Opcode::TableWrite, 3, 10, ACT_FORWARD, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::Rejected));
        assert_eq!(b.steering, before);
    }

    #[test]
    fn empty_slot_is_no_device() {
        let mut b = bench();
        let r = dispatch(&ControlFrame::new(Opcode::RegRead, Target::Slot(3), 0, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::NoDevice));
        assert_eq!(r.target.reply_channel(), 3);
    }

    #[test]
    fn registers_and_counters() {
        let mut b = bench();
        let w = ControlFrame::new(Opcode::RegWrite, Target::Slot(5), 2, 99);
        assert_eq!(dispatch(&w, &mut b).opcode, Opcode::Ack);
        let r = dispatch(&ControlFrame::new(Opcode::RegRead, Target::Slot(5), 2, 0), &mut b);
        assert_eq!(r.payload, 99);
        let r = dispatch(&ControlFrame::new(Opcode::RegRead, Target::Ipi, 1, 0), &mut b);
        assert_eq!(r.payload, 7);
        let r = dispatch(&ControlFrame::new(Opcode::RegWrite, Target::Opi, 1, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::Rejected));
        let r = dispatch(&ControlFrame::new(Opcode::RegRead, Target::Opi, 40, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::BadAddress));
    }

    #[test]
    fn vs_table_write_read_delete() {
        let mut b = bench();
        let spec = builtin_spec("router").unwrap();
        let s = TableSchema::for_table(&spec, 0).unwrap();
        let rec = TableRecord {
            action: ACT_FORWARD,
            param: 2,
            key: crate::pipeline::MatchKey::Lpm { value: 0x0a01_0000, prefix_len: 16 },
        };
        let w = ControlFrame::new(Opcode::TableWrite, Target::Slot(5), 0, s.encode(&rec));
        assert_eq!(dispatch(&w, &mut b).opcode, Opcode::Ack);
        let q = TableRecord { action: 0, param: 0, ..rec };
        let r = dispatch(&ControlFrame::new(Opcode::TableRead, Target::Slot(5), 0, s.encode(&q)), &mut b);
        assert_eq!(s.decode(r.payload), rec);
        let r = dispatch(&ControlFrame::new(Opcode::TableRead, Target::Slot(5), 0, index_read(0)), &mut b);
        assert_eq!(s.decode(r.payload), rec);
        let r = dispatch(&ControlFrame::new(Opcode::TableRead, Target::Slot(5), 0, index_read(1)), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::NotFound));
        let d = ControlFrame::new(Opcode::TableWrite, Target::Slot(5), 0, s.encode(&q));
        assert_eq!(dispatch(&d, &mut b).opcode, Opcode::Ack);
        assert_eq!(dispatch(&d, &mut b).nack_reason(), Some(NackReason::NotFound));
        let r = dispatch(&ControlFrame::new(Opcode::TableRead, Target::Slot(5), 9, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::BadAddress));
    }

    #[test]
    fn undecodable_frame_gets_protocol_nack() {
        let mut b = bench();
        let mut bytes = ControlFrame::new(Opcode::Ack, Target::Ipi, 0, 0).encode();
        bytes[0] = 0b11;
        bytes[1] |= 0xc0;
        assert_eq!(dispatch_bytes(&bytes, &mut b).nack_reason(), Some(NackReason::Protocol));
        let r = dispatch(&ControlFrame::new(Opcode::Ack, Target::Ipi, 0, 0), &mut b);
        assert_eq!(r.nack_reason(), Some(NackReason::Protocol));
    }
}

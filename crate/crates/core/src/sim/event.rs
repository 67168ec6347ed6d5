use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::pipeline::{PipelineFault, PipelineOutcome};
use crate::types::{Packet, Picos};

/// A FIFO whose words are released by a credit return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FifoRef {
    Rx(u8),
    Tx(u8),
    VsIn(u8),
    VsOut(u8),
}

/// Components that poll their input FIFOs when woken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wake {
    Ipi,
    VsServer(u8),
    Opi,
    TxPhy(u8),
}

#[derive(Debug)]
pub enum EventKind {
    CreditReturn {
        fifo: FifoRef,
        words: u32,
        epoch: u64,
    },
    TxDone {
        lane: u8,
        pkt: Box<Packet>,
    },
    /// Next packet of a traffic profile.
    Generate {
        profile: usize,
    },
    PacketArrival {
        lane: u8,
        pkt: Box<Packet>,
    },
    PipelineComplete {
        slot: u8,
        generation: u64,
        ticket: u64,
        outcome: Result<PipelineOutcome, PipelineFault>,
    },
    ReconfigDone {
        slot: u8,
        generation: u64,
    },
    FifoService(Wake),
    ControlFrame {
        command: String,
    },
    Reconfig {
        slot: u8,
        spec: Option<String>,
    },
    MeasurementTick,
    EndOfRun,
}

impl EventKind {
    /// Rank among events at the same instant: state updates first, then
    /// component wakes, then control, then measurement.
    pub fn class(&self) -> u8 {
        match self {
            EventKind::CreditReturn { .. } => 0,
            EventKind::TxDone { .. } => 1,
            EventKind::Generate { .. } | EventKind::PacketArrival { .. } => 2,
            EventKind::PipelineComplete { .. } => 3,
            EventKind::ReconfigDone { .. } => 4,
            EventKind::FifoService(_) => 5,
            EventKind::ControlFrame { .. } | EventKind::Reconfig { .. } => 6,
            EventKind::MeasurementTick => 7,
            EventKind::EndOfRun => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::CreditReturn { .. } => "credit_return",
            EventKind::TxDone { .. } => "tx_done",
            EventKind::Generate { .. } => "generate",
            EventKind::PacketArrival { .. } => "packet_arrival",
            EventKind::PipelineComplete { .. } => "pipeline_complete",
            EventKind::ReconfigDone { .. } => "reconfig_done",
            EventKind::FifoService(_) => "fifo_service",
            EventKind::ControlFrame { .. } => "control_frame",
            EventKind::Reconfig { .. } => "reconfig",
            EventKind::MeasurementTick => "measurement_tick",
            EventKind::EndOfRun => "end_of_run",
        }
    }
}

#[derive(Debug)]
pub struct Event {
    pub time: Picos,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (Picos, u8, u64) {
        (self.time, self.kind.class(), self.sequence)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed so that `BinaryHeap` pops the earliest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Pending events ordered by (time, class, sequence). Sequence numbers are
/// assigned at insertion, so the order is total and reproducible.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    wakes: BTreeSet<(Picos, Wake)>,
}

impl EventQueue {
    pub fn push(&mut self, time: Picos, kind: EventKind) {
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, sequence, kind });
    }

    /// At most one pending wake per (time, component).
    pub fn wake(&mut self, time: Picos, w: Wake) {
        if self.wakes.insert((time, w)) {
            self.push(time, EventKind::FifoService(w));
        }
    }

    pub fn peek_time(&self) -> Option<Picos> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        let e = self.heap.pop()?;
        if let EventKind::FifoService(w) = e.kind {
            self.wakes.remove(&(e.time, w));
        }
        Some(e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_time_class_sequence() {
        let mut q = EventQueue::default();
        q.push(5, EventKind::EndOfRun);
        q.wake(5, Wake::Ipi);
        q.push(5, EventKind::CreditReturn { fifo: FifoRef::Rx(0), words: 1, epoch: 0 });
        q.push(1, EventKind::MeasurementTick);
        q.wake(5, Wake::Ipi);
        let names: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind.name()).collect();
        assert_eq!(names, ["measurement_tick", "credit_return", "fifo_service", "end_of_run"]);
    }
}

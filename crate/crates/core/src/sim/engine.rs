//! The discrete-event engine: PHY lanes, RX FIFOs, IPI, vS slots, OPI, TX
//! FIFOs and back out. Single-threaded; all state lives here.

use std::collections::{BTreeMap, VecDeque};

use super::event::{EventKind, EventQueue, FifoRef, Wake};
use super::metrics::{Counters, FifoReport, FlowKey, Metrics};
use super::scenario::{Scenario, ScenarioError};
use super::timing::*;
use super::traffic::Generator;
use crate::estimator::{fpga_throughput, platform_bottleneck, LayerRates};
use crate::fabric::{inventory_roles, FifoRole, FifoState, LANE_FIFO_DEPTH, VS_FIFO_DEPTH};
use crate::mgmt::cli_line;
use crate::pipeline::{PacketContext, PipelineDrop, PipelineOutcome, PipelineSpec};
use crate::reconfig::{ReconfigMode, ReconfigReport, SlotArray};
use crate::steering::{DropReason, OpiArbiter, RoundRobin, SlotHead, SteeringTables};
use crate::types::{
    format_duration, ClockDomain, DeviceId, LaneId, Packet, Picos, Rate, LANE_COUNT, PHYS_LANES, VRX_LANE, VTX_LANE,
};

/// A packet in a FIFO, readable from `visible_at`.
#[derive(Debug)]
struct Queued {
    pkt: Packet,
    words: u32,
    visible_at: Picos,
    /// Requested egress lane, for vS output FIFOs.
    port: LaneId,
}

#[derive(Debug)]
struct LaneState {
    rx: FifoState,
    rx_q: VecDeque<Queued>,
    /// End of the last reception on this lane.
    rx_gate: Option<Picos>,
    tx: FifoState,
    tx_q: VecDeque<Queued>,
    tx_busy_until: Picos,
    /// The OPI's stream into this lane's TX FIFO.
    opi_busy_until: Picos,
}

#[derive(Debug)]
struct SlotQueues {
    vs_in: FifoState,
    in_q: VecDeque<Queued>,
    vs_out: FifoState,
    out_q: VecDeque<Queued>,
    /// Pipeline outputs waiting for room in `vs_out`; the server stalls
    /// while any are held.
    pending_out: VecDeque<(Packet, LaneId)>,
    busy_until: Picos,
    /// Packets inside the pipeline, by ticket.
    in_pipeline: BTreeMap<u64, FlowKey>,
    /// Bumped when the FIFOs are cleared; older credits are void.
    epoch: u64,
}

impl SlotQueues {
    fn new() -> Self {
        Self {
            vs_in: FifoState::new(VS_FIFO_DEPTH),
            in_q: VecDeque::new(),
            vs_out: FifoState::new(VS_FIFO_DEPTH),
            out_q: VecDeque::new(),
            pending_out: VecDeque::new(),
            busy_until: 0,
            in_pipeline: BTreeMap::new(),
            epoch: 0,
        }
    }
}

/// One per-packet observation, kept when tracing is on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceRecord {
    SlotEntry { time: Picos, slot: u8, lane: u8, vid: u16, id: u64 },
    Delivered { time: Picos, lane: u8, slot: Option<u8>, id: u64, frame: Vec<u8>, hop: Option<(Picos, Picos)> },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Metrics,
    pub event_log: Option<Vec<String>>,
    pub trace: Vec<TraceRecord>,
}

pub struct Engine {
    pub(super) sc: Scenario,
    pub(super) now: Picos,
    pub(super) queue: EventQueue,
    pub(super) steering: SteeringTables,
    pub(super) slots: SlotArray,
    lanes: Vec<LaneState>,
    vs: Vec<SlotQueues>,
    ipi_rr: RoundRobin,
    ipi_busy_until: Picos,
    opi: OpiArbiter,
    gens: Vec<Generator>,
    next_id: u64,
    next_ticket: u64,
    pub(super) counters: Counters,
    at_warmup: Option<Counters>,
    at_end: Option<Counters>,
    latency: Vec<Vec<Picos>>,
    trace: Vec<TraceRecord>,
    hops: BTreeMap<u64, (Picos, Picos)>,
    log: Option<Vec<String>>,
    pub(super) control_log: Vec<String>,
    /// Inbound management channel is busy until this time.
    pub(super) chan_free: Picos,
    pub(super) in_event: bool,
    pub(super) events: u64,
}

impl Engine {
    /// Builds the platform at time zero: deployments, steering entries and
    /// setup commands. Every failure is reported.
    pub fn new(sc: Scenario) -> Result<Self, ScenarioError> {
        sc.validate()?;
        let mut errors = Vec::new();
        let mut slots = SlotArray::new(sc.slots, sc.policy.clone(), sc.capacity);
        for (slot, name) in &sc.deploy {
            if let Err(e) = slots.deploy_initial(DeviceId(*slot), &sc.specs[name]) {
                errors.push(format!("deploy {name} to slot {slot}: {e}"));
            }
        }
        let mut steering = SteeringTables::new(sc.slots);
        for (lane, vid, a) in &sc.ingress {
            if let Err(e) = steering.ingress_add(LaneId(*lane), *vid, *a) {
                errors.push(format!("ingress lane {lane} vid {vid}: {e}"));
            }
        }
        for (vid, slot, a) in &sc.egress {
            if let Err(e) = steering.egress_add(*vid, DeviceId(*slot), *a) {
                errors.push(format!("egress vid {vid} slot {slot}: {e}"));
            }
        }
        let lanes = (0..LANE_COUNT)
            .map(|_| LaneState {
                rx: FifoState::new(LANE_FIFO_DEPTH),
                rx_q: VecDeque::new(),
                rx_gate: None,
                tx: FifoState::new(LANE_FIFO_DEPTH),
                tx_q: VecDeque::new(),
                tx_busy_until: 0,
                opi_busy_until: 0,
            })
            .collect();
        let gens = sc.traffic.iter().enumerate().map(|(i, p)| Generator::new(sc.seed, i, p)).collect();
        let mut e = Self {
            now: 0,
            queue: EventQueue::default(),
            steering,
            slots,
            lanes,
            vs: (0..sc.slots).map(|_| SlotQueues::new()).collect(),
            ipi_rr: RoundRobin::default(),
            ipi_busy_until: 0,
            opi: OpiArbiter::default(),
            gens,
            next_id: 0,
            next_ticket: 0,
            counters: Counters::new(sc.slots),
            at_warmup: None,
            at_end: None,
            latency: vec![Vec::new(); sc.slots],
            trace: Vec::new(),
            hops: BTreeMap::new(),
            log: sc.log_events.then(Vec::new),
            control_log: Vec::new(),
            chan_free: 0,
            in_event: false,
            events: 0,
            sc,
        };
        for cmd in e.sc.setup.clone() {
            if let Some(reply) = cli_line(&cmd, &mut e) {
                if reply != "ok" {
                    errors.push(format!("setup '{cmd}': {reply}"));
                }
            }
        }
        e.chan_free = 0;
        if !errors.is_empty() {
            return Err(ScenarioError::Invalid(errors));
        }
        for (i, p) in e.sc.traffic.iter().enumerate() {
            if p.start < e.sc.duration {
                e.queue.push(p.start, EventKind::Generate { profile: i });
            }
        }
        for (at, cmd) in e.sc.control.clone() {
            e.queue.push(at, EventKind::ControlFrame { command: cmd });
        }
        for r in e.sc.reconfig.clone() {
            e.queue.push(r.at, EventKind::Reconfig { slot: r.slot, spec: r.spec });
        }
        e.queue.push(e.sc.warmup(), EventKind::MeasurementTick);
        e.queue.push(e.sc.duration, EventKind::EndOfRun);
        Ok(e)
    }

    pub fn now(&self) -> Picos {
        self.now
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn steering(&self) -> &SteeringTables {
        &self.steering
    }

    pub fn slots(&self) -> &SlotArray {
        &self.slots
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Occupied words in a slot's input and output FIFOs.
    pub fn vs_occupancy(&self, slot: u8) -> (u32, u32) {
        let q = &self.vs[slot as usize];
        (q.vs_in.occupied_words(), q.vs_out.occupied_words())
    }

    /// Runs to completion: past the end of the run until every packet has
    /// been delivered or dropped.
    pub fn run(mut self) -> RunResult {
        self.run_until(Picos::MAX);
        self.finish()
    }

    /// Processes every event at or before `t`, then parks the clock at `t`.
    pub fn run_until(&mut self, t: Picos) {
        while self.queue.peek_time().is_some_and(|et| et <= t) {
            let ev = self.queue.pop().expect("peeked");
            self.now = ev.time;
            self.events += 1;
            if let Some(log) = &mut self.log {
                log.push(format!("{} {} {}", ev.time, ev.sequence, ev.kind.name()));
            }
            self.handle(ev.kind);
        }
        if t != Picos::MAX {
            self.now = self.now.max(t);
        }
    }

    pub fn finish(self) -> RunResult {
        let deployed: Vec<PipelineSpec> = self.slots.deployments().into_values().collect();
        let rates = LayerRates { phy_lanes: self.sc.lanes as u32, ..LayerRates::default() };
        let mut fifos = Vec::new();
        for role in inventory_roles(self.sc.slots, PHYS_LANES, 2).expect("validated sizes") {
            let f = match role {
                FifoRole::VsIn(s) => &self.vs[s as usize].vs_in,
                FifoRole::VsOut(s) => &self.vs[s as usize].vs_out,
                FifoRole::Rx(l) => &self.lanes[l as usize].rx,
                FifoRole::Tx(l) => &self.lanes[l as usize].tx,
            };
            fifos.push(FifoReport {
                id: role.label(),
                depth: f.depth(),
                occupied: f.occupied_words(),
                peak: f.peak_occupancy,
                accepted_words: f.accepted_words,
                drops: f.drops,
            });
        }
        let at_end = self.at_end.unwrap_or_else(|| self.counters.clone());
        let at_warmup = self.at_warmup.unwrap_or_else(|| Counters::new(self.sc.slots));
        let metrics = Metrics {
            window: (self.sc.warmup(), self.sc.duration),
            totals: self.counters,
            at_warmup,
            at_end,
            fifos,
            latency: self.latency,
            slot_specs: (0..self.sc.slots)
                .map(|i| self.slots.instance(DeviceId(i as u8)).map(|x| x.spec().name.clone()))
                .collect(),
            active_lanes: self.sc.lanes,
            estimate: platform_bottleneck(&rates, &deployed),
            estimate_layers: [rates.phy_total(), rates.asic_total(), fpga_throughput(&deployed)],
            control_log: self.control_log,
            events: self.events,
        };
        RunResult { metrics, event_log: self.log, trace: self.trace }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::CreditReturn { fifo, words, epoch } => self.on_credit(fifo, words, epoch),
            EventKind::TxDone { lane, pkt } => self.on_tx_done(lane, *pkt),
            EventKind::Generate { profile } => self.on_generate(profile),
            EventKind::PacketArrival { lane, pkt } => self.arrive(lane, *pkt),
            EventKind::PipelineComplete { slot, generation, ticket, outcome } => {
                self.on_pipeline_complete(slot, generation, ticket, outcome)
            }
            EventKind::ReconfigDone { slot, generation } => {
                if self.slots.complete(DeviceId(slot), generation) {
                    self.queue.wake(self.now, Wake::VsServer(slot));
                }
            }
            EventKind::FifoService(w) => match w {
                Wake::Ipi => self.ipi_service(),
                Wake::VsServer(s) => self.vs_service(s),
                Wake::Opi => self.opi_service(),
                Wake::TxPhy(l) => self.tx_service(l),
            },
            EventKind::ControlFrame { command } => {
                if self.chan_free > self.now {
                    self.queue.push(self.chan_free, EventKind::ControlFrame { command });
                    return;
                }
                self.in_event = true;
                let reply = cli_line(&command, self).unwrap_or_default();
                self.in_event = false;
                self.control_log.push(format!("{} > {command}\n{reply}", format_duration(self.now)));
            }
            EventKind::Reconfig { slot, spec } => {
                let msg = match self.reconfigure(slot, spec.as_deref()) {
                    Ok(r) => format!("reconfig slot {slot}: busy until {}", format_duration(r.done_at)),
                    Err(e) => format!("reconfig slot {slot}: error: {e}"),
                };
                self.control_log.push(format!("{} {msg}", format_duration(self.now)));
            }
            EventKind::MeasurementTick => self.at_warmup = Some(self.counters.clone()),
            EventKind::EndOfRun => self.at_end = Some(self.counters.clone()),
        }
    }

    fn flow(pkt: &Packet) -> FlowKey {
        (pkt.origin.0 .0, pkt.origin.1)
    }

    fn count_drop(&mut self, flow: FlowKey, r: DropReason, lane: Option<u8>, slot: Option<u8>) {
        let c = &mut self.counters;
        c.drops[r as usize] += 1;
        c.flows.entry(flow).or_default().drops[r as usize] += 1;
        if let Some(l) = lane {
            c.lanes[l as usize].drops[r as usize] += 1;
        }
        if let Some(s) = slot {
            c.slots[s as usize].drops[r as usize] += 1;
        }
    }

    fn credit(&mut self, at: Picos, fifo: FifoRef, words: u32) {
        let epoch = match fifo {
            FifoRef::VsIn(s) | FifoRef::VsOut(s) => self.vs[s as usize].epoch,
            _ => 0,
        };
        self.queue.push(at, EventKind::CreditReturn { fifo, words, epoch });
    }

    fn on_credit(&mut self, fifo: FifoRef, words: u32, epoch: u64) {
        match fifo {
            FifoRef::Rx(l) => {
                self.lanes[l as usize].rx.dequeue(words);
            }
            FifoRef::Tx(l) => {
                self.lanes[l as usize].tx.dequeue(words);
                self.queue.wake(self.now, Wake::Opi);
            }
            FifoRef::VsIn(s) => {
                let q = &mut self.vs[s as usize];
                if q.epoch == epoch {
                    q.vs_in.dequeue(words);
                }
            }
            FifoRef::VsOut(s) => {
                let q = &mut self.vs[s as usize];
                if q.epoch == epoch {
                    q.vs_out.dequeue(words);
                    self.queue.wake(self.now, Wake::VsServer(s));
                }
            }
        }
    }

    fn on_generate(&mut self, profile: usize) {
        let id = self.next_id;
        self.next_id += 1;
        let p = &self.sc.traffic[profile];
        let (mut pkt, gap) = self.gens[profile].next(p, id, self.now);
        let lane = p.lane;
        if self.now + gap < self.sc.duration {
            self.queue.push(self.now + gap, EventKind::Generate { profile });
        }
        pkt.origin_bits = pkt.wire_bits();
        let c = &mut self.counters;
        c.injected.add(pkt.origin_bits);
        c.flows.entry(Self::flow(&pkt)).or_default().injected.add(pkt.origin_bits);
        let at = self.rx_gate(lane, &pkt);
        pkt.arrival_time = at;
        self.schedule_arrival(lane, pkt, at);
    }

    /// Receptions on one lane never overlap: a packet finishes arriving no
    /// sooner than one serialization after the previous one.
    fn rx_gate(&mut self, lane: u8, pkt: &Packet) -> Picos {
        let ser = phy_rate().serialization(pkt.wire_bits());
        let l = &mut self.lanes[lane as usize];
        let at = l.rx_gate.map_or(self.now, |g| self.now.max(g + ser));
        l.rx_gate = Some(at);
        at
    }

    fn schedule_arrival(&mut self, lane: u8, pkt: Packet, at: Picos) {
        if at == self.now {
            self.arrive(lane, pkt);
        } else {
            self.queue.push(at, EventKind::PacketArrival { lane, pkt: Box::new(pkt) });
        }
    }

    fn arrive(&mut self, lane: u8, pkt: Packet) {
        let flow = Self::flow(&pkt);
        let words = lane_words(pkt.len());
        let l = &mut self.lanes[lane as usize];
        if words > l.rx.depth() {
            l.rx.record_drop();
            return self.count_drop(flow, DropReason::Oversize, Some(lane), None);
        }
        if !l.rx.enqueue(words) {
            l.rx.record_drop();
            return self.count_drop(flow, DropReason::RxOverflow, Some(lane), None);
        }
        let visible_at = self.now + asic_cdc();
        self.counters.lanes[lane as usize].rx.add(pkt.origin_bits);
        l.rx_q.push_back(Queued { pkt, words, visible_at, port: LaneId(lane) });
        self.queue.wake(visible_at, Wake::Ipi);
    }

    fn ipi_service(&mut self) {
        if self.now < self.ipi_busy_until {
            return;
        }
        let now = self.now;
        let lanes = &self.lanes;
        let ready = |l: usize| lanes[l].rx_q.front().is_some_and(|q| q.visible_at <= now);
        let Some(lane) = self.ipi_rr.pick(VRX_LANE as usize + 1, ready) else { return };
        let Queued { mut pkt, words, .. } = self.lanes[lane].rx_q.pop_front().expect("ready head");
        let end = now + ipi_rate().serialization(pkt.wire_bits());
        self.credit(end + asic_cdc(), FifoRef::Rx(lane as u8), words);
        self.ipi_busy_until = end;
        self.queue.wake(end, Wake::Ipi);

        let flow = Self::flow(&pkt);
        let slot = match self.steering.ipi_classify(&mut pkt) {
            Ok(d) => d,
            Err(r) => {
                self.counters.ipi[ipi_counter(r)] += 1;
                return self.count_drop(flow, r, Some(lane as u8), None);
            }
        };
        let s = slot.0;
        let reject = if !self.slots.is_active(slot) {
            Some(DropReason::SlotUnavailable)
        } else {
            let words = vs_words(pkt.len());
            let q = &mut self.vs[s as usize];
            if words > q.vs_in.depth() {
                Some(DropReason::Oversize)
            } else if !q.vs_in.enqueue(words) {
                q.vs_in.record_drop();
                Some(DropReason::SlotBackpressure)
            } else {
                let visible_at = end + fpga_cdc();
                if self.sc.record_trace {
                    let vid = pkt.vlan.map_or(0, |v| v.vid);
                    self.trace.push(TraceRecord::SlotEntry { time: now, slot: s, lane: lane as u8, vid, id: pkt.id });
                }
                q.in_q.push_back(Queued { pkt, words, visible_at, port: LaneId(lane as u8) });
                self.counters.slots[s as usize].received += 1;
                self.counters.ipi[0] += 1;
                self.queue.wake(visible_at, Wake::VsServer(s));
                None
            }
        };
        if let Some(r) = reject {
            self.counters.ipi[ipi_counter(r)] += 1;
            self.count_drop(flow, r, Some(lane as u8), Some(s));
        }
    }

    fn vs_service(&mut self, s: u8) {
        let d = DeviceId(s);
        if !self.slots.is_active(d) {
            return;
        }
        self.flush_pending(s);
        let now = self.now;
        let q = &mut self.vs[s as usize];
        if !q.pending_out.is_empty() || now < q.busy_until {
            return;
        }
        if !q.in_q.front().is_some_and(|h| h.visible_at <= now) {
            return;
        }
        let Queued { pkt, words, .. } = q.in_q.pop_front().expect("visible head");
        let queue_bits: u64 = q.in_q.iter().map(|x| x.pkt.bits()).sum();
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        q.in_pipeline.insert(ticket, Self::flow(&pkt));
        self.credit(now + asic_cdc(), FifoRef::VsIn(s), words);

        let factor = self.slots.rate_factor(d);
        let generation = self.slots.generation(d);
        let inst = self.slots.instance_mut(d).expect("active slot");
        let spec = inst.spec();
        let service = Rate::from_gbps(spec.rate_gbps).scaled(factor).serialization(pkt.origin_bits);
        let complete = now + service + ClockDomain::fpga().cycles(spec.latency_cycles as u64);
        if self.sc.record_trace {
            self.hops.insert(pkt.id, (now, complete));
        }
        let ctx = PacketContext { ingress_ts: now, egress_ts: complete, queue_bits };
        let outcome = inst.process_packet(pkt, &ctx);
        self.counters.slots[s as usize].processed += 1;
        self.queue.push(complete, EventKind::PipelineComplete { slot: s, generation, ticket, outcome });
        self.vs[s as usize].busy_until = now + service;
        self.queue.wake(now + service, Wake::VsServer(s));
    }

    fn on_pipeline_complete(
        &mut self,
        s: u8,
        generation: u64,
        ticket: u64,
        outcome: Result<PipelineOutcome, crate::pipeline::PipelineFault>,
    ) {
        if self.slots.generation(DeviceId(s)) != generation {
            return;
        }
        let Some(flow) = self.vs[s as usize].in_pipeline.remove(&ticket) else { return };
        match outcome {
            Ok(PipelineOutcome::Emit(outs)) => {
                let extra = outs.len() as u64 - 1;
                self.counters.replicated += extra;
                self.counters.flows.entry(flow).or_default().replicated += extra;
                self.counters.slots[s as usize].emitted += outs.len() as u64;
                for (mut p, meta) in outs {
                    p.device_id = Some(DeviceId(s));
                    self.vs[s as usize].pending_out.push_back((p, meta.port));
                }
            }
            Ok(PipelineOutcome::Drop(PipelineDrop::ParseError)) => {
                self.count_drop(flow, DropReason::ParseError, None, Some(s))
            }
            Ok(PipelineOutcome::Drop(PipelineDrop::Dropped)) | Err(_) => {
                self.count_drop(flow, DropReason::PipelineDrop, None, Some(s))
            }
        }
        self.flush_pending(s);
        self.queue.wake(self.now, Wake::VsServer(s));
    }

    fn flush_pending(&mut self, s: u8) {
        let visible_at = self.now + asic_cdc();
        loop {
            let q = &mut self.vs[s as usize];
            let Some((p, _)) = q.pending_out.front() else { break };
            let words = vs_words(p.len());
            if words > q.vs_out.depth() {
                let (p, _) = q.pending_out.pop_front().expect("front");
                q.vs_out.record_drop();
                self.count_drop(Self::flow(&p), DropReason::Oversize, None, Some(s));
                continue;
            }
            if !q.vs_out.enqueue(words) {
                break;
            }
            let (pkt, port) = q.pending_out.pop_front().expect("front");
            q.out_q.push_back(Queued { pkt, words, visible_at, port });
            self.queue.wake(visible_at, Wake::Opi);
        }
    }

    // The body borrows `self` mutably, so the slot index loop stays.
    #[allow(clippy::needless_range_loop)]
    fn opi_service(&mut self) {
        let now = self.now;
        let mut heads = vec![None; self.vs.len()];
        for s in 0..self.vs.len() {
            while let Some(h) = self.vs[s].out_q.front().filter(|h| h.visible_at <= now) {
                match self.steering.opi_classify(&h.pkt, h.port) {
                    Ok(lane) => {
                        heads[s] = Some(SlotHead { target: lane, words: lane_words(h.pkt.len()) });
                        break;
                    }
                    Err(r) => {
                        let q = self.vs[s].out_q.pop_front().expect("head");
                        self.credit(now + fpga_cdc(), FifoRef::VsOut(s as u8), q.words);
                        self.counters.opi[opi_counter(r)] += 1;
                        self.count_drop(Self::flow(&q.pkt), r, None, Some(s as u8));
                    }
                }
            }
        }
        let idle: Vec<bool> = self.lanes.iter().map(|l| l.opi_busy_until <= now).collect();
        let free: Vec<u32> = self.lanes.iter().map(|l| l.tx.free_words()).collect();
        let moves = self.opi.arbitrate(&heads, &free, &idle);
        for m in &moves {
            let q = self.vs[m.slot].out_q.pop_front().expect("granted head");
            let end = now + opi_move(q.pkt.len());
            self.credit(end + fpga_cdc(), FifoRef::VsOut(m.slot as u8), q.words);
            let words = lane_words(q.pkt.len());
            let lane = &mut self.lanes[m.lane.index()];
            let accepted = lane.tx.enqueue(words);
            debug_assert!(accepted, "arbiter checked TX space");
            lane.tx_q.push_back(Queued { pkt: q.pkt, words, visible_at: end + asic_cdc(), port: m.lane });
            lane.opi_busy_until = end;
            self.counters.opi[0] += 1;
            self.queue.wake(end + asic_cdc(), Wake::TxPhy(m.lane.0));
            self.queue.wake(end, Wake::Opi);
        }
        if !moves.is_empty() {
            self.queue.wake(now, Wake::Opi);
        }
    }

    fn tx_service(&mut self, lane: u8) {
        let now = self.now;
        let l = &mut self.lanes[lane as usize];
        if now < l.tx_busy_until || !l.tx_q.front().is_some_and(|h| h.visible_at <= now) {
            return;
        }
        let q = l.tx_q.pop_front().expect("visible head");
        let end = now + phy_rate().serialization(q.pkt.wire_bits());
        l.tx_busy_until = end;
        self.credit(now + asic_cdc(), FifoRef::Tx(lane), q.words);
        self.queue.push(end, EventKind::TxDone { lane, pkt: Box::new(q.pkt) });
        self.queue.wake(end, Wake::TxPhy(lane));
    }

    fn on_tx_done(&mut self, lane: u8, mut pkt: Packet) {
        let flow = Self::flow(&pkt);
        if lane == VTX_LANE {
            pkt.loop_count += 1;
            if pkt.loop_count > self.sc.loop_limit {
                return self.count_drop(flow, DropReason::LoopLimit, Some(lane), pkt.device_id.map(|d| d.0));
            }
            pkt.rx_lane = LaneId(VRX_LANE);
            pkt.device_id = None;
            pkt.vlan = None;
            let at = self.rx_gate(VRX_LANE, &pkt);
            return self.schedule_arrival(VRX_LANE, pkt, at);
        }
        let slot = pkt.device_id.map(|d| d.0);
        let c = &mut self.counters;
        c.delivered.add(pkt.origin_bits);
        c.flows.entry(flow).or_default().delivered.add(pkt.origin_bits);
        let tx = &mut c.lanes[lane as usize].tx;
        tx.packets += 1;
        tx.bits += pkt.wire_bits();
        if let Some(s) = slot {
            c.slots[s as usize].delivered.add(pkt.origin_bits);
            self.latency[s as usize].push(self.now - pkt.arrival_time);
        }
        if self.sc.record_trace {
            let hop = self.hops.get(&pkt.id).copied();
            self.trace.push(TraceRecord::Delivered { time: self.now, lane, slot, id: pkt.id, frame: pkt.frame, hop });
        }
    }

    /// Deploys (`Some`) or empties one slot through the reconfiguration
    /// manager. Steering tables are kept.
    pub(super) fn reconfigure(&mut self, slot: u8, spec: Option<&str>) -> Result<ReconfigReport, String> {
        let d = DeviceId(slot);
        let spec = match spec {
            Some(n) => Some(self.sc.specs.get(n).ok_or_else(|| format!("unknown spec '{n}'"))?.clone()),
            None => None,
        };
        let report = match self.slots.policy.mode {
            ReconfigMode::Partial => self.slots.partial_reconfigure(self.now, d, spec.as_ref()),
            ReconfigMode::Full => {
                let mut dep = self.slots.deployments();
                match spec {
                    Some(s) => dep.insert(d, s),
                    None => dep.remove(&d),
                };
                self.slots.full_reconfigure(self.now, &dep)
            }
        }
        .map_err(|e| e.to_string())?;
        for s in &report.slots {
            self.clear_slot(s.0);
            let generation = self.slots.generation(*s);
            self.queue.push(report.done_at, EventKind::ReconfigDone { slot: s.0, generation });
        }
        Ok(report)
    }

    /// Drops everything a slot holds and voids its outstanding credits.
    fn clear_slot(&mut self, s: u8) {
        let q = &mut self.vs[s as usize];
        let mut lost: Vec<FlowKey> = q.in_q.drain(..).map(|x| Self::flow(&x.pkt)).collect();
        lost.extend(q.out_q.drain(..).map(|x| Self::flow(&x.pkt)));
        lost.extend(q.pending_out.drain(..).map(|(p, _)| Self::flow(&p)));
        lost.extend(std::mem::take(&mut q.in_pipeline).into_values());
        let (i, o) = (q.vs_in.occupied_words(), q.vs_out.occupied_words());
        q.vs_in.dequeue(i);
        q.vs_out.dequeue(o);
        q.epoch += 1;
        q.busy_until = self.now;
        for f in lost {
            self.count_drop(f, DropReason::Reconfig, None, Some(s));
        }
    }
}

fn ipi_counter(r: DropReason) -> usize {
    match r {
        DropReason::NoTag => 1,
        DropReason::NoEntry => 2,
        DropReason::ExplicitDrop => 3,
        DropReason::SlotUnavailable => 4,
        DropReason::SlotBackpressure => 5,
        _ => 6,
    }
}

fn opi_counter(r: DropReason) -> usize {
    match r {
        DropReason::Unauthorized => 1,
        DropReason::NoEntry => 2,
        _ => 3,
    }
}

/// Runs a scenario to completion.
pub fn run(sc: Scenario) -> Result<RunResult, ScenarioError> {
    Ok(Engine::new(sc)?.run())
}

//! Run counters, measurement-window arithmetic and file output. Every map
//! is ordered, so rendered files are byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::estimator::{tbps_2dp, Bottleneck, Layer};
use crate::mgmt::{IPI_COUNTERS, OPI_COUNTERS};
use crate::steering::DropReason;
use crate::types::{format_duration, Picos, LANE_COUNT};

/// Origin lane and VID of a generated packet.
pub type FlowKey = (u8, Option<u16>);

pub const DROP_REASONS: usize = DropReason::ALL.len();

/// Packet count and origin wire bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub packets: u64,
    pub bits: u64,
}

impl Tally {
    pub fn add(&mut self, bits: u64) {
        self.packets += 1;
        self.bits += bits;
    }

    fn minus(&self, o: &Tally) -> Tally {
        Tally { packets: self.packets - o.packets, bits: self.bits - o.bits }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowCounters {
    pub injected: Tally,
    pub delivered: Tally,
    /// Extra copies created by multi-port emission.
    pub replicated: u64,
    pub drops: [u64; DROP_REASONS],
}

impl FlowCounters {
    pub fn dropped(&self) -> u64 {
        self.drops.iter().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LaneCounters {
    /// Packets accepted into the RX FIFO.
    pub rx: Tally,
    /// Delivered packets, with bits as transmitted.
    pub tx: Tally,
    pub drops: [u64; DROP_REASONS],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotCounters {
    pub received: u64,
    pub processed: u64,
    pub emitted: u64,
    pub delivered: Tally,
    pub drops: [u64; DROP_REASONS],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub injected: Tally,
    pub delivered: Tally,
    pub replicated: u64,
    pub drops: [u64; DROP_REASONS],
    pub lanes: Vec<LaneCounters>,
    pub slots: Vec<SlotCounters>,
    pub flows: BTreeMap<FlowKey, FlowCounters>,
    pub ipi: [u64; IPI_COUNTERS.len()],
    pub opi: [u64; OPI_COUNTERS.len()],
}

impl Counters {
    pub fn new(slots: usize) -> Self {
        Self {
            lanes: vec![LaneCounters::default(); LANE_COUNT],
            slots: vec![SlotCounters::default(); slots],
            ..Default::default()
        }
    }

    pub fn dropped(&self) -> u64 {
        self.drops.iter().sum()
    }

    pub fn drop_count(&self, r: DropReason) -> u64 {
        self.drops[r as usize]
    }

    /// injected + replicated - delivered - dropped.
    pub fn in_flight(&self) -> i64 {
        (self.injected.packets + self.replicated) as i64 - (self.delivered.packets + self.dropped()) as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FifoReport {
    pub id: String,
    pub depth: u32,
    pub occupied: u32,
    pub peak: u32,
    pub accepted_words: u64,
    pub drops: u64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub window: (Picos, Picos),
    /// After the run drained.
    pub totals: Counters,
    pub at_warmup: Counters,
    pub at_end: Counters,
    pub fifos: Vec<FifoReport>,
    /// Ingress-PHY to egress-PHY latency of every delivered packet, by slot.
    pub latency: Vec<Vec<Picos>>,
    pub slot_specs: Vec<Option<String>>,
    pub active_lanes: usize,
    pub estimate: Bottleneck,
    pub estimate_layers: [f64; 3],
    pub control_log: Vec<String>,
    pub events: u64,
}

/// Loss needed before a layer is blamed.
pub const LOSS_ATTRIBUTION: f64 = 0.005;
/// Lane utilization that counts as line rate.
pub const PHY_SATURATION: f64 = 0.98;

impl Metrics {
    pub fn window_len(&self) -> Picos {
        self.window.1 - self.window.0
    }

    fn gbps(&self, bits: u64) -> f64 {
        let w = self.window_len();
        if w == 0 {
            0.0
        } else {
            bits as f64 * 1000.0 / w as f64
        }
    }

    pub fn window_delivered(&self) -> Tally {
        self.at_end.delivered.minus(&self.at_warmup.delivered)
    }

    pub fn window_injected(&self) -> Tally {
        self.at_end.injected.minus(&self.at_warmup.injected)
    }

    fn window_drops(&self, r: DropReason) -> u64 {
        self.at_end.drop_count(r) - self.at_warmup.drop_count(r)
    }

    /// Delivered origin wire bits per second inside the window.
    pub fn goodput_gbps(&self) -> f64 {
        self.gbps(self.window_delivered().bits)
    }

    pub fn offered_gbps(&self) -> f64 {
        self.gbps(self.window_injected().bits)
    }

    /// Layer that limited this run: the one dropping at least 0.5% of the
    /// window's packets, or the PHY when lanes ran at line rate.
    pub fn measured_bottleneck(&self) -> Option<Layer> {
        let injected = self.window_injected().packets.max(1) as f64;
        let share = |r| self.window_drops(r) as f64 / injected;
        if share(DropReason::SlotBackpressure) >= LOSS_ATTRIBUTION {
            Some(Layer::Fpga)
        } else if share(DropReason::RxOverflow) >= LOSS_ATTRIBUTION {
            Some(Layer::Asic)
        } else if self.goodput_gbps() >= PHY_SATURATION * 100.0 * self.active_lanes as f64 {
            Some(Layer::Physical)
        } else {
            None
        }
    }

    /// Conservation over the drained run, globally and per flow.
    pub fn conservation_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let t = &self.totals;
        if t.in_flight() != 0 {
            v.push(format!(
                "global: injected {} + replicated {} != delivered {} + dropped {}",
                t.injected.packets,
                t.replicated,
                t.delivered.packets,
                t.dropped()
            ));
        }
        for (k, f) in &t.flows {
            if f.injected.packets + f.replicated != f.delivered.packets + f.dropped() {
                v.push(format!("flow {k:?}: {f:?}"));
            }
        }
        v
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let [phy, asic, fpga] = self.estimate_layers;
        let _ = writeln!(s, "{:<10} {:>16} {:>16}", "Layer", "Capacity (Tbps)", "Measured (Tbps)");
        let _ = writeln!(s, "{:<10} {:>16.2} {:>16}", "Physical", tbps_2dp(phy), "");
        let _ = writeln!(s, "{:<10} {:>16.2} {:>16}", "ASIC", tbps_2dp(asic), "");
        let _ = writeln!(s, "{:<10} {:>16.2} {:>16}", "FPGA", tbps_2dp(fpga), "");
        let _ = writeln!(
            s,
            "{:<10} {:>16.2} {:>16.4}",
            "Platform",
            tbps_2dp(self.estimate.gbps),
            self.goodput_gbps() / 1000.0
        );
        let _ = writeln!(s);
        let _ =
            writeln!(s, "window            {} .. {}", format_duration(self.window.0), format_duration(self.window.1));
        let _ = writeln!(s, "offered           {:.3} Gbps", self.offered_gbps());
        let _ = writeln!(s, "goodput           {:.3} Gbps", self.goodput_gbps());
        let layers: Vec<String> = self.estimate.layers.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(
            s,
            "bottleneck        estimated {} / measured {}",
            layers.join("+"),
            self.measured_bottleneck().map_or("none".to_string(), |l| l.to_string())
        );
        let t = &self.totals;
        let _ = writeln!(s, "injected          {}", t.injected.packets);
        let _ = writeln!(s, "replicated        {}", t.replicated);
        let _ = writeln!(s, "delivered         {}", t.delivered.packets);
        let _ = writeln!(s, "dropped           {}", t.dropped());
        for r in DropReason::ALL {
            if t.drop_count(r) > 0 {
                let _ = writeln!(s, "  {:<16}{}", r.as_str(), t.drop_count(r));
            }
        }
        let _ = writeln!(s, "in_flight         {}", t.in_flight());
        let _ = writeln!(s, "events            {}", self.events);
        s
    }

    pub fn lanes_csv(&self) -> String {
        let mut s = String::from("lane,rx_packets,rx_bits,tx_packets,tx_bits,tx_gbps,dropped\n");
        for (l, c) in self.totals.lanes.iter().enumerate() {
            let w = self.at_end.lanes[l].tx.minus(&self.at_warmup.lanes[l].tx);
            let _ = writeln!(
                s,
                "{l},{},{},{},{},{:.3},{}",
                c.rx.packets,
                c.rx.bits,
                c.tx.packets,
                c.tx.bits,
                self.gbps(w.bits),
                c.drops.iter().sum::<u64>()
            );
        }
        s
    }

    pub fn slots_csv(&self) -> String {
        let mut s = String::from("slot,spec,received,processed,emitted,delivered,delivered_gbps,dropped,latency_min_ps,latency_mean_ps,latency_p99_ps\n");
        let lat = super::latency::measure_latency(self);
        for (i, c) in self.totals.slots.iter().enumerate() {
            let w = self.at_end.slots[i].delivered.minus(&self.at_warmup.slots[i].delivered);
            let (mn, mean, p99) = lat.get(&(i as u8)).map_or((String::new(), String::new(), String::new()), |l| {
                (l.min.to_string(), format!("{:.1}", l.mean), l.p99.to_string())
            });
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{:.3},{},{mn},{mean},{p99}",
                self.slot_specs[i].as_deref().unwrap_or("-"),
                c.received,
                c.processed,
                c.emitted,
                c.delivered.packets,
                self.gbps(w.bits),
                c.drops.iter().sum::<u64>()
            );
        }
        s
    }

    pub fn fifos_csv(&self) -> String {
        let mut s = String::from("fifo,depth,occupied,peak,accepted_words,drops\n");
        for f in &self.fifos {
            let _ = writeln!(s, "{},{},{},{},{},{}", f.id, f.depth, f.occupied, f.peak, f.accepted_words, f.drops);
        }
        s
    }

    pub fn drops_csv(&self) -> String {
        let mut s = String::from("reason,total,window\n");
        for r in DropReason::ALL {
            let _ = writeln!(s, "{},{},{}", r.as_str(), self.totals.drop_count(r), self.window_drops(r));
        }
        s
    }

    pub fn flows_csv(&self) -> String {
        let mut s = String::from("lane,vid,injected,delivered,replicated,dropped,delivered_bits\n");
        for ((l, v), f) in &self.totals.flows {
            let vid = v.map_or("-".to_string(), |v| v.to_string());
            let _ = writeln!(
                s,
                "{l},{vid},{},{},{},{},{}",
                f.injected.packets,
                f.delivered.packets,
                f.replicated,
                f.dropped(),
                f.delivered.bits
            );
        }
        s
    }

    pub fn latency_csv(&self) -> String {
        let mut s = String::from("slot,bucket_ns_lo,bucket_ns_hi,count\n");
        for (slot, samples) in self.latency.iter().enumerate() {
            let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
            for l in samples {
                let ns = (*l / 1000).max(1);
                *hist.entry(63 - ns.leading_zeros()).or_default() += 1;
            }
            for (b, c) in hist {
                let _ = writeln!(s, "{slot},{},{},{c}", 1u64 << b, 1u64 << (b + 1));
            }
        }
        s
    }

    /// Writes every report into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path, event_log: Option<&[String]>) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        std::fs::write(dir.join("lanes.csv"), self.lanes_csv())?;
        std::fs::write(dir.join("slots.csv"), self.slots_csv())?;
        std::fs::write(dir.join("fifos.csv"), self.fifos_csv())?;
        std::fs::write(dir.join("drops.csv"), self.drops_csv())?;
        std::fs::write(dir.join("flows.csv"), self.flows_csv())?;
        std::fs::write(dir.join("latency.csv"), self.latency_csv())?;
        if !self.control_log.is_empty() {
            std::fs::write(dir.join("control.log"), self.control_log.join("\n") + "\n")?;
        }
        if let Some(log) = event_log {
            std::fs::write(dir.join("events.log"), log.join("\n") + "\n")?;
        }
        Ok(())
    }
}

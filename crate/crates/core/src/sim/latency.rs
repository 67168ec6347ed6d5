use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::metrics::Metrics;
use super::timing::*;
use crate::pipeline::{ActionSpec, PipelineSpec};
use crate::types::{wire_bits, ClockDomain, Picos, Rate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySummary {
    pub count: usize,
    pub min: Picos,
    pub mean: f64,
    /// Nearest-rank 99th percentile.
    pub p99: Picos,
}

/// Per-slot summary of recorded ingress-to-egress latencies. Slots that
/// delivered nothing are absent.
pub fn measure_latency(m: &Metrics) -> BTreeMap<u8, LatencySummary> {
    let mut out = BTreeMap::new();
    for (slot, samples) in m.latency.iter().enumerate() {
        if samples.is_empty() {
            continue;
        }
        let mut v = samples.clone();
        v.sort_unstable();
        let rank = (v.len() * 99).div_ceil(100).max(1);
        let mean = v.iter().map(|x| *x as f64).sum::<f64>() / v.len() as f64;
        out.insert(slot as u8, LatencySummary { count: v.len(), min: v[0], mean, p99: v[rank - 1] });
    }
    out
}

/// Unloaded latency of one packet through one slot, hop by hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyBreakdown {
    pub terms: Vec<(&'static str, Picos)>,
}

impl LatencyBreakdown {
    pub fn total(&self) -> Picos {
        self.terms.iter().map(|t| t.1).sum()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, ps) in &self.terms {
            let _ = writeln!(s, "  {name:<24}{ps:>10} ps");
        }
        let _ = writeln!(s, "  {:<24}{:>10} ps", "total", self.total());
        s
    }
}

/// Bytes a pipeline adds to every packet it forwards through its default
/// header pushes.
pub fn header_growth(spec: &PipelineSpec) -> usize {
    spec.stages
        .iter()
        .filter(|s| s.apply)
        .filter_map(|s| match &s.default_action {
            ActionSpec::PushHeader { fields, .. } => Some(fields.iter().map(|f| f.width as usize).sum::<usize>() / 8),
            _ => None,
        })
        .sum()
}

/// Closed form for a packet of `in_len` bytes that leaves the pipeline as
/// `out_len` bytes, with no queueing anywhere.
pub fn explain_latency(spec: &PipelineSpec, rate_factor: f64, in_len: usize, out_len: usize) -> LatencyBreakdown {
    let service = Rate::from_gbps(spec.rate_gbps).scaled(rate_factor).serialization(wire_bits(in_len));
    LatencyBreakdown {
        terms: vec![
            ("rx fifo sync", asic_cdc()),
            ("ipi transfer", ipi_rate().serialization(wire_bits(in_len))),
            ("vs input sync", fpga_cdc()),
            ("vs service", service),
            ("vs pipeline", ClockDomain::fpga().cycles(spec.latency_cycles as u64)),
            ("vs output sync", asic_cdc()),
            ("opi transfer", opi_move(out_len)),
            ("tx fifo sync", asic_cdc()),
            ("tx serialization", phy_rate().serialization(wire_bits(out_len))),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builtin_spec;

    #[test]
    fn l2_closed_form() {
        let b = explain_latency(&builtin_spec("l2_switch").unwrap(), 1.0, 1518, 1518);
        // 12304 wire bits: 3729 ps at 3.3 Tbps, 92770 ps at 132.63 Gbps,
        // 20 x 1392 pipeline, 43 output words, 123040 ps on the wire.
        assert_eq!(b.total(), 2000 + 3729 + 2784 + 92770 + 27840 + 2000 + 43_000 + 2000 + 123_040);
    }
}

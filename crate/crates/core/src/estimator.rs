//! Static capacity and throughput model: how many instances fit, what each
//! layer can carry, and which layer limits the platform.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{builtin_spec, builtin_specs, load_spec, PipelineSpec, ResourceFootprint};
use crate::types::MAX_SLOTS;

/// Reported synthesis figures for the ASIC, quoted verbatim in reports.
pub const ASIC_AREA_MM2: f64 = 47.6;
pub const ASIC_DYNAMIC_POWER_W: f64 = 28.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricCapacity {
    pub luts: u64,
    pub ffs: u64,
    pub brams: u64,
}

impl Default for FabricCapacity {
    fn default() -> Self {
        Self { luts: 1_728_000, ffs: 3_456_000, brams: 2_688 }
    }
}

impl FabricCapacity {
    pub fn as_footprint(&self) -> ResourceFootprint {
        ResourceFootprint::new(self.luts, self.ffs, self.brams)
    }

    /// Per-slot share: ceil(capacity / slots) per resource.
    pub fn per_slot_budget(&self, slots: u64) -> ResourceFootprint {
        ResourceFootprint::new(self.luts.div_ceil(slots), self.ffs.div_ceil(slots), self.brams.div_ceil(slots))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayerRates {
    pub phy_lanes: u32,
    pub phy_lane_gbps: f64,
    pub asic_streams: u32,
    pub asic_stream_gbps: f64,
}

impl Default for LayerRates {
    fn default() -> Self {
        Self { phy_lanes: 32, phy_lane_gbps: 100.0, asic_streams: 33, asic_stream_gbps: 100.0 }
    }
}

impl LayerRates {
    pub fn phy_total(&self) -> f64 {
        self.phy_lanes as f64 * self.phy_lane_gbps
    }

    pub fn asic_total(&self) -> f64 {
        self.asic_streams as f64 * self.asic_stream_gbps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Physical,
    Asic,
    Fpga,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Physical => "Physical",
            Layer::Asic => "ASIC",
            Layer::Fpga => "FPGA",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck {
    pub gbps: f64,
    /// Every layer achieving the minimum.
    pub layers: Vec<Layer>,
}

/// Instances of one footprint that fit the fabric, capped by the slot count.
pub fn max_instances(fp: &ResourceFootprint, cap: &FabricCapacity) -> u32 {
    let per = |c: u64, f: u64| c.checked_div(f).unwrap_or(u64::MAX);
    let n = per(cap.luts, fp.luts).min(per(cap.ffs, fp.ffs)).min(per(cap.brams, fp.brams));
    n.min(MAX_SLOTS as u64) as u32
}

pub fn fits(deployment: &[PipelineSpec], cap: &FabricCapacity) -> bool {
    deployment.len() <= MAX_SLOTS
        && deployment.iter().map(|s| s.footprint).sum::<ResourceFootprint>().fits_within(&cap.as_footprint())
}

/// Sum of per-instance rates; no instance exceeds its own rate.
pub fn fpga_throughput(deployment: &[PipelineSpec]) -> f64 {
    deployment.iter().map(|s| s.rate_gbps).sum()
}

pub fn platform_bottleneck(rates: &LayerRates, deployment: &[PipelineSpec]) -> Bottleneck {
    let layers = [
        (Layer::Physical, rates.phy_total()),
        (Layer::Asic, rates.asic_total()),
        (Layer::Fpga, fpga_throughput(deployment)),
    ];
    let gbps = layers.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    let tied = layers.iter().filter(|l| (l.1 - gbps).abs() < 1e-9).map(|l| l.0).collect();
    Bottleneck { gbps, layers: tied }
}

/// Rounds to the printed precision of the throughput report.
pub fn tbps_2dp(gbps: f64) -> f64 {
    (gbps / 10.0).round() / 100.0
}

#[derive(Debug, Error)]
pub enum DeploymentError {
    #[error("deployment document: {0}")]
    Parse(String),
    #[error("unknown pipeline '{0}'")]
    UnknownSpec(String),
    #[error("{0}")]
    Spec(#[from] crate::pipeline::SpecError),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentFile {
    #[serde(default)]
    pub capacity: Option<FabricCapacity>,
    #[serde(default)]
    pub rates: Option<LayerRates>,
    #[serde(default)]
    pub deploy: Vec<DeployLine>,
    /// Inline custom pipelines referenced by name.
    #[serde(default)]
    pub specs: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeployLine {
    pub spec: String,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

impl DeploymentFile {
    pub fn parse(text: &str) -> Result<Self, DeploymentError> {
        toml::from_str(text).map_err(|e| DeploymentError::Parse(e.to_string()))
    }

    pub fn expand(&self) -> Result<Vec<PipelineSpec>, DeploymentError> {
        let custom = self.specs.iter().map(|t| load_spec(t)).collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for line in &self.deploy {
            let spec = custom
                .iter()
                .find(|s| s.name == line.spec)
                .cloned()
                .or_else(|| builtin_spec(&line.spec))
                .ok_or_else(|| DeploymentError::UnknownSpec(line.spec.clone()))?;
            out.extend(std::iter::repeat_n(spec, line.count as usize));
        }
        Ok(out)
    }
}

/// Layer / instance / count / throughput table. The FPGA row spans the
/// builtin pipelines at full occupancy; a deployment adds its own row.
pub fn throughput_report(rates: &LayerRates, cap: &FabricCapacity, deployment: Option<&[PipelineSpec]>) -> String {
    let mut out = String::new();
    let builtin = builtin_specs();
    let full: Vec<(u32, f64)> = builtin
        .values()
        .map(|s| {
            let n = max_instances(&s.footprint, cap);
            (n, n as f64 * s.rate_gbps)
        })
        .collect();
    let (nmin, nmax) = (full.iter().map(|f| f.0).min().unwrap_or(0), full.iter().map(|f| f.0).max().unwrap_or(0));
    let (tmin, tmax) =
        (full.iter().map(|f| f.1).fold(f64::INFINITY, f64::min), full.iter().map(|f| f.1).fold(0.0, f64::max));
    let platform = rates.phy_total().min(rates.asic_total()).min(tmax);

    let _ = writeln!(out, "{:<10} {:<18} {:>7} {:>16}", "Layer", "Instance", "Count", "Max throughput");
    let row = |out: &mut String, layer: &str, inst: &str, count: String, tput: String| {
        let _ = writeln!(out, "{layer:<10} {inst:<18} {count:>7} {tput:>16}");
    };
    row(
        &mut out,
        "Physical",
        &format!("{} Gbps PHY", rates.phy_lane_gbps),
        rates.phy_lanes.to_string(),
        format!("{:.2} Tbps", tbps_2dp(rates.phy_total())),
    );
    row(
        &mut out,
        "ASIC",
        &format!("{} Gbps stream", rates.asic_stream_gbps),
        rates.asic_streams.to_string(),
        format!("{:.2} Tbps", tbps_2dp(rates.asic_total())),
    );
    row(&mut out, "FPGA", "vS", format!("{nmin}-{nmax}"), format!("{:.2}-{:.2} Tbps", tbps_2dp(tmin), tbps_2dp(tmax)));
    row(&mut out, "Platform", "Chip", "1".into(), format!("{:.2} Tbps", tbps_2dp(platform)));

    if let Some(dep) = deployment {
        let b = platform_bottleneck(rates, dep);
        let _ = writeln!(out);
        let _ = writeln!(out, "Deployment: {} instance(s)", dep.len());
        let mut counts: std::collections::BTreeMap<&str, (u32, f64)> = Default::default();
        for s in dep {
            let e = counts.entry(s.name.as_str()).or_default();
            e.0 += 1;
            e.1 += s.rate_gbps;
        }
        for (name, (n, g)) in counts {
            let _ = writeln!(out, "  {name:<16} x{n:<3} {g:>10.2} Gbps");
        }
        let _ = writeln!(out, "  fits fabric: {}", if fits(dep, cap) { "yes" } else { "no" });
        let _ = writeln!(out, "  FPGA throughput: {:.2} Gbps", fpga_throughput(dep));
        let layers: Vec<String> = b.layers.iter().map(|l| l.to_string()).collect();
        let _ = writeln!(out, "  platform bottleneck: {:.2} Gbps ({})", b.gbps, layers.join(", "));
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Reported ASIC synthesis: area {ASIC_AREA_MM2} mm^2, dynamic power {ASIC_DYNAMIC_POWER_W} W (static constants)"
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n_of(name: &str, n: usize) -> Vec<PipelineSpec> {
        vec![builtin_spec(name).unwrap(); n]
    }

    #[test]
    fn instance_counts() {
        let cap = FabricCapacity::default();
        let got: Vec<u32> = ["l2_switch", "firewall", "router", "int"]
            .iter()
            .map(|n| max_instances(&builtin_spec(n).unwrap().footprint, &cap))
            .collect();
        assert_eq!(got, vec![26, 17, 14, 11]);
    }

    #[test]
    fn throughput_endpoints() {
        assert!((fpga_throughput(&n_of("l2_switch", 26)) - 3448.38).abs() < 1e-6);
        assert!((fpga_throughput(&n_of("int", 11)) - 1425.71).abs() < 1e-6);
        assert_eq!(fpga_throughput(&[]), 0.0);
    }

    #[test]
    fn bottlenecks() {
        let r = LayerRates::default();
        let b = platform_bottleneck(&r, &n_of("l2_switch", 26));
        assert_eq!((b.gbps, b.layers), (3200.0, vec![Layer::Physical]));
        let b = platform_bottleneck(&r, &n_of("int", 11));
        assert!((b.gbps - 1425.71).abs() < 1e-6);
        assert_eq!(b.layers, vec![Layer::Fpga]);
        let slow = LayerRates { asic_streams: 10, ..r };
        assert_eq!(platform_bottleneck(&slow, &n_of("l2_switch", 26)).layers, vec![Layer::Asic]);
        let tie = LayerRates { asic_streams: 32, ..r };
        assert_eq!(platform_bottleneck(&tie, &n_of("l2_switch", 26)).layers, vec![Layer::Physical, Layer::Asic]);
    }

    #[test]
    fn twelve_int_do_not_fit() {
        assert!(fits(&n_of("int", 11), &FabricCapacity::default()));
        assert!(!fits(&n_of("int", 12), &FabricCapacity::default()));
    }

    #[test]
    fn report_shape() {
        let r = throughput_report(&LayerRates::default(), &FabricCapacity::default(), None);
        assert!(r.contains("3.20 Tbps"));
        assert!(r.contains("3.30 Tbps"));
        assert!(r.contains("1.43-3.45 Tbps"));
        assert!(r.contains("11-26"));
        assert!(r.contains("47.6 mm^2"));
    }

    #[test]
    fn deployment_file() {
        let d = DeploymentFile::parse("deploy = [{ spec = \"int\", count = 11 }]").unwrap();
        assert_eq!(d.expand().unwrap().len(), 11);
        let d = DeploymentFile::parse("deploy = [{ spec = \"nope\" }]").unwrap();
        assert!(matches!(d.expand(), Err(DeploymentError::UnknownSpec(_))));
    }

    proptest! {
        #[test]
        fn monotone(l in 1u64..200_000, f in 1u64..400_000, b in 1u64..400, dl in 0u64..1000, db in 0u64..50) {
            let cap = FabricCapacity::default();
            let fp = ResourceFootprint::new(l, f, b);
            let bigger = ResourceFootprint::new(l + dl, f, b + db);
            prop_assert!(max_instances(&bigger, &cap) <= max_instances(&fp, &cap));
            let roomier = FabricCapacity { luts: cap.luts + dl, brams: cap.brams + db, ..cap };
            prop_assert!(max_instances(&fp, &roomier) >= max_instances(&fp, &cap));
        }
    }
}

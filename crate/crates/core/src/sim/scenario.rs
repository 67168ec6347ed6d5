//! Scenario files and their resolved form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::traffic::{Arrivals, Selection, SizeDist, TrafficProfile};
use crate::estimator::FabricCapacity;
use crate::frame::FrameTemplate;
use crate::pipeline::{builtin_specs, load_spec, PipelineSpec};
use crate::reconfig::{PolicyConfig, ReconfigPolicy};
use crate::steering::{lane_mask, EgressAction, IngressAction, TX_LANE_MASK};
use crate::types::{is_valid_vid, parse_duration, wire_bits, Picos, Rate, LANE_COUNT, MAX_SLOTS, PHYS_LANES};

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// A timed deploy (`spec = Some`) or undeploy of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconfigAction {
    pub at: Picos,
    pub slot: u8,
    pub spec: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub duration: Picos,
    /// Physical lanes carrying offered traffic.
    pub lanes: usize,
    pub slots: usize,
    pub warmup_fraction: f64,
    /// Passes through the loopback port before a packet is dropped.
    pub loop_limit: u8,
    pub capacity: FabricCapacity,
    pub policy: ReconfigPolicy,
    pub specs: BTreeMap<String, PipelineSpec>,
    pub deploy: Vec<(u8, String)>,
    pub ingress: Vec<(u8, u16, IngressAction)>,
    pub egress: Vec<(u16, u8, EgressAction)>,
    /// Management commands applied at time zero.
    pub setup: Vec<String>,
    pub traffic: Vec<TrafficProfile>,
    pub control: Vec<(Picos, String)>,
    pub reconfig: Vec<ReconfigAction>,
    pub log_events: bool,
    /// Keep per-packet slot entries and deliveries.
    pub record_trace: bool,
}

impl Scenario {
    pub fn new(duration: Picos) -> Self {
        Self {
            seed: 1,
            duration,
            lanes: PHYS_LANES,
            slots: MAX_SLOTS,
            warmup_fraction: 0.1,
            loop_limit: 4,
            capacity: FabricCapacity::default(),
            policy: ReconfigPolicy::default(),
            specs: builtin_specs(),
            deploy: Vec::new(),
            ingress: Vec::new(),
            egress: Vec::new(),
            setup: Vec::new(),
            traffic: Vec::new(),
            control: Vec::new(),
            reconfig: Vec::new(),
            log_events: false,
            record_trace: false,
        }
    }

    pub fn warmup(&self) -> Picos {
        (self.duration as f64 * self.warmup_fraction).round() as Picos
    }

    /// Even load of `lanes` lanes over `slots` copies of a builtin pipeline.
    ///
    /// Lane L carries VIDs 100+j for j < p = slots / gcd(lanes, slots),
    /// selected round-robin, and (L, 100+j) is steered to slot
    /// (lanes*j + L) mod slots. Lanes start staggered by T/lanes, so the
    /// g-th arrival platform-wide lands in slot g mod slots and every slot
    /// sees evenly spaced packets. Flow (L, j) leaves on TX lane
    /// (lanes*j + L + 1) mod 32.
    pub fn balanced(
        spec: &str,
        lanes: usize,
        slots: usize,
        rate_gbps: f64,
        size: SizeDist,
        duration: Picos,
    ) -> Result<Self, ScenarioError> {
        let mut s = Self::new(duration);
        s.lanes = lanes;
        s.slots = slots;
        s.apply_balanced(spec, rate_gbps, size)?;
        Ok(s)
    }

    fn apply_balanced(&mut self, spec: &str, rate_gbps: f64, size: SizeDist) -> Result<(), ScenarioError> {
        let table = match spec {
            "l2_switch" => "l2",
            "firewall" => "acl",
            "router" => "ipv4_lpm",
            "int" => "fwd",
            other => {
                return Err(ScenarioError::Invalid(vec![format!("balanced: '{other}' is not a builtin pipeline")]))
            }
        };
        let (n, m) = (self.lanes, self.slots);
        if !(1..=PHYS_LANES).contains(&n) || !(1..=MAX_SLOTS).contains(&m) {
            return Err(ScenarioError::Invalid(vec![format!("balanced: {n} lanes / {m} slots out of range")]));
        }
        let p = m / gcd(n, m);
        let period = Rate::from_gbps(rate_gbps).serialization(size.mean_wire_bits().round() as u64);
        let mut egress: BTreeMap<(u16, u8), u64> = BTreeMap::new();
        let mut priority = vec![0u32; m];
        for slot in 0..m as u8 {
            self.deploy.push((slot, spec.to_string()));
        }
        for l in 0..n {
            let mut profile = TrafficProfile::new(l as u8, &[], rate_gbps);
            profile.size = size;
            profile.start = period * l as Picos / n as Picos;
            for j in 0..p {
                let vid = 100 + j as u16;
                let slot = ((n * j + l) % m) as u8;
                let tx = ((n * j + l + 1) % PHYS_LANES) as u8;
                let mut t = FrameTemplate::new(vid);
                t.dst_mac = [0x02, 0, 0, 0x01, l as u8, j as u8];
                t.src_mac = [0x02, 0, 0, 0, 0, l as u8];
                t.dst_ip = u32::from_be_bytes([10, 1, l as u8, j as u8]);
                profile.flows.push(t);
                self.ingress.push((l as u8, vid, IngressAction::Forward(crate::types::DeviceId(slot))));
                *egress.entry((vid, slot)).or_default() |= 1 << tx;
                let dst = format!("10.1.{l}.{j}");
                let cmd = match table {
                    "l2" => format!("vs {slot} table l2 add 02:00:00:01:{l:02x}:{j:02x} action=forward port={tx}"),
                    "acl" => {
                        let prio = &mut priority[slot as usize];
                        *prio += 1;
                        format!("vs {slot} table acl add * {dst} * * priority={prio} action=forward port={tx}")
                    }
                    "ipv4_lpm" => format!("vs {slot} table ipv4_lpm add {dst}/32 action=forward port={tx}"),
                    _ => format!("vs {slot} table fwd add {dst} action=forward port={tx}"),
                };
                self.setup.push(cmd);
            }
            self.traffic.push(profile);
        }
        for ((vid, slot), mask) in egress {
            self.egress.push((vid, slot, EgressAction::Forward(mask)));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Parses and validates. Every violated constraint is reported.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut errors = Vec::new();
        let dur = |what: &str, s: &str, errors: &mut Vec<String>| {
            parse_duration(s).unwrap_or_else(|e| {
                errors.push(format!("{what}: {e}"));
                0
            })
        };
        let mut s = Self::new(dur("duration", &f.duration, &mut errors));
        s.seed = f.seed.unwrap_or(s.seed);
        s.lanes = f.lanes.unwrap_or(s.lanes);
        s.slots = f.slots.unwrap_or(s.slots);
        s.warmup_fraction = f.warmup_fraction.unwrap_or(s.warmup_fraction);
        s.loop_limit = f.loop_limit.unwrap_or(s.loop_limit);
        s.capacity = f.capacity.unwrap_or(s.capacity);
        s.policy = f.policy.resolve(&mut errors);
        for (i, src) in f.specs.iter().enumerate() {
            let text = match (&src.inline, &src.path) {
                (Some(t), None) => Some(t.clone()),
                (None, Some(p)) => {
                    let p = base_dir.map_or_else(|| Path::new(p).to_path_buf(), |d| d.join(p));
                    std::fs::read_to_string(&p)
                        .map_err(|e| errors.push(format!("specs[{i}]: {}: {e}", p.display())))
                        .ok()
                }
                _ => {
                    errors.push(format!("specs[{i}]: give exactly one of inline or path"));
                    None
                }
            };
            if let Some(t) = text {
                match load_spec(&t) {
                    Ok(spec) => {
                        s.specs.insert(spec.name.clone(), spec);
                    }
                    Err(e) => errors.push(format!("specs[{i}]: {e}")),
                }
            }
        }
        s.deploy = f.deploy.iter().map(|d| (d.slot, d.spec.clone())).collect();
        for (i, e) in f.ingress.iter().enumerate() {
            let action = match (e.vs, e.drop) {
                (Some(d), false) => IngressAction::Forward(crate::types::DeviceId(d)),
                (None, true) => IngressAction::Drop,
                _ => {
                    errors.push(format!("ingress[{i}]: give exactly one of vs or drop = true"));
                    continue;
                }
            };
            s.ingress.push((e.lane, e.vid, action));
        }
        for (i, e) in f.egress.iter().enumerate() {
            let action = match (&e.lanes, e.drop) {
                (Some(l), false) => EgressAction::Forward(lane_mask(l)),
                (None, true) => EgressAction::Drop,
                _ => {
                    errors.push(format!("egress[{i}]: give exactly one of lanes or drop = true"));
                    continue;
                }
            };
            if e.lanes.as_ref().is_some_and(|l| l.iter().any(|x| *x as usize >= LANE_COUNT)) {
                errors.push(format!("egress[{i}]: lane out of range"));
                continue;
            }
            s.egress.push((e.vid, e.vs, action));
        }
        s.setup = f.setup.clone();
        for (i, t) in f.traffic.iter().enumerate() {
            let mut p = TrafficProfile::new(t.lane, &t.vids, t.rate_gbps);
            p.size = t.size;
            p.arrivals = t.arrivals;
            p.selection = t.selection;
            p.start = t.start.as_deref().map_or(0, |v| dur(&format!("traffic[{i}].start"), v, &mut errors));
            for tpl in &mut p.flows {
                if let Some(m) = &t.dst_mac {
                    parse_mac(m)
                        .map(|m| tpl.dst_mac = m)
                        .unwrap_or_else(|| errors.push(format!("traffic[{i}]: bad dst_mac {m}")));
                }
                if let Some(m) = &t.src_mac {
                    parse_mac(m)
                        .map(|m| tpl.src_mac = m)
                        .unwrap_or_else(|| errors.push(format!("traffic[{i}]: bad src_mac {m}")));
                }
                if let Some(a) = &t.dst_ip {
                    parse_ip(a)
                        .map(|a| tpl.dst_ip = a)
                        .unwrap_or_else(|| errors.push(format!("traffic[{i}]: bad dst_ip {a}")));
                }
                if let Some(a) = &t.src_ip {
                    parse_ip(a)
                        .map(|a| tpl.src_ip = a)
                        .unwrap_or_else(|| errors.push(format!("traffic[{i}]: bad src_ip {a}")));
                }
                tpl.sport = t.sport.unwrap_or(tpl.sport);
                tpl.dport = t.dport.unwrap_or(tpl.dport);
            }
            s.traffic.push(p);
        }
        for (i, c) in f.control.iter().enumerate() {
            s.control.push((dur(&format!("control[{i}].at"), &c.at, &mut errors), c.command.clone()));
        }
        for (i, r) in f.reconfig.iter().enumerate() {
            let at = dur(&format!("reconfig[{i}].at"), &r.at, &mut errors);
            s.reconfig.push(ReconfigAction { at, slot: r.slot, spec: r.spec.clone() });
        }
        if let Some(b) = &f.balanced {
            if !(f.deploy.is_empty() && f.ingress.is_empty() && f.egress.is_empty() && f.traffic.is_empty()) {
                errors.push("balanced cannot be combined with deploy, ingress, egress or traffic".into());
            } else if let Err(ScenarioError::Invalid(e)) =
                s.apply_balanced(&b.spec, b.rate_gbps.unwrap_or(100.0), b.size)
            {
                errors.extend(e);
            }
        }
        if let Err(ScenarioError::Invalid(e)) = s.validate() {
            errors.extend(e);
        }
        if errors.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(errors))
        }
    }

    /// Structural checks. Capacity, duplicate steering keys and setup
    /// commands are checked when an engine is built.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut e = Vec::new();
        if self.duration == 0 {
            e.push("duration must be positive".to_string());
        }
        if !(1..=PHYS_LANES).contains(&self.lanes) {
            e.push(format!("lanes {} outside 1..={PHYS_LANES}", self.lanes));
        }
        if !(1..=MAX_SLOTS).contains(&self.slots) {
            e.push(format!("slots {} outside 1..={MAX_SLOTS}", self.slots));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            e.push(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction));
        }
        let slot_ok = |s: u8| (s as usize) < self.slots;
        for (slot, spec) in &self.deploy {
            if !slot_ok(*slot) {
                e.push(format!("deploy: slot {slot} out of range"));
            }
            if !self.specs.contains_key(spec) {
                e.push(format!("deploy: unknown spec '{spec}'"));
            }
        }
        for (lane, vid, a) in &self.ingress {
            if (*lane as usize) >= LANE_COUNT || *lane == crate::types::VTX_LANE {
                e.push(format!("ingress: lane {lane} cannot receive"));
            }
            if !is_valid_vid(*vid) {
                e.push(format!("ingress: invalid vid {vid}"));
            }
            if let IngressAction::Forward(d) = a {
                if !slot_ok(d.0) {
                    e.push(format!("ingress: slot {} out of range", d.0));
                }
            }
        }
        for (vid, slot, a) in &self.egress {
            if !is_valid_vid(*vid) {
                e.push(format!("egress: invalid vid {vid}"));
            }
            if !slot_ok(*slot) {
                e.push(format!("egress: slot {slot} out of range"));
            }
            if let EgressAction::Forward(m) = a {
                if *m == 0 || m & !TX_LANE_MASK != 0 {
                    e.push(format!("egress: vid {vid} slot {slot} has no valid transmit lanes"));
                }
            }
        }
        let mut per_lane = BTreeMap::<u8, f64>::new();
        for (i, t) in self.traffic.iter().enumerate() {
            if (t.lane as usize) >= self.lanes {
                e.push(format!("traffic[{i}]: lane {} not among the {} active lanes", t.lane, self.lanes));
            }
            if !(t.rate_gbps > 0.0 && t.rate_gbps <= 100.0) {
                e.push(format!("traffic[{i}]: rate {} Gbps outside (0, 100]", t.rate_gbps));
            }
            *per_lane.entry(t.lane).or_default() += t.rate_gbps;
            if t.flows.is_empty() {
                e.push(format!("traffic[{i}]: no vids"));
            }
            if let Some(v) = t.vids().find(|v| !is_valid_vid(*v)) {
                e.push(format!("traffic[{i}]: invalid vid {v}"));
            }
            if !t.size.is_valid() {
                e.push(format!("traffic[{i}]: packet sizes {:?} outside 64..=9216", t.size.bounds()));
            }
        }
        for (lane, r) in per_lane {
            if r > 100.0 + 1e-9 {
                e.push(format!("lane {lane}: offered {r} Gbps exceeds 100"));
            }
        }
        for (at, cmd) in &self.control {
            if *at >= self.duration {
                e.push(format!("control '{cmd}' at {at} ps is not before the end of the run"));
            }
            if cmd.trim().is_empty() {
                e.push("control: empty command".to_string());
            }
        }
        for r in &self.reconfig {
            if r.at >= self.duration {
                e.push(format!("reconfig of slot {} is not before the end of the run", r.slot));
            }
            if !slot_ok(r.slot) {
                e.push(format!("reconfig: slot {} out of range", r.slot));
            }
            if let Some(spec) = &r.spec {
                if !self.specs.contains_key(spec) {
                    e.push(format!("reconfig: unknown spec '{spec}'"));
                }
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(e))
        }
    }

    /// Offered wire bits per second over all profiles, in Gbps.
    pub fn offered_gbps(&self) -> f64 {
        self.traffic.iter().map(|t| t.rate_gbps).sum()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn parse_mac(s: &str) -> Option<[u8; 6]> {
    let parts: Vec<u8> = s.split(':').map(|b| u8::from_str_radix(b, 16).ok()).collect::<Option<_>>()?;
    parts.try_into().ok()
}

pub fn parse_ip(s: &str) -> Option<u32> {
    let parts: Vec<u8> = s.split('.').map(|b| b.parse().ok()).collect::<Option<_>>()?;
    Some(u32::from_be_bytes(parts.try_into().ok()?))
}

/// Line rate of one packet size, for callers computing expected rates.
pub fn packet_time(rate_gbps: f64, frame_len: usize) -> Picos {
    Rate::from_gbps(rate_gbps).serialization(wire_bits(frame_len))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: Option<u64>,
    duration: String,
    lanes: Option<usize>,
    slots: Option<usize>,
    warmup_fraction: Option<f64>,
    loop_limit: Option<u8>,
    capacity: Option<FabricCapacity>,
    #[serde(default)]
    policy: PolicyConfig,
    balanced: Option<BalancedFile>,
    #[serde(default)]
    specs: Vec<SpecSource>,
    #[serde(default)]
    deploy: Vec<DeployFile>,
    #[serde(default)]
    ingress: Vec<IngressFile>,
    #[serde(default)]
    egress: Vec<EgressFile>,
    #[serde(default)]
    setup: Vec<String>,
    #[serde(default)]
    traffic: Vec<TrafficFile>,
    #[serde(default)]
    control: Vec<ControlFile>,
    #[serde(default)]
    reconfig: Vec<ReconfigFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BalancedFile {
    spec: String,
    rate_gbps: Option<f64>,
    #[serde(default)]
    size: SizeDist,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecSource {
    inline: Option<String>,
    path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeployFile {
    slot: u8,
    spec: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngressFile {
    lane: u8,
    vid: u16,
    vs: Option<u8>,
    #[serde(default)]
    drop: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgressFile {
    vid: u16,
    vs: u8,
    lanes: Option<Vec<u8>>,
    #[serde(default)]
    drop: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrafficFile {
    lane: u8,
    vids: Vec<u16>,
    rate_gbps: f64,
    #[serde(default)]
    size: SizeDist,
    #[serde(default)]
    arrivals: Arrivals,
    #[serde(default)]
    selection: Selection,
    dst_mac: Option<String>,
    src_mac: Option<String>,
    dst_ip: Option<String>,
    src_ip: Option<String>,
    sport: Option<u16>,
    dport: Option<u16>,
    start: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlFile {
    at: String,
    command: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconfigFile {
    at: String,
    slot: u8,
    spec: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_layout() {
        let s = Scenario::balanced("int", 16, 11, 100.0, SizeDist::Fixed(1518), 1_000_000).unwrap();
        assert_eq!(s.traffic.len(), 16);
        assert!(s.traffic.iter().all(|t| t.flows.len() == 11));
        assert_eq!(s.ingress.len(), 176);
        assert_eq!(s.deploy.len(), 11);
        // Global arrival g = 16k + L goes to slot g mod 11.
        for (l, t) in s.traffic.iter().enumerate() {
            for (k, f) in t.flows.iter().enumerate() {
                let (_, _, a) = s.ingress.iter().find(|(ll, v, _)| *ll as usize == l && *v == f.vlan.vid).unwrap();
                assert_eq!(*a, IngressAction::Forward(crate::types::DeviceId(((16 * k + l) % 11) as u8)));
            }
        }
        s.validate().unwrap();
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = r#"
            duration = "1ms"
            lanes = 40
            deploy = [{ slot = 30, spec = "nope" }]
            traffic = [{ lane = 0, vids = [5000], rate_gbps = 120.0 }]
        "#;
        let Err(ScenarioError::Invalid(e)) = Scenario::parse(text, None) else { panic!() };
        assert!(e.len() >= 5, "{e:?}");
        for needle in ["lanes 40", "slot 30", "unknown spec", "vid 5000", "rate 120"] {
            assert!(e.iter().any(|m| m.contains(needle)), "missing {needle} in {e:?}");
        }
    }

    #[test]
    fn parses_full_file() {
        let text = r#"
            seed = 9
            duration = "200us"
            lanes = 2
            slots = 2
            setup = ["vs 0 table l2 add 02:00:00:00:00:02 action=forward port=1"]
            [policy]
            mode = "partial"
            partial_slot_budget = { luts = 66462, ffs = 132924, brams = 104 }
            [[deploy]]
            slot = 0
            spec = "l2_switch"
            [[ingress]]
            lane = 0
            vid = 10
            vs = 0
            [[egress]]
            vid = 10
            vs = 0
            lanes = [1]
            [[traffic]]
            lane = 0
            vids = [10]
            rate_gbps = 10.0
            size = { uniform = [64, 1518] }
            arrivals = "poisson"
            [[control]]
            at = "50us"
            command = "stats"
            [[reconfig]]
            at = "100us"
            slot = 1
            spec = "l2_switch"
        "#;
        let s = Scenario::parse(text, None).unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.traffic[0].size, SizeDist::Uniform(64, 1518));
        assert_eq!(s.egress[0].2, EgressAction::Forward(0b10));
        assert_eq!(s.reconfig[0].at, 100_000_000);
    }
}

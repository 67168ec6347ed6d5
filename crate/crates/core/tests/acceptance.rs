//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsa_core::estimator::{
    max_instances, platform_bottleneck, tbps_2dp, throughput_report, FabricCapacity, Layer, LayerRates,
};
use vsa_core::fabric::{
    build_inventory, plan_tiling, MacroConstraints, Storage, LANE_FIFO_DEPTH, LANE_FIFO_WIDTH, VS_FIFO_DEPTH,
    VS_FIFO_WIDTH,
};
use vsa_core::frame::mac_from_u64;
use vsa_core::mgmt::{cli_session, ControlFrame, Opcode, Target, FRAME_BYTES};
use vsa_core::pipeline::{
    builtin_spec, builtin_specs, EntryAction, MatchKey, PacketContext, PipelineOutcome, VsInstance,
};
use vsa_core::reconfig::{ReconfigMode, SlotStatus};
use vsa_core::sim::{run, run_many, spawn_engine, Engine, RunResult, Scenario, SizeDist, TraceRecord, TrafficProfile};
use vsa_core::steering::{EgressAction, IngressAction, SteeringTables};
use vsa_core::types::{parse_vlan, DeviceId, LaneId, Packet, MAX_SLOTS, PS_PER_MS, PS_PER_US};

/// Relative goodput tolerance for the saturation runs.
const GOODPUT_TOL: f64 = 0.02;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    ((got - want) / want).abs() <= tol
}

fn conserved(r: &RunResult) -> Result<(), String> {
    let v = r.metrics.conservation_violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v.join("; "))
    }
}

fn capacity() -> Outcome {
    let cap = FabricCapacity::default();
    let want = [("l2_switch", 26), ("firewall", 17), ("router", 14), ("int", 11)];
    let mut got = Vec::new();
    for (name, n) in want {
        let m = max_instances(&builtin_spec(name).unwrap().footprint, &cap);
        got.push(format!("{name}={m}"));
        if m != n {
            return Err(format!("{name}: {m} instances, expected {n}"));
        }
    }
    Ok(got.join(" "))
}

fn throughput_table() -> Outcome {
    let rates = LayerRates::default();
    let cap = FabricCapacity::default();
    // Range endpoints: 11 int and 26 l2_switch instances at their rated throughput.
    let fpga_min = 11.0 * 129.61;
    let fpga_max = 26.0 * 132.63;
    let specs = builtin_specs();
    let full: Vec<f64> = specs.values().map(|s| max_instances(&s.footprint, &cap) as f64 * s.rate_gbps).collect();
    let lo = full.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = full.iter().copied().fold(0.0, f64::max);
    let l2: Vec<_> = std::iter::repeat_n(builtin_spec("l2_switch").unwrap(), 26).collect();
    let platform = platform_bottleneck(&rates, &l2);
    let rows = [
        ("phy", tbps_2dp(rates.phy_total()), 3.20),
        ("asic", tbps_2dp(rates.asic_total()), 3.30),
        ("fpga_min", tbps_2dp(lo), 1.43),
        ("fpga_min_reference", tbps_2dp(fpga_min), 1.43),
        ("fpga_max", tbps_2dp(hi), 3.45),
        ("fpga_max_reference", tbps_2dp(fpga_max), 3.45),
        ("platform", tbps_2dp(platform.gbps), 3.20),
    ];
    for (name, got, want) in rows {
        if (got - want).abs() > 1e-9 {
            return Err(format!("{name}: {got:.2} Tbps, expected {want:.2}"));
        }
    }
    if platform.layers != vec![Layer::Physical] {
        return Err(format!("platform bottleneck {:?}, expected Physical", platform.layers));
    }
    let report = throughput_report(&rates, &cap, None);
    for needle in ["3.20 Tbps", "3.30 Tbps", "1.43-3.45 Tbps", "11-26"] {
        if !report.contains(needle) {
            return Err(format!("report lacks '{needle}'"));
        }
    }
    Ok("PHY 3.20, ASIC 3.30, FPGA 1.43-3.45, platform 3.20 Tbps".into())
}

fn saturation() -> Outcome {
    let sc = Scenario::balanced("l2_switch", 32, 26, 100.0, SizeDist::Fixed(1518), PS_PER_MS).unwrap();
    let t = Instant::now();
    let r = run(sc).map_err(|e| e.to_string())?;
    conserved(&r)?;
    let g = r.metrics.goodput_gbps();
    check(
        within(g, 3200.0, GOODPUT_TOL) && r.metrics.window_len() >= 900 * PS_PER_US,
        format!("goodput {g:.3} Gbps vs 3200 +/-2%, {:.1} s wall", t.elapsed().as_secs_f64()),
    )
}

fn fpga_limited() -> Outcome {
    let sc = Scenario::balanced("int", 16, 11, 100.0, SizeDist::Fixed(1518), PS_PER_MS).unwrap();
    let r = run(sc).map_err(|e| e.to_string())?;
    conserved(&r)?;
    let m = &r.metrics;
    let g = m.goodput_gbps();
    let measured = m.measured_bottleneck();
    check(
        within(g, 1425.7, GOODPUT_TOL) && measured == Some(Layer::Fpga) && m.estimate.layers == vec![Layer::Fpga],
        format!("goodput {g:.3} Gbps vs 1425.7 +/-2%, measured {measured:?}, estimated {:?}", m.estimate.layers),
    )
}

fn fifo_inventory() -> Outcome {
    let inv = build_inventory(26, 32, 2).map_err(|e| e.to_string())?;
    let bits: u64 = inv.iter().map(|f| f.capacity_bits()).sum();
    // 52 vS FIFOs of 52 x 289 and 66 lane FIFOs of 66 x 417.
    let oracle = 52 * 52 * 289 + 66 * 66 * 417;
    let c = MacroConstraints::default();
    let lane = plan_tiling(LANE_FIFO_DEPTH, LANE_FIFO_WIDTH, &c).map_err(|e| e.to_string())?;
    let vs = plan_tiling(VS_FIFO_DEPTH, VS_FIFO_WIDTH, &c).map_err(|e| e.to_string())?;
    let lane_ok = lane.fallback.is_none()
        && lane.macros.len() == 1
        && (lane.macros[0].depth, lane.macros[0].width, lane.macros[0].count) == (64, 144, 3);
    let vs_ok = vs.storage() == Storage::Flipflop && vs.macros.is_empty();
    check(
        inv.len() == 118 && bits == 2_597_908 && bits == oracle && lane_ok && vs_ok,
        format!(
            "{} fifos, {bits} bits, lane fifo {} x{}, vS fifo {}",
            inv.len(),
            lane.geometry_label(),
            lane.total_macro_instances,
            vs.storage().as_str()
        ),
    )
}

/// A random small platform: steering entries, l2 tables, offered flows.
fn isolation_case(seed: u64) -> (Scenario, SteeringTables) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.gen_range(1..=4usize);
    let lanes = rng.gen_range(1..=4usize);
    let vids = [100u16, 101, 102, 103];
    let mut sc = Scenario::new(2 * PS_PER_US);
    sc.seed = seed;
    sc.slots = slots;
    sc.lanes = lanes;
    sc.record_trace = true;
    let mut oracle = SteeringTables::new(slots);
    for s in 0..slots as u8 {
        sc.deploy.push((s, "l2_switch".into()));
        for vid in vids {
            let ports: Vec<String> = (0..6).filter(|_| rng.gen_bool(0.4)).map(|p: u8| p.to_string()).collect();
            if !ports.is_empty() {
                sc.setup.push(format!("vs {s} table vlan_members add {vid} action=port_set ports={}", ports.join(",")));
            }
        }
        for m in 0..4u64 {
            if rng.gen_bool(0.5) {
                let port = if rng.gen_bool(0.15) { 33 } else { rng.gen_range(0..6u8) };
                let mac = mac_from_u64(0x02_00_00_00_00_00 | m);
                let mac: Vec<String> = mac.iter().map(|b| format!("{b:02x}")).collect();
                sc.setup.push(format!("vs {s} table l2 add {} action=forward port={port}", mac.join(":")));
            }
        }
    }
    let rx_lanes: Vec<u8> = (0..lanes as u8).chain([32]).collect();
    for &lane in &rx_lanes {
        for vid in vids {
            let a = match rng.gen_range(0..4) {
                0 => continue,
                1 => IngressAction::Drop,
                _ => IngressAction::Forward(DeviceId(rng.gen_range(0..slots as u8))),
            };
            sc.ingress.push((lane, vid, a));
            oracle.ingress_add(LaneId(lane), vid, a).unwrap();
        }
    }
    for s in 0..slots as u8 {
        for vid in vids {
            let a = match rng.gen_range(0..4) {
                0 => continue,
                1 => EgressAction::Drop,
                _ => {
                    let mut mask = 0u64;
                    while mask == 0 {
                        mask = (0..6).filter(|_| rng.gen_bool(0.3)).fold(0, |m, p| m | 1 << p);
                        if rng.gen_bool(0.2) {
                            mask |= 1 << 33;
                        }
                    }
                    EgressAction::Forward(mask)
                }
            };
            sc.egress.push((vid, s, a));
            oracle.egress_add(vid, DeviceId(s), a).unwrap();
        }
    }
    for lane in 0..lanes as u8 {
        let mut p = TrafficProfile::new(lane, &vids[..rng.gen_range(1..=4)], rng.gen_range(10.0..100.0));
        for f in &mut p.flows {
            f.src_mac = mac_from_u64(0x02_00_00_00_00_00 | rng.gen_range(0..4u64));
            f.dst_mac = mac_from_u64(0x02_00_00_00_00_00 | rng.gen_range(0..5u64));
        }
        p.size = SizeDist::Imix;
        sc.traffic.push(p);
    }
    (sc, oracle)
}

fn isolation_violations(r: &RunResult, oracle: &SteeringTables) -> Vec<String> {
    let mut bad = Vec::new();
    for t in &r.trace {
        match t {
            TraceRecord::SlotEntry { slot, lane, vid, id, .. } => {
                if oracle.ingress_lookup(LaneId(*lane), *vid) != Some(IngressAction::Forward(DeviceId(*slot))) {
                    bad.push(format!("packet {id} entered slot {slot} from lane {lane} vid {vid}"));
                }
            }
            TraceRecord::Delivered { lane, slot, id, frame, .. } => {
                let vid = parse_vlan(frame).map(|v| v.vid);
                let allowed = match (slot, vid) {
                    (Some(s), Some(v)) => match oracle.egress_lookup(v, DeviceId(*s)) {
                        Some(EgressAction::Forward(m)) => m & (1 << lane) != 0,
                        _ => false,
                    },
                    _ => false,
                };
                if !allowed {
                    bad.push(format!("packet {id} left on lane {lane} from slot {slot:?} vid {vid:?}"));
                }
            }
        }
    }
    bad
}

fn isolation() -> Outcome {
    const CASES: u64 = 10_000;
    let mut violations = 0usize;
    let mut first = None;
    let (mut entries, mut deliveries) = (0usize, 0usize);
    for chunk in (0..CASES).collect::<Vec<_>>().chunks(500) {
        let (scs, oracles): (Vec<_>, Vec<_>) = chunk.iter().map(|s| isolation_case(*s)).unzip();
        for (r, oracle) in run_many(scs).into_iter().zip(&oracles) {
            let r = r.map_err(|e| e.to_string())?;
            conserved(&r)?;
            let bad = isolation_violations(&r, oracle);
            violations += bad.len();
            if first.is_none() {
                first = bad.into_iter().next();
            }
            for t in &r.trace {
                match t {
                    TraceRecord::SlotEntry { .. } => entries += 1,
                    TraceRecord::Delivered { .. } => deliveries += 1,
                }
            }
        }
    }
    check(
        violations == 0 && entries > 0 && deliveries > 0,
        format!(
            "{CASES} cases, {entries} slot entries, {deliveries} deliveries, {violations} violations{}",
            first.map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn mac(last: u8) -> String {
    format!("02:00:00:00:01:{last:02x}")
}

/// Four L2 slots, each on its own RX and TX lane.
fn disjoint_platform(spec: &str) -> Scenario {
    let mut sc = Scenario::new(200 * PS_PER_US);
    sc.slots = 4;
    sc.lanes = 4;
    sc.record_trace = true;
    for s in 0..4u8 {
        let vid = 100 + s as u16;
        sc.deploy.push((s, spec.into()));
        sc.ingress.push((s, vid, IngressAction::Forward(DeviceId(s))));
        sc.egress.push((vid, s, EgressAction::Forward(1 << (8 + s))));
        let mut p = TrafficProfile::new(s, &[vid], 90.0);
        p.size = SizeDist::Imix;
        p.arrivals = vsa_core::sim::Arrivals::Poisson;
        p.flows[0].dst_mac = mac_from_u64(0x02_00_00_00_01_00 | s as u64);
        p.flows[0].dst_ip = 0x0a01_0000 | s as u32;
        sc.traffic.push(p);
        match spec {
            "l2_switch" => sc.setup.push(format!("vs {s} table l2 add {} action=forward port={}", mac(s), 8 + s)),
            _ => sc.setup.push(format!("vs {s} table ipv4_lpm add 10.1.0.0/16 action=forward port={}", 8 + s)),
        }
    }
    sc
}

fn trace_without(r: &RunResult, slot: u8) -> Vec<TraceRecord> {
    r.trace
        .iter()
        .filter(|t| match t {
            TraceRecord::SlotEntry { slot: s, .. } => *s != slot,
            TraceRecord::Delivered { slot: s, .. } => *s != Some(slot),
        })
        .cloned()
        .collect()
}

fn hot_swap() -> Outcome {
    let base = disjoint_platform("l2_switch");
    let mut swap = base.clone();
    swap.policy.mode = ReconfigMode::Partial;
    swap.policy.partial_reconfig_time = 20 * PS_PER_US;
    swap.reconfig.push(vsa_core::sim::ReconfigAction { at: 60 * PS_PER_US, slot: 2, spec: Some("l2_switch".into()) });
    let a = run(base).map_err(|e| e.to_string())?;
    let b = run(swap).map_err(|e| e.to_string())?;
    conserved(&a)?;
    conserved(&b)?;
    let (ta, tb) = (trace_without(&a, 2), trace_without(&b, 2));
    let swapped_changed = a.trace.len() != b.trace.len() || a.trace != b.trace;
    if ta != tb || !swapped_changed || ta.is_empty() {
        return Err(format!(
            "partial: {} vs {} records on untouched slots, swapped slot changed: {swapped_changed}",
            ta.len(),
            tb.len()
        ));
    }

    let mut full = disjoint_platform("router");
    full.policy.mode = ReconfigMode::Full;
    full.policy.full_reconfig_time = 20 * PS_PER_US;
    full.reconfig.push(vsa_core::sim::ReconfigAction { at: 60 * PS_PER_US, slot: 1, spec: Some("router".into()) });
    let mut e = Engine::new(full).map_err(|e| e.to_string())?;
    e.run_until(59 * PS_PER_US);
    let busy_before = (0..4u8).any(|s| e.vs_occupancy(s) != (0, 0));
    let mut bad = Vec::new();
    for t in [60 * PS_PER_US, 70 * PS_PER_US, 81 * PS_PER_US, 150 * PS_PER_US] {
        e.run_until(t);
        for s in 0..4u8 {
            let during = t < 80 * PS_PER_US;
            if during && e.vs_occupancy(s) != (0, 0) {
                bad.push(format!("slot {s} holds {:?} words at {t} ps", e.vs_occupancy(s)));
            }
            let slot = e.slots().slot(s as usize);
            match (&slot.status, during) {
                (SlotStatus::Reconfiguring { .. }, true) => {}
                (SlotStatus::Active { instance, .. }, false) => {
                    let n: usize = instance.tables.iter().map(|t| t.entries.len()).sum();
                    if n != 0 {
                        bad.push(format!("slot {s} has {n} table entries after full reconfiguration"));
                    }
                }
                (_, _) => bad.push(format!("slot {s} in state {} at {t} ps", slot.label())),
            }
        }
    }
    e.run_until(u64::MAX);
    let r = e.finish();
    conserved(&r)?;
    check(
        bad.is_empty() && busy_before,
        format!(
            "{} untouched-slot records identical; full reconfig {}",
            ta.len(),
            bad.first().cloned().unwrap_or("clean".into())
        ),
    )
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("vsa-acceptance-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn dir_bytes(d: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for f in std::fs::read_dir(d).unwrap() {
        let f = f.unwrap();
        out.insert(f.file_name().to_string_lossy().into_owned(), std::fs::read(f.path()).unwrap());
    }
    out
}

fn conservation_determinism() -> Outcome {
    let mut scenarios = Vec::new();
    for (spec, lanes, slots) in [("l2_switch", 8, 5), ("firewall", 12, 7), ("router", 6, 14), ("int", 16, 11)] {
        let mut sc = Scenario::balanced(spec, lanes, slots, 100.0, SizeDist::Imix, 50 * PS_PER_US).unwrap();
        sc.traffic.iter_mut().for_each(|t| t.arrivals = vsa_core::sim::Arrivals::Poisson);
        sc.log_events = true;
        scenarios.push(sc);
    }
    let mut swap = disjoint_platform("l2_switch");
    swap.policy.mode = ReconfigMode::Partial;
    swap.reconfig.push(vsa_core::sim::ReconfigAction { at: 30 * PS_PER_US, slot: 0, spec: None });
    swap.control.push((40 * PS_PER_US, format!("vs 1 table l2 del {}", mac(1))));
    swap.log_events = true;
    scenarios.push(swap);
    let mut files = 0;
    for (i, sc) in scenarios.into_iter().enumerate() {
        let a = run(sc.clone()).map_err(|e| e.to_string())?;
        let b = run(sc).map_err(|e| e.to_string())?;
        conserved(&a)?;
        let (da, db) = (scratch_dir(&format!("{i}a")), scratch_dir(&format!("{i}b")));
        a.metrics.write_dir(&da, a.event_log.as_deref()).map_err(|e| e.to_string())?;
        b.metrics.write_dir(&db, b.event_log.as_deref()).map_err(|e| e.to_string())?;
        let (fa, fb) = (dir_bytes(&da), dir_bytes(&db));
        let _ = (std::fs::remove_dir_all(&da), std::fs::remove_dir_all(&db));
        if fa != fb {
            let diff: Vec<_> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).cloned().collect();
            return Err(format!("scenario {i}: files differ: {diff:?}"));
        }
        let m = &a.metrics.totals;
        if m.injected.packets + m.replicated != m.delivered.packets + m.dropped() || m.in_flight() != 0 {
            return Err(format!("scenario {i}: injected + replicated != delivered + dropped"));
        }
        files += fa.len();
    }
    Ok(format!("5 scenarios conserved, {files} metric files byte-identical across reruns"))
}

const GOLDEN_SCENARIO: &str = "../../scenarios/shell_demo.toml";
const GOLDEN_SCRIPT: &str = "../../scenarios/shell_demo.cli";
const GOLDEN_TRANSCRIPT: &str = "tests/golden/shell_session.txt";

fn management() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut frames = 0u64;
    for op in Opcode::ALL {
        for t in (0..MAX_SLOTS as u8).map(Target::Slot).chain([Target::Ipi, Target::Opi]) {
            for rid in 0..=255u8 {
                for payload in [0, 1, u128::MAX, rng.gen()] {
                    let f = ControlFrame::new(op, t, rid, payload);
                    if ControlFrame::decode(&f.encode()) != Ok(f) {
                        return Err(format!("round trip failed for {f:?}"));
                    }
                    frames += 1;
                }
            }
        }
    }
    for _ in 0..100_000 {
        let op = Opcode::ALL[rng.gen_range(0..Opcode::ALL.len())];
        let t = match rng.gen_range(0..28u8) {
            26 => Target::Ipi,
            27 => Target::Opi,
            s => Target::Slot(s),
        };
        let f = ControlFrame::new(op, t, rng.gen(), rng.gen());
        if ControlFrame::decode(&f.encode()) != Ok(f) {
            return Err(format!("round trip failed for {f:?}"));
        }
        frames += 1;
    }
    // Every byte string either decodes to a frame that re-encodes to it, or is rejected.
    for _ in 0..100_000 {
        let mut b = [0u8; FRAME_BYTES];
        rng.fill(&mut b[..]);
        b[0] &= 0x03;
        if let Ok(f) = ControlFrame::decode(&b) {
            if f.encode() != b {
                return Err(format!("decode/encode mismatch for {b:02x?}"));
            }
        }
    }

    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let script = std::fs::File::open(root.join(GOLDEN_SCRIPT)).map_err(|e| e.to_string())?;
    let golden = std::fs::read_to_string(root.join(GOLDEN_TRANSCRIPT)).map_err(|e| e.to_string())?;
    let sc = Scenario::from_file(&root.join(GOLDEN_SCENARIO)).map_err(|e| e.to_string())?;
    let engine = Engine::new(sc).map_err(|e| e.to_string())?;
    let (mut host, handle) = spawn_engine(engine);
    let mut out = Vec::new();
    cli_session(BufReader::new(script), &mut host, &mut out, true).map_err(|e| e.to_string())?;
    drop(host);
    handle.join().map_err(|_| "engine thread panicked".to_string())?;
    let got = String::from_utf8(out).map_err(|e| e.to_string())?;
    if got != golden {
        let line = got
            .lines()
            .zip(golden.lines())
            .position(|(a, b)| a != b)
            .unwrap_or(got.lines().count().min(golden.lines().count()));
        return Err(format!("transcript differs from golden at line {}", line + 1));
    }
    Ok(format!("{frames} frames round-tripped, golden transcript of {} lines matched", golden.lines().count()))
}

fn ctx() -> PacketContext {
    PacketContext { ingress_ts: 0, egress_ts: 0, queue_bits: 0 }
}

fn ports(out: &PipelineOutcome) -> Vec<u8> {
    match out {
        PipelineOutcome::Emit(v) => v.iter().map(|(_, m)| m.port.0).collect(),
        PipelineOutcome::Drop(_) => Vec::new(),
    }
}

fn pipeline_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let router = builtin_spec("router").unwrap();
    let mut probes = 0;
    for table in 0..1000 {
        let mut vs = VsInstance::new(&router, DeviceId(0)).unwrap();
        let mut routes: HashMap<(u32, u8), u8> = HashMap::new();
        let bases: Vec<u32> = (0..4).map(|_| rng.gen()).collect();
        for _ in 0..rng.gen_range(1..64) {
            let len = rng.gen_range(0..=32u8);
            let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
            let v = (bases[rng.gen_range(0..4)] ^ (rng.gen::<u32>() >> rng.gen_range(0..32))) & mask;
            let port = rng.gen_range(0..32u8);
            vs.table_write(0, MatchKey::Lpm { value: v as u128, prefix_len: len }, EntryAction::Forward(port)).unwrap();
            routes.insert((v, len), port);
        }
        for _ in 0..50 {
            let dst = bases[rng.gen_range(0..4)] ^ (rng.gen::<u32>() >> rng.gen_range(0..33).min(31));
            let want = routes
                .iter()
                .filter(|((v, len), _)| *len == 0 || dst >> (32 - len) == v >> (32 - len))
                .max_by_key(|((_, len), _)| *len)
                .map(|(_, p)| vec![*p])
                .unwrap_or_default();
            let mut t = vsa_core::frame::FrameTemplate::new(10);
            t.dst_ip = dst;
            let pkt = Packet::new(0, t.build(128, 0), LaneId(0), 0);
            let got = ports(&vs.process_packet(pkt, &ctx()).unwrap());
            if got != want {
                return Err(format!("table {table}: dst {dst:#010x} -> {got:?}, brute force {want:?}"));
            }
            probes += 1;
        }
    }

    let l2 = builtin_spec("l2_switch").unwrap();
    let learn_cap = l2.stages.iter().find(|s| s.table_id == 1).unwrap().capacity;
    let mut packets = 0;
    for seq in 0..200 {
        let mut vs = VsInstance::new(&l2, DeviceId(0)).unwrap();
        let members: u64 = rng.gen_range(0..1u64 << 8);
        vs.table_write(2, MatchKey::Exact(7), EntryAction::PortSet(members)).unwrap();
        let mut learned: HashMap<u64, u8> = HashMap::new();
        let pool = rng.gen_range(2..40u64);
        for _ in 0..300 {
            let src = 0x02_00_00_00_00_00 | rng.gen_range(0..pool);
            let dst = 0x02_00_00_00_00_00 | rng.gen_range(0..pool + 4);
            let lane = rng.gen_range(0..8u8);
            if learned.contains_key(&src) || learned.len() < learn_cap {
                learned.insert(src, lane);
            }
            let want = match learned.get(&dst) {
                Some(p) => vec![*p],
                None => (0..8u8).filter(|p| members & (1 << p) != 0 && *p != lane).collect(),
            };
            let mut t = vsa_core::frame::FrameTemplate::new(7);
            t.src_mac = mac_from_u64(src);
            t.dst_mac = mac_from_u64(dst);
            let got = ports(&vs.process_packet(Packet::new(0, t.build(64, 0), LaneId(lane), 0), &ctx()).unwrap());
            if got != want {
                return Err(format!(
                    "sequence {seq}: {src:x}->{dst:x} on lane {lane} went to {got:?}, oracle {want:?}"
                ));
            }
            packets += 1;
        }
        let table: BTreeMap<u64, u8> = vs.tables[1]
            .entries
            .entries()
            .into_iter()
            .map(|(k, a)| match (k, a) {
                (MatchKey::Exact(k), EntryAction::Forward(p)) => (k as u64, *p),
                other => panic!("unexpected learned entry {other:?}"),
            })
            .collect();
        if table != learned.into_iter().collect::<BTreeMap<_, _>>() {
            return Err(format!("sequence {seq}: learned table differs from oracle map"));
        }
    }
    Ok(format!("{probes} LPM probes over 1000 tables, {packets} L2 packets over 200 sequences agree"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("capacity", capacity),
        ("throughput_table", throughput_table),
        ("saturation", saturation),
        ("fpga_limited", fpga_limited),
        ("fifo_inventory", fifo_inventory),
        ("isolation", isolation),
        ("hot_swap", hot_swap),
        ("conservation_determinism", conservation_determinism),
        ("management", management),
        ("pipeline_oracles", pipeline_oracles),
    ];
    let filter: BTreeSet<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d}) [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

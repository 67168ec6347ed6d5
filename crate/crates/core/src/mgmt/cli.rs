//! Operator command line. A thin client: every table or register command
//! becomes control frames sent through a [`Host`]; nothing reaches into
//! platform state directly.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use super::codec::{ControlFrame, NackReason, Opcode, Target};
use super::schema::*;
use crate::frame::{mac_from_u64, mac_to_u64};
use crate::pipeline::{mask_to_ports, prefix_mask, MatchKey, MatchKind, PipelineSpec};
use crate::steering::lane_list;
use crate::types::{parse_duration, Picos, LANE_COUNT};

/// The far side of the management channel.
pub trait Host {
    /// Sends one request frame on the inbound channel and waits for its reply.
    fn send(&mut self, frame: ControlFrame) -> ControlFrame;
    /// Pipeline deployed in a slot, used to lay out table payloads.
    fn driver_info(&mut self, slot: u8) -> Option<PipelineSpec>;
    fn stats(&mut self) -> String;
    fn deploy(&mut self, slot: u8, spec: &str) -> Result<String, String>;
    fn undeploy(&mut self, slot: u8) -> Result<String, String>;
    fn run(&mut self, duration: Picos) -> Result<String, String>;
}

pub const HELP: &str = "\
commands:
  ingress add lane=<n> vid=<v> vs=<id>|drop
  ingress del lane=<n> vid=<v>
  ingress dump
  egress add vid=<v> vs=<id> lanes=<a,b,..>|drop
  egress del vid=<v> vs=<id>
  egress dump
  vs <id> table <name> add <key..> [priority=<p>] action=forward port=<n>|drop|no_op|port_set ports=<a,b,..>
  vs <id> table <name> del <key..> [priority=<p>]
  vs <id> table <name> dump
  vs <id> reg <i> read
  vs <id> reg <i> write <value>
  stats
  deploy <slot> <spec>
  undeploy <slot>
  run <duration>
  help";

const USAGE_INGRESS: &str = "usage: ingress add|del lane=<n> vid=<v> [vs=<id>|drop] | ingress dump";
const USAGE_EGRESS: &str = "usage: egress add|del vid=<v> vs=<id> [lanes=<list>|drop] | egress dump";
const USAGE_VS: &str = "usage: vs <id> table <name> add|del|dump .. | vs <id> reg <i> read|write <v>";

struct Args<'a> {
    words: Vec<&'a str>,
    kv: BTreeMap<&'a str, &'a str>,
}

fn split<'a>(tokens: &[&'a str]) -> Args<'a> {
    let mut words = Vec::new();
    let mut kv = BTreeMap::new();
    for t in tokens {
        match t.split_once('=') {
            Some((k, v)) => {
                kv.insert(k, v);
            }
            None => words.push(*t),
        }
    }
    Args { words, kv }
}

fn num<T: TryFrom<u64>>(s: &str) -> Option<T> {
    let v = match s.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16).ok()?,
        None => s.parse::<u64>().ok()?,
    };
    T::try_from(v).ok()
}

fn list(s: &str) -> Option<Vec<u8>> {
    s.split([',', ';']).filter(|p| !p.is_empty()).map(num::<u8>).collect()
}

fn status(reply: &ControlFrame) -> String {
    match reply.opcode {
        Opcode::Ack => "ok".into(),
        Opcode::Nack => format!("error: {}", reply.nack_reason().map_or("protocol", NackReason::as_str)),
        _ => "error: unexpected reply".into(),
    }
}

/// Executes one command line. Blank lines and `#` comments yield `None`.
pub fn cli_line(line: &str, host: &mut dyn Host) -> Option<String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return None;
    }
    let tokens: Vec<&str> = line.split_whitespace().collect();
    Some(match tokens[0] {
        "help" => HELP.to_string(),
        "ingress" => ingress(&tokens[1..], host).unwrap_or_else(|| USAGE_INGRESS.into()),
        "egress" => egress(&tokens[1..], host).unwrap_or_else(|| USAGE_EGRESS.into()),
        "vs" => vs(&tokens[1..], host).unwrap_or_else(|| USAGE_VS.into()),
        "stats" if tokens.len() == 1 => host.stats(),
        "deploy" => match (tokens.get(1).and_then(|s| num::<u8>(s)), tokens.get(2), tokens.len()) {
            (Some(slot), Some(spec), 3) => host.deploy(slot, spec).unwrap_or_else(|e| format!("error: {e}")),
            _ => "usage: deploy <slot> <spec>".into(),
        },
        "undeploy" => match (tokens.get(1).and_then(|s| num::<u8>(s)), tokens.len()) {
            (Some(slot), 2) => host.undeploy(slot).unwrap_or_else(|e| format!("error: {e}")),
            _ => "usage: undeploy <slot>".into(),
        },
        "run" => match (tokens.get(1).map(|s| parse_duration(s)), tokens.len()) {
            (Some(Ok(d)), 2) => host.run(d).unwrap_or_else(|e| format!("error: {e}")),
            _ => "usage: run <duration>".into(),
        },
        _ => format!("unknown command '{}'; try help", tokens[0]),
    })
}

/// Runs a script or interactive stream. With `echo`, each command is
/// printed after a `> ` prompt, which makes transcripts self-describing.
pub fn cli_session<R: BufRead, W: Write>(input: R, host: &mut dyn Host, out: &mut W, echo: bool) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if echo && !line.trim().is_empty() && !line.trim_start().starts_with('#') {
            writeln!(out, "> {}", line.trim())?;
        }
        if let Some(reply) = cli_line(&line, host) {
            writeln!(out, "{reply}")?;
        }
    }
    Ok(())
}

fn dump(host: &mut dyn Host, target: Target, resource: u8, mut row: impl FnMut(u128) -> String) -> String {
    let mut out = Vec::new();
    for i in 0..=u16::MAX {
        let reply = host.send(ControlFrame::new(Opcode::TableRead, target, resource, index_read(i)));
        match reply.opcode {
            Opcode::ReadReply => out.push(row(reply.payload)),
            Opcode::Nack if reply.nack_reason() == Some(NackReason::NotFound) => break,
            _ => return status(&reply),
        }
    }
    out.join("\n")
}

fn ingress(t: &[&str], host: &mut dyn Host) -> Option<String> {
    let a = split(t);
    match a.words.first().copied()? {
        "dump" if t.len() == 1 => {
            let body = dump(host, Target::Ipi, 0, |p| {
                let r = IngressRecord::decode(p);
                match r.action {
                    ACT_FORWARD => format!("ingress,{},{},forward,{}", r.lane, r.vid, r.device),
                    _ => format!("ingress,{},{},drop,", r.lane, r.vid),
                }
            });
            Some(join_csv("table,lane,vid,action,device", body))
        }
        op @ ("add" | "del") => {
            let lane = num::<u8>(a.kv.get("lane")?)?;
            let vid = num::<u16>(a.kv.get("vid")?)?;
            let (action, device) = match op {
                "del" if a.words.len() == 1 && a.kv.len() == 2 => (ACT_DELETE, 0),
                "add" => match (a.kv.get("vs").copied(), a.words.get(1).copied()) {
                    (Some("drop"), None) | (None, Some("drop")) => (ACT_DROP, 0),
                    (Some(v), None) => (ACT_FORWARD, num::<u8>(v).filter(|d| *d < 32)?),
                    _ => return None,
                },
                _ => return None,
            };
            let rec = IngressRecord { lane: lane.min(63), vid: vid & 0xfff, action, device };
            if lane > 63 || vid > 0xfff {
                return Some("error: rejected".into());
            }
            Some(status(&host.send(ControlFrame::new(Opcode::TableWrite, Target::Ipi, 0, rec.encode()))))
        }
        _ => None,
    }
}

fn egress(t: &[&str], host: &mut dyn Host) -> Option<String> {
    let a = split(t);
    match a.words.first().copied()? {
        "dump" if t.len() == 1 => {
            let body = dump(host, Target::Opi, 0, |p| {
                let r = EgressRecord::decode(p);
                match r.action {
                    ACT_FORWARD => format!("egress,{},{},forward,{}", r.vid, r.device, lane_list(r.lanes)),
                    _ => format!("egress,{},{},drop,", r.vid, r.device),
                }
            });
            Some(join_csv("table,vid,device,action,lanes", body))
        }
        op @ ("add" | "del") => {
            let vid = num::<u16>(a.kv.get("vid")?).filter(|v| *v <= 0xfff)?;
            let device = num::<u8>(a.kv.get("vs")?).filter(|d| *d < 32)?;
            let (action, lanes) = match op {
                "del" if a.words.len() == 1 && a.kv.len() == 2 => (ACT_DELETE, 0),
                "add" => match (a.kv.get("lanes").copied(), a.words.get(1).copied()) {
                    (Some("drop"), None) | (None, Some("drop")) => (ACT_DROP, 0),
                    (Some(l), None) => {
                        let lanes = list(l)?;
                        if lanes.iter().any(|l| *l as usize >= LANE_COUNT) {
                            return Some("error: rejected".into());
                        }
                        (ACT_FORWARD, crate::steering::lane_mask(&lanes))
                    }
                    _ => return None,
                },
                _ => return None,
            };
            let rec = EgressRecord { vid, device, action, lanes };
            Some(status(&host.send(ControlFrame::new(Opcode::TableWrite, Target::Opi, 0, rec.encode()))))
        }
        _ => None,
    }
}

fn vs(t: &[&str], host: &mut dyn Host) -> Option<String> {
    let slot = num::<u8>(t.first()?).filter(|s| *s < 62)?;
    match *t.get(1)? {
        "reg" => {
            let idx = num::<u8>(t.get(2)?)?;
            let target = Target::Slot(slot);
            match (t.get(3).copied()?, t.len()) {
                ("read", 4) => {
                    let r = host.send(ControlFrame::new(Opcode::RegRead, target, idx, 0));
                    Some(match r.opcode {
                        Opcode::ReadReply => format!("reg {idx} = {}", r.payload as u64),
                        _ => status(&r),
                    })
                }
                ("write", 5) => {
                    let v = num::<u64>(t[4])?;
                    Some(status(&host.send(ControlFrame::new(Opcode::RegWrite, target, idx, v as u128))))
                }
                _ => None,
            }
        }
        "table" => {
            let name = *t.get(2)?;
            let op = *t.get(3)?;
            let Some(spec) = host.driver_info(slot) else {
                return Some(format!("error: {}", NackReason::NoDevice.as_str()));
            };
            let schema = match TableSchema::by_name(&spec, name) {
                None => return Some(format!("error: no table '{name}' in {}", spec.name)),
                Some(Err(e)) => return Some(format!("error: {e}")),
                Some(Ok(s)) => s,
            };
            table_cmd(slot, &schema, op, &t[4..], host)
        }
        _ => None,
    }
}

fn table_cmd(slot: u8, s: &TableSchema, op: &str, rest: &[&str], host: &mut dyn Host) -> Option<String> {
    let target = Target::Slot(slot);
    match op {
        "dump" if rest.is_empty() => {
            let body = dump(host, target, s.table_id, |p| render_entry(s, &s.decode(p)));
            Some(join_csv("table,key,priority,action,param", body))
        }
        "add" | "del" => {
            let a = split(rest);
            let key = parse_key(s, &a.words, a.kv.get("priority").copied())?;
            let (action, param) = if op == "del" {
                (ACT_DELETE, 0)
            } else {
                match *a.kv.get("action")? {
                    "forward" => (ACT_FORWARD, num::<u64>(a.kv.get("port")?).filter(|p| *p < LANE_COUNT as u64)?),
                    "drop" => (ACT_DROP, 0),
                    "no_op" => (ACT_NO_OP, 0),
                    "port_set" => {
                        let ports = list(a.kv.get("ports")?)?;
                        (ACT_PORT_SET, crate::pipeline::ports_to_mask(&ports))
                    }
                    _ => return None,
                }
            };
            let payload = s.encode(&TableRecord { action, param, key });
            Some(status(&host.send(ControlFrame::new(Opcode::TableWrite, target, s.table_id, payload))))
        }
        _ => None,
    }
}

fn join_csv(header: &str, body: String) -> String {
    if body.is_empty() {
        header.to_string()
    } else {
        format!("{header}\n{body}")
    }
}

/// One key token: value and optional prefix length; `*` is prefix 0.
fn parse_value(tok: &str, width: u32) -> Option<(u64, Option<u32>)> {
    if tok == "*" {
        return Some((0, Some(0)));
    }
    let (v, plen) = match tok.split_once('/') {
        Some((v, p)) => (v, Some(p.parse::<u32>().ok().filter(|p| *p <= width)?)),
        None => (tok, None),
    };
    let value = if v.contains(':') {
        let parts: Vec<u8> = v.split(':').map(|b| u8::from_str_radix(b, 16).ok()).collect::<Option<_>>()?;
        let mac: [u8; 6] = parts.try_into().ok()?;
        mac_to_u64(&mac)
    } else if v.matches('.').count() == 3 {
        let parts: Vec<u8> = v.split('.').map(|b| b.parse().ok()).collect::<Option<_>>()?;
        u32::from_be_bytes(parts.try_into().ok()?) as u64
    } else {
        num::<u64>(v)?
    };
    if width < 64 && value >> width != 0 {
        return None;
    }
    Some((value, plen))
}

fn parse_key(s: &TableSchema, words: &[&str], priority: Option<&str>) -> Option<MatchKey> {
    if words.len() != s.fields.len() {
        return None;
    }
    let parsed: Vec<(u64, Option<u32>)> =
        words.iter().zip(&s.fields).map(|(w, (_, width))| parse_value(w, *width)).collect::<Option<_>>()?;
    let value = parsed.iter().zip(&s.fields).fold(0u128, |acc, ((v, _), (_, w))| (acc << w) | *v as u128);
    match s.kind {
        MatchKind::Exact => parsed.iter().all(|p| p.1.is_none()).then_some(MatchKey::Exact(value)),
        MatchKind::Lpm => {
            // Fields before the first prefixed one count in full; later ones must be wildcards.
            let mut len = 0u32;
            let mut cut = false;
            for ((_, p), (_, w)) in parsed.iter().zip(&s.fields) {
                match (cut, p) {
                    (false, None) => len += w,
                    (false, Some(p)) => {
                        len += p;
                        cut = true;
                    }
                    (true, Some(0)) => {}
                    (true, _) => return None,
                }
            }
            let m = prefix_mask(len as u8, s.key_width());
            Some(MatchKey::Lpm { value: value & m, prefix_len: len as u8 })
        }
        MatchKind::Ternary => {
            let lens: Vec<u32> = parsed.iter().zip(&s.fields).map(|((_, p), (_, w))| p.unwrap_or(*w)).collect();
            let m = s.mask_from_prefixes(&lens);
            let priority = num::<u32>(priority?).filter(|p| *p <= 255)?;
            Some(MatchKey::Ternary { value: value & m, mask: m, priority })
        }
    }
}

fn fmt_value(field: &str, width: u32, v: u64) -> String {
    if width == 48 {
        mac_from_u64(v).iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(":")
    } else if width == 32 && field.starts_with("ipv4.") {
        let b = (v as u32).to_be_bytes();
        format!("{}.{}.{}.{}", b[0], b[1], b[2], b[3])
    } else {
        v.to_string()
    }
}

fn render_entry(s: &TableSchema, r: &TableRecord) -> String {
    let (value, lens, priority) = match r.key {
        MatchKey::Exact(v) => (v, None, String::new()),
        MatchKey::Lpm { value, prefix_len } => {
            let mut left = prefix_len as u32;
            let lens = s
                .fields
                .iter()
                .map(|(_, w)| {
                    let l = left.min(*w);
                    left -= l;
                    l
                })
                .collect();
            (value, Some(lens), String::new())
        }
        MatchKey::Ternary { value, mask, priority } => (value, Some(s.field_prefixes(mask)), priority.to_string()),
    };
    let mut shift = s.key_width();
    let key: Vec<String> = s
        .fields
        .iter()
        .enumerate()
        .map(|(i, (name, w))| {
            shift -= w;
            let v = ((value >> shift) & ((1u128 << w) - 1)) as u64;
            let l = lens.as_ref().map(|l: &Vec<u32>| l[i]);
            match l {
                Some(0) => format!("{name}=*"),
                Some(l) if l < *w => format!("{name}={}/{l}", fmt_value(name, *w, v)),
                _ => format!("{name}={}", fmt_value(name, *w, v)),
            }
        })
        .collect();
    let (action, param) = match r.action {
        ACT_FORWARD => ("forward", r.param.to_string()),
        ACT_DROP => ("drop", String::new()),
        ACT_NO_OP => ("no_op", String::new()),
        ACT_PORT_SET => {
            ("port_set", mask_to_ports(r.param).iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";"))
        }
        _ => ("unknown", String::new()),
    };
    format!("{},{},{},{},{}", s.name, key.join(";"), priority, action, param)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::builtin_spec;

    #[test]
    fn key_parsing() {
        let fw = builtin_spec("firewall").unwrap();
        let s = TableSchema::for_table(&fw, 0).unwrap();
        let k = parse_key(&s, &["10.0.0.0/8", "*", "17", "5000"], Some("3")).unwrap();
        let MatchKey::Ternary { mask, priority, .. } = k else { panic!() };
        assert_eq!(priority, 3);
        assert_eq!(s.field_prefixes(mask), vec![8, 0, 8, 16]);
        assert!(parse_key(&s, &["10.0.0.0/8", "*", "17"], Some("3")).is_none());
        assert!(parse_key(&s, &["10.0.0.0/8", "*", "17", "5000"], None).is_none());

        let r = builtin_spec("router").unwrap();
        let s = TableSchema::for_table(&r, 0).unwrap();
        assert_eq!(parse_key(&s, &["10.1.2.3/16"], None), Some(MatchKey::Lpm { value: 0x0a01_0000, prefix_len: 16 }));
        let l2 = builtin_spec("l2_switch").unwrap();
        let s = TableSchema::for_table(&l2, 1).unwrap();
        assert_eq!(parse_key(&s, &["02:00:00:00:00:0b"], None), Some(MatchKey::Exact(0x0200_0000_000b)));
        assert!(parse_key(&s, &["02:00:00:00:00"], None).is_none());
    }

    #[test]
    fn entry_rendering() {
        let r = builtin_spec("router").unwrap();
        let s = TableSchema::for_table(&r, 0).unwrap();
        let rec =
            TableRecord { action: ACT_FORWARD, param: 1, key: MatchKey::Lpm { value: 0x0a00_0000, prefix_len: 8 } };
        assert_eq!(render_entry(&s, &rec), "ipv4_lpm,ipv4.dst=10.0.0.0/8,,forward,1");
    }
}

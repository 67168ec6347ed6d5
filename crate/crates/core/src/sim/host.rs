use std::fmt::Write as _;

use super::engine::Engine;
use crate::mgmt::{dispatch, ControlFrame, ControlPlane, Host, Target, IPI_COUNTERS, OPI_COUNTERS};
use crate::pipeline::{PipelineSpec, VsInstance};
use crate::steering::{DropReason, SteeringTables};
use crate::types::{format_duration, ClockDomain, DeviceId, Picos};

impl ControlPlane for Engine {
    fn steering(&self) -> &SteeringTables {
        &self.steering
    }

    fn steering_mut(&mut self) -> &mut SteeringTables {
        &mut self.steering
    }

    fn instance_mut(&mut self, slot: DeviceId) -> Option<&mut VsInstance> {
        self.slots.instance_mut(slot)
    }

    fn interface_counters(&self, target: Target) -> Vec<u64> {
        match target {
            Target::Ipi => self.counters.ipi.to_vec(),
            Target::Opi => self.counters.opi.to_vec(),
            Target::Slot(_) => Vec::new(),
        }
    }
}

/// The engine as its own management endpoint. Each frame occupies the
/// inbound channel for one ASIC cycle and takes effect at the current time.
impl Host for Engine {
    fn send(&mut self, frame: ControlFrame) -> ControlFrame {
        self.chan_free = self.chan_free.max(self.now) + ClockDomain::asic().period_ps;
        dispatch(&frame, self)
    }

    fn driver_info(&mut self, slot: u8) -> Option<PipelineSpec> {
        self.slots.instance(DeviceId(slot)).map(|i| i.spec().clone())
    }

    fn stats(&mut self) -> String {
        self.stats_text()
    }

    fn deploy(&mut self, slot: u8, spec: &str) -> Result<String, String> {
        if (slot as usize) >= self.sc.slots {
            return Err(format!("slot {slot} out of range"));
        }
        if self.now == 0 && self.events == 0 {
            let s = self.sc.specs.get(spec).ok_or_else(|| format!("unknown spec '{spec}'"))?.clone();
            self.slots.deploy_initial(DeviceId(slot), &s).map_err(|e| e.to_string())?;
            return Ok("ok".into());
        }
        let r = self.reconfigure(slot, Some(spec))?;
        Ok(format!("ok: reconfiguring until {}", format_duration(r.done_at)))
    }

    fn undeploy(&mut self, slot: u8) -> Result<String, String> {
        if (slot as usize) >= self.sc.slots {
            return Err(format!("slot {slot} out of range"));
        }
        if self.now == 0 && self.events == 0 {
            self.slots.undeploy_initial(DeviceId(slot)).map_err(|e| e.to_string())?;
            return Ok("ok".into());
        }
        let r = self.reconfigure(slot, None)?;
        Ok(format!("ok: reconfiguring until {}", format_duration(r.done_at)))
    }

    fn run(&mut self, duration: Picos) -> Result<String, String> {
        if self.in_event {
            return Err("run is not allowed in a scheduled command".into());
        }
        let t = self.now.saturating_add(duration);
        self.run_until(t);
        Ok(format!("ok: time {}", format_duration(self.now)))
    }
}

impl Engine {
    /// Per-component counter snapshot.
    pub fn stats_text(&self) -> String {
        let c = &self.counters;
        let mut s = format!("time {}\n", format_duration(self.now));
        let pairs = |names: &[&str], vals: &[u64]| {
            names.iter().zip(vals).map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, "ipi {}", pairs(&IPI_COUNTERS, &c.ipi));
        let _ = writeln!(s, "opi {}", pairs(&OPI_COUNTERS, &c.opi));
        for st in self.slots.slots() {
            let i = st.slot.index();
            let sc = &c.slots[i];
            if !st.is_active() && sc.received == 0 {
                continue;
            }
            let name = self.slots.instance(st.slot).map_or("-", |x| x.spec().name.as_str());
            let _ = writeln!(
                s,
                "vs{i} {name} {} received={} processed={} emitted={} delivered={}",
                st.label(),
                sc.received,
                sc.processed,
                sc.emitted,
                sc.delivered.packets
            );
        }
        for (l, lc) in c.lanes.iter().enumerate() {
            if lc.rx.packets > 0 || lc.tx.packets > 0 {
                let _ = writeln!(s, "lane{l} rx={} tx={}", lc.rx.packets, lc.tx.packets);
            }
        }
        let drops: Vec<String> = DropReason::ALL
            .iter()
            .filter(|r| c.drop_count(**r) > 0)
            .map(|r| format!("{}={}", r.as_str(), c.drop_count(*r)))
            .collect();
        let _ = write!(
            s,
            "injected={} delivered={} dropped={} in_flight={}",
            c.injected.packets,
            c.delivered.packets,
            c.dropped(),
            c.in_flight()
        );
        if !drops.is_empty() {
            let _ = write!(s, "\ndrops {}", drops.join(" "));
        }
        s
    }
}

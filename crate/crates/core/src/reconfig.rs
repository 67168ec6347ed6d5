//! Slot lifecycle: initial deployment, full reconfiguration of the whole
//! array and partial reconfiguration of one slot.
//!
//! Every transition bumps the slot's generation. Events scheduled against
//! an older generation are stale and must be ignored by the engine.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::estimator::FabricCapacity;
use crate::pipeline::{PipelineSpec, ResourceFootprint, SpecError, VsInstance};
use crate::types::{parse_duration, DeviceId, Picos, MAX_SLOTS, PS_PER_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReconfigMode {
    #[default]
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigPolicy {
    pub mode: ReconfigMode,
    /// `None` means ceil(capacity / 26) per resource.
    pub partial_slot_budget: Option<ResourceFootprint>,
    pub partial_rate_penalty: f64,
    pub full_reconfig_time: Picos,
    pub partial_reconfig_time: Picos,
}

impl Default for ReconfigPolicy {
    fn default() -> Self {
        Self {
            mode: ReconfigMode::Full,
            partial_slot_budget: None,
            partial_rate_penalty: 0.95,
            full_reconfig_time: 100 * PS_PER_MS,
            partial_reconfig_time: 10 * PS_PER_MS,
        }
    }
}

/// Scenario-file form of [`ReconfigPolicy`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub mode: ReconfigMode,
    #[serde(default)]
    pub partial_slot_budget: Option<ResourceFootprint>,
    #[serde(default)]
    pub partial_rate_penalty: Option<f64>,
    #[serde(default)]
    pub full_reconfig_time: Option<String>,
    #[serde(default)]
    pub partial_reconfig_time: Option<String>,
}

impl PolicyConfig {
    pub fn resolve(&self, errors: &mut Vec<String>) -> ReconfigPolicy {
        let d = ReconfigPolicy::default();
        let time = |s: &Option<String>, dflt: Picos, errors: &mut Vec<String>| match s {
            None => dflt,
            Some(s) => parse_duration(s).unwrap_or_else(|e| {
                errors.push(format!("policy: {e}"));
                dflt
            }),
        };
        let penalty = self.partial_rate_penalty.unwrap_or(d.partial_rate_penalty);
        if !(penalty > 0.0 && penalty <= 1.0) {
            errors.push(format!("policy: partial_rate_penalty {penalty} outside (0, 1]"));
        }
        ReconfigPolicy {
            mode: self.mode,
            partial_slot_budget: self.partial_slot_budget,
            partial_rate_penalty: penalty,
            full_reconfig_time: time(&self.full_reconfig_time, d.full_reconfig_time, errors),
            partial_reconfig_time: time(&self.partial_reconfig_time, d.partial_reconfig_time, errors),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SlotStatus {
    Empty,
    Active { instance: Box<VsInstance>, rate_factor: f64 },
    Reconfiguring { until: Picos, pending: Option<(Box<PipelineSpec>, f64)> },
}

#[derive(Debug, Clone)]
pub struct SlotState {
    pub slot: DeviceId,
    pub status: SlotStatus,
    pub generation: u64,
}

impl SlotState {
    pub fn is_active(&self) -> bool {
        matches!(self.status, SlotStatus::Active { .. })
    }

    pub fn label(&self) -> &'static str {
        match self.status {
            SlotStatus::Empty => "empty",
            SlotStatus::Active { .. } => "active",
            SlotStatus::Reconfiguring { .. } => "reconfiguring",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReconfigError {
    #[error("slot {0} is not configured")]
    NoSuchSlot(u8),
    #[error("deployment exceeds fabric capacity ({0} LUT, {1} FF, {2} BRAM requested)")]
    Capacity(u64, u64, u64),
    #[error("'{0}' exceeds the per-slot budget")]
    Budget(String),
    #[error("partial reconfiguration requires partial mode")]
    NotPartialMode,
    #[error("slot {0} is already reconfiguring")]
    Busy(u8),
    #[error("{0}")]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconfigReport {
    pub slots: Vec<DeviceId>,
    pub done_at: Picos,
}

#[derive(Debug, Clone)]
pub struct SlotArray {
    slots: Vec<SlotState>,
    pub policy: ReconfigPolicy,
    pub capacity: FabricCapacity,
}

impl SlotArray {
    pub fn new(slot_count: usize, policy: ReconfigPolicy, capacity: FabricCapacity) -> Self {
        assert!((1..=MAX_SLOTS).contains(&slot_count));
        let slots = (0..slot_count)
            .map(|i| SlotState { slot: DeviceId(i as u8), status: SlotStatus::Empty, generation: 0 })
            .collect();
        Self { slots, policy, capacity }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn budget(&self) -> ResourceFootprint {
        self.policy.partial_slot_budget.unwrap_or_else(|| self.capacity.per_slot_budget(MAX_SLOTS as u64))
    }

    pub fn slot(&self, i: usize) -> &SlotState {
        &self.slots[i]
    }

    pub fn slots(&self) -> &[SlotState] {
        &self.slots
    }

    pub fn get(&self, d: DeviceId) -> Result<&SlotState, ReconfigError> {
        self.slots.get(d.index()).ok_or(ReconfigError::NoSuchSlot(d.0))
    }

    pub fn is_active(&self, d: DeviceId) -> bool {
        self.slots.get(d.index()).is_some_and(|s| s.is_active())
    }

    pub fn instance(&self, d: DeviceId) -> Option<&VsInstance> {
        match &self.slots.get(d.index())?.status {
            SlotStatus::Active { instance, .. } => Some(instance),
            _ => None,
        }
    }

    pub fn instance_mut(&mut self, d: DeviceId) -> Option<&mut VsInstance> {
        match &mut self.slots.get_mut(d.index())?.status {
            SlotStatus::Active { instance, .. } => Some(instance),
            _ => None,
        }
    }

    pub fn rate_factor(&self, d: DeviceId) -> f64 {
        match self.slots.get(d.index()).map(|s| &s.status) {
            Some(SlotStatus::Active { rate_factor, .. }) => *rate_factor,
            _ => 1.0,
        }
    }

    pub fn generation(&self, d: DeviceId) -> u64 {
        self.slots.get(d.index()).map_or(0, |s| s.generation)
    }

    fn deployed(&self) -> impl Iterator<Item = (usize, &PipelineSpec)> {
        self.slots.iter().enumerate().filter_map(|(i, s)| match &s.status {
            SlotStatus::Active { instance, .. } => Some((i, instance.spec())),
            SlotStatus::Reconfiguring { pending: Some((spec, _)), .. } => Some((i, spec.as_ref())),
            _ => None,
        })
    }

    fn check_aggregate<'a>(&self, specs: impl Iterator<Item = &'a PipelineSpec>) -> Result<(), ReconfigError> {
        let total: ResourceFootprint = specs.map(|s| s.footprint).sum();
        if total.fits_within(&self.capacity.as_footprint()) {
            Ok(())
        } else {
            Err(ReconfigError::Capacity(total.luts, total.ffs, total.brams))
        }
    }

    fn check_budget(&self, spec: &PipelineSpec) -> Result<(), ReconfigError> {
        if self.policy.mode == ReconfigMode::Partial && !spec.footprint.fits_within(&self.budget()) {
            return Err(ReconfigError::Budget(spec.name.clone()));
        }
        Ok(())
    }

    /// Places a pipeline at time zero: active immediately, no penalty.
    pub fn deploy_initial(&mut self, slot: DeviceId, spec: &PipelineSpec) -> Result<(), ReconfigError> {
        self.get(slot)?;
        self.check_budget(spec)?;
        let others = self.deployed().filter(|(i, _)| *i != slot.index()).map(|(_, s)| s);
        self.check_aggregate(others.chain(std::iter::once(spec)))?;
        let instance = VsInstance::new(spec, slot)?;
        let s = &mut self.slots[slot.index()];
        s.status = SlotStatus::Active { instance: Box::new(instance), rate_factor: 1.0 };
        s.generation += 1;
        Ok(())
    }

    /// Empties a slot at time zero, before any traffic.
    pub fn undeploy_initial(&mut self, slot: DeviceId) -> Result<(), ReconfigError> {
        self.get(slot)?;
        let s = &mut self.slots[slot.index()];
        s.status = SlotStatus::Empty;
        s.generation += 1;
        Ok(())
    }

    /// Specs currently deployed or being deployed, by slot.
    pub fn deployments(&self) -> BTreeMap<DeviceId, PipelineSpec> {
        self.deployed().map(|(i, s)| (DeviceId(i as u8), s.clone())).collect()
    }

    /// Reprograms every slot. All state is lost; slots listed in
    /// `deployments` come back active without penalty.
    pub fn full_reconfigure(
        &mut self,
        now: Picos,
        deployments: &BTreeMap<DeviceId, PipelineSpec>,
    ) -> Result<ReconfigReport, ReconfigError> {
        for (d, spec) in deployments {
            self.get(*d)?;
            VsInstance::check(spec)?;
        }
        self.check_aggregate(deployments.values())?;
        let until = now + self.policy.full_reconfig_time;
        for s in &mut self.slots {
            let pending = deployments.get(&s.slot).map(|spec| (Box::new(spec.clone()), 1.0));
            s.status = SlotStatus::Reconfiguring { until, pending };
            s.generation += 1;
        }
        Ok(ReconfigReport { slots: self.slots.iter().map(|s| s.slot).collect(), done_at: until })
    }

    /// Reprograms one slot; `None` empties it. Other slots are untouched.
    pub fn partial_reconfigure(
        &mut self,
        now: Picos,
        slot: DeviceId,
        spec: Option<&PipelineSpec>,
    ) -> Result<ReconfigReport, ReconfigError> {
        if self.policy.mode != ReconfigMode::Partial {
            return Err(ReconfigError::NotPartialMode);
        }
        let state = self.get(slot)?;
        if matches!(state.status, SlotStatus::Reconfiguring { .. }) {
            return Err(ReconfigError::Busy(slot.0));
        }
        if let Some(spec) = spec {
            VsInstance::check(spec)?;
            self.check_budget(spec)?;
            let others = self.deployed().filter(|(i, _)| *i != slot.index()).map(|(_, s)| s);
            self.check_aggregate(others.chain(std::iter::once(spec)))?;
        }
        let until = now + self.policy.partial_reconfig_time;
        let penalty = self.policy.partial_rate_penalty;
        let s = &mut self.slots[slot.index()];
        s.status = SlotStatus::Reconfiguring { until, pending: spec.map(|p| (Box::new(p.clone()), penalty)) };
        s.generation += 1;
        Ok(ReconfigReport { slots: vec![slot], done_at: until })
    }

    /// Ends a reconfiguration if `generation` is still current. Returns
    /// whether the slot changed.
    pub fn complete(&mut self, slot: DeviceId, generation: u64) -> bool {
        let Some(s) = self.slots.get_mut(slot.index()) else { return false };
        if s.generation != generation {
            return false;
        }
        let SlotStatus::Reconfiguring { pending, .. } = std::mem::replace(&mut s.status, SlotStatus::Empty) else {
            return false;
        };
        if let Some((spec, rate_factor)) = pending {
            let instance = VsInstance::new(&spec, slot).expect("spec validated at reconfiguration start");
            s.status = SlotStatus::Active { instance: Box::new(instance), rate_factor };
        }
        s.generation += 1;
        true
    }
}

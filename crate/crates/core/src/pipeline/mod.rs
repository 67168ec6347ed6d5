//! Virtual switch pipelines: declarative specs, match tables and the
//! per-instance interpreter.

mod instance;
mod spec;
mod table;

use std::collections::BTreeMap;

pub use instance::{
    kind_name, mask_to_ports, ports_to_mask, EgressMeta, EntryAction, InstanceCounters, PacketContext, PipelineDrop,
    PipelineFault, PipelineOutcome, Table, VsInstance,
};
pub use spec::*;
pub use table::{prefix_mask, MatchKey, MatchTable, TableError};

const BUILTIN_SOURCES: [(&str, &str); 4] = [
    ("l2_switch", include_str!("../../specs/l2_switch.toml")),
    ("firewall", include_str!("../../specs/firewall.toml")),
    ("router", include_str!("../../specs/router.toml")),
    ("int", include_str!("../../specs/int.toml")),
];

/// The four case-study pipelines keyed by name.
pub fn builtin_specs() -> BTreeMap<String, PipelineSpec> {
    BUILTIN_SOURCES
        .iter()
        .map(|(name, src)| {
            let spec = PipelineSpec::from_toml(src).expect("builtin spec parses");
            debug_assert_eq!(spec.name, *name);
            (name.to_string(), spec)
        })
        .collect()
}

pub fn builtin_spec(name: &str) -> Option<PipelineSpec> {
    BUILTIN_SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| PipelineSpec::from_toml(src).expect("builtin spec parses"))
}

/// Parses and validates a spec document.
pub fn load_spec(text: &str) -> Result<PipelineSpec, SpecError> {
    let spec = PipelineSpec::from_toml(text)?;
    VsInstance::check(&spec)?;
    Ok(spec)
}

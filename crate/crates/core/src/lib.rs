//! Packet-level discrete-event model of a hybrid FPGA-ASIC switch
//! virtualization platform.

pub mod estimator;
pub mod fabric;
pub mod frame;
pub mod mgmt;
pub mod pipeline;
pub mod reconfig;
pub mod sim;
pub mod steering;
pub mod types;

//! Management interface: the 146-bit control frame, per-resource payload
//! layouts, request dispatch and the operator command line.

mod cli;
mod codec;
mod dispatch;
mod schema;

pub use cli::{cli_line, cli_session, Host, HELP};
pub use codec::*;
pub use dispatch::{dispatch, dispatch_bytes, ControlPlane, IPI_COUNTERS, OPI_COUNTERS};
pub use schema::*;

//! Operator shell plumbing: the engine runs on its own thread and the CLI
//! reaches it only through a request queue carrying encoded frames.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread::JoinHandle;

use super::engine::Engine;
use crate::mgmt::{dispatch_bytes, ControlFrame, Host, FRAME_BYTES};
use crate::pipeline::PipelineSpec;
use crate::types::Picos;

enum Request {
    Frame([u8; FRAME_BYTES]),
    DriverInfo(u8),
    Stats,
    Deploy(u8, String),
    Undeploy(u8),
    Run(Picos),
}

enum Response {
    Frame([u8; FRAME_BYTES]),
    Driver(Option<PipelineSpec>),
    Text(Result<String, String>),
}

/// [`Host`] backed by an engine thread.
pub struct ChannelHost {
    tx: Sender<(Request, Sender<Response>)>,
}

impl ChannelHost {
    fn call(&self, req: Request) -> Response {
        let (rtx, rrx) = channel();
        self.tx.send((req, rtx)).expect("engine thread alive");
        rrx.recv().expect("engine thread replies")
    }

    fn text(&self, req: Request) -> Result<String, String> {
        match self.call(req) {
            Response::Text(t) => t,
            _ => Err("unexpected response".into()),
        }
    }
}

impl Host for ChannelHost {
    fn send(&mut self, frame: ControlFrame) -> ControlFrame {
        match self.call(Request::Frame(frame.encode())) {
            Response::Frame(b) => ControlFrame::decode(&b).expect("engine replies with valid frames"),
            _ => unreachable!("frame requests get frame replies"),
        }
    }

    fn driver_info(&mut self, slot: u8) -> Option<PipelineSpec> {
        match self.call(Request::DriverInfo(slot)) {
            Response::Driver(d) => d,
            _ => None,
        }
    }

    fn stats(&mut self) -> String {
        self.text(Request::Stats).unwrap_or_else(|e| format!("error: {e}"))
    }

    fn deploy(&mut self, slot: u8, spec: &str) -> Result<String, String> {
        self.text(Request::Deploy(slot, spec.to_string()))
    }

    fn undeploy(&mut self, slot: u8) -> Result<String, String> {
        self.text(Request::Undeploy(slot))
    }

    fn run(&mut self, duration: Picos) -> Result<String, String> {
        self.text(Request::Run(duration))
    }
}

/// Moves `engine` onto a thread serving one request at a time. The thread
/// ends, returning the engine, when the host is dropped.
pub fn spawn_engine(engine: Engine) -> (ChannelHost, JoinHandle<Engine>) {
    let (tx, rx) = channel::<(Request, Sender<Response>)>();
    let handle = std::thread::spawn(move || serve(engine, rx));
    (ChannelHost { tx }, handle)
}

fn serve(mut e: Engine, rx: Receiver<(Request, Sender<Response>)>) -> Engine {
    for (req, reply) in rx {
        let resp = match req {
            Request::Frame(b) => {
                e.chan_free = e.chan_free.max(e.now) + crate::types::ClockDomain::asic().period_ps;
                Response::Frame(dispatch_bytes(&b, &mut e).encode())
            }
            Request::DriverInfo(s) => Response::Driver(e.driver_info(s)),
            Request::Stats => Response::Text(Ok(e.stats())),
            Request::Deploy(s, n) => Response::Text(e.deploy(s, &n)),
            Request::Undeploy(s) => Response::Text(e.undeploy(s)),
            Request::Run(d) => Response::Text(Host::run(&mut e, d)),
        };
        let _ = reply.send(resp);
    }
    e
}

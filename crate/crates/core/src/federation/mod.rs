//! Two-client federated coupled decomposition: the server-side model, the
//! wire codec, transports and the protocol drivers.

pub mod client;
pub mod config;
pub mod model;
pub mod run;
pub mod server;
pub mod transport;
pub mod wire;

pub use client::ClientNode;
pub use config::{ClientConfig, ClientSettings, RunConfig, ServerSettings};
pub use model::{mean_of_uploads, normalize_columns, server_update_global, sgd_step, GlobalModel, ModeBlock};
pub use run::{
    run_client, run_federation, run_federation_logged, run_server, serve_tcp, ClientOutcome, PhaseTimings,
    RunResult, ServerOutcome,
};
pub use server::ServerSession;
pub use transport::{CaptureLink, ChannelLink, Direction, FrameLog, Link, TcpLink};
pub use wire::{decode_message, encode_message, read_frame, write_frame, Message, MessageType, ShutdownReason};

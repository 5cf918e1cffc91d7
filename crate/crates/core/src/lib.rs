//! Emulated satellite paths, QUIC-like and TCP-like transports, split-connection
//! proxies and the measurement harness that drives them.

pub mod congestion;
pub mod emunet;
pub mod eventlog;
pub mod harness;
pub mod pep;
pub mod ranges;
pub mod sim;
pub mod time;
pub mod transport;
pub mod workloads;

//! A deterministic laboratory for HTTP/2 Server Push.
//!
//! Recorded multi-origin websites are replayed through a frame-accurate
//! HTTP/2 model with pluggable stream scheduling (including an interleaving
//! scheduler that hard-switches to pushed resources at a byte offset),
//! configurable push strategies, and a simulated access link. Page Load Time
//! and a SpeedIndex proxy are computed from the resulting event timeline.

pub mod archive;
pub mod browser;
pub mod experiment;
pub mod frame;
pub mod hpack;
pub mod html;
pub mod netsim;
pub mod scheduler;
pub mod strategy;

//! Pre-OS audio stack simulator.
//!
//! The layers, bottom to top:
//!
//! * [`verb`]: HDA verb command words and the verb catalog.
//! * [`controller`]: simulated controller (PCI config space, MMIO registers,
//!   immediate-command state machine, virtual clock).
//! * [`codec`]: simulated codec with widget nodes and a beep generator.
//! * [`profile`]: machine/codec profile documents.
//! * [`client`]: driver side; locates the controller, sends verbs over
//!   ICOI/ICII/ICIS, walks the codec topology.
//! * [`render`]: beep timelines to PCM and WAV.
//! * [`screenreader`]: form model, navigation and tone announcements.

pub mod client;
pub mod codec;
pub mod controller;
pub mod profile;
pub mod render;
pub mod screenreader;
pub mod verb;

/// Virtual time in milliseconds.
pub type Millis = num_rational::Ratio<u64>;

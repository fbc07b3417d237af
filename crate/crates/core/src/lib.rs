//! evacsim — a deterministic multi-agent building-evacuation simulator.
//!
//! A building is an indoor graph with exits, landmarks, and wireless access
//! points. A fire ignites and spreads across it while evacuees walk the
//! edges toward safety, guided by one of three phone-based navigation
//! policies: shortest known-safe path (`dijkstra`), adaptive packet routing
//! over a random-neural-network substrate (`cpnst`), or the same routing
//! blended with a social potential field that keeps groups together
//! (`cpn-spf`). Phones carry finite batteries; localization photo uploads
//! travel either straight over cellular or hop phone-to-phone over an
//! energy-aware ad-hoc relay network (`ahcpn`) that prices each candidate
//! path by the battery margin it leaves behind.
//!
//! Every run is reproducible: all randomness flows from ChaCha streams
//! derived from the scenario seed (movement, fire, and radio draws each get
//! their own stream, so changing the navigation policy never reshuffles the
//! fire), iteration orders are fixed, and battery accounting is integer
//! nanojoules, so a (building, parameters, scenario) triple always produces
//! the same events and the same CSV bytes.

pub mod building;
pub mod comms;
pub mod config;
pub mod cpn;
pub mod energy;
pub mod experiment;
pub mod hazard;
pub mod rnn;
pub mod sim;
pub mod spf;

pub use building::{load_building, BuildingError, BuildingGraph, NodeId, NodeKind};
pub use comms::{CommsMode, CommsParams, DeliveryOutcome, DeliveryReport, RelayService};
pub use config::{ConfigError, ExperimentConfig, Params};
pub use cpn::{CpnEngine, CpnError, CpnParams, Topology};
pub use energy::{Battery, BatteryParams, EnergyError, EnergyModel, PhoneFleet};
pub use experiment::{run_matrix, run_matrix_sequential, RunRow, SummaryRow};
pub use hazard::{HazardError, HazardField, HazardParams, IgnitionSpec};
pub use rnn::{RnnError, RnnParams};
pub use sim::{run_scenario, Algorithm, RunMetrics, Scenario, SimError, SimParams, World};
pub use spf::{SpfError, SpfParams};

//! Fire state over the building graph: per-tick probabilistic spread along
//! edges, plus the delayed "known" view that routing works from.

use crate::building::{BuildingGraph, NodeId};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IgnitionSpec {
    /// Pick one uniformly random non-exit node at t = 0.
    Random,
    /// Ignite a fixed node at t = 0.
    Node(NodeId),
    /// No initial fire (threat-free runs).
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    /// Chance per spread tick that fire crosses from a burning node to each
    /// unburnt neighbor.
    pub spread_probability: f64,
    pub spread_tick_s: f64,
    /// Lag between a node igniting and the cloud knowing about it.
    pub sensing_delay_s: f64,
    pub ignition: IgnitionSpec,
}

impl Default for HazardParams {
    /// Default calibration: a smoldering single-origin fire that creeps
    /// between junctions on a nine-minute tick, with a three-minute lag
    /// before the building sensors localize a burning junction. The danger
    /// window is the blind interval right after ignition, when only packet
    /// losses reveal where the fire is.
    fn default() -> Self {
        HazardParams {
            spread_probability: 0.3,
            spread_tick_s: 540.0,
            sensing_delay_s: 180.0,
            ignition: IgnitionSpec::Random,
        }
    }
}

#[derive(Debug, Error)]
pub enum HazardError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is already burning")]
    AlreadyBurning(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardField {
    params: HazardParams,
    known_nodes: BTreeSet<NodeId>,
    ignition_time_s: BTreeMap<NodeId, f64>,
}

impl HazardField {
    pub fn new(g: &BuildingGraph, params: HazardParams) -> HazardField {
        HazardField {
            params,
            known_nodes: g.node_ids().collect(),
            ignition_time_s: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &HazardParams {
        &self.params
    }

    fn check(&self, node: NodeId) -> Result<(), HazardError> {
        if self.known_nodes.contains(&node) {
            Ok(())
        } else {
            Err(HazardError::UnknownNode(node))
        }
    }

    pub fn ignite(&mut self, node: NodeId, t: f64) -> Result<(), HazardError> {
        self.check(node)?;
        if self.ignition_time_s.contains_key(&node) {
            return Err(HazardError::AlreadyBurning(node));
        }
        self.ignition_time_s.insert(node, t);
        Ok(())
    }

    /// One spread tick at time `t`: every unburnt neighbor of a node burning
    /// at the start of the tick ignites with `spread_probability`. Candidates
    /// are visited in ascending node id so the RNG stream is deterministic.
    /// Returns the newly ignited nodes.
    pub fn spread<R: Rng + ?Sized>(
        &mut self,
        g: &BuildingGraph,
        t: f64,
        rng: &mut R,
    ) -> Vec<NodeId> {
        let burning_now: BTreeSet<NodeId> = self
            .ignition_time_s
            .iter()
            .filter(|&(_, &t0)| t0 <= t)
            .map(|(&n, _)| n)
            .collect();
        let mut candidates = BTreeSet::new();
        for &b in &burning_now {
            for &(n, _) in g.neighbors(b) {
                if !self.ignition_time_s.contains_key(&n) {
                    candidates.insert(n);
                }
            }
        }
        let mut ignited = Vec::new();
        for n in candidates {
            if rng.gen::<f64>() < self.params.spread_probability {
                self.ignition_time_s.insert(n, t);
                ignited.push(n);
            }
        }
        ignited
    }

    /// Whether the node is actually on fire at time `t`.
    pub fn burning(&self, node: NodeId, t: f64) -> Result<bool, HazardError> {
        self.check(node)?;
        Ok(self
            .ignition_time_s
            .get(&node)
            .is_some_and(|&t0| t0 <= t))
    }

    /// Whether the cloud knows the node is on fire: true once the sensing
    /// delay has elapsed (boundary inclusive).
    pub fn known_burning(&self, node: NodeId, t: f64) -> Result<bool, HazardError> {
        self.check(node)?;
        Ok(self
            .ignition_time_s
            .get(&node)
            .is_some_and(|&t0| t0 + self.params.sensing_delay_s <= t))
    }

    pub fn ignition_time(&self, node: NodeId) -> Option<f64> {
        self.ignition_time_s.get(&node).copied()
    }

    pub fn burning_nodes(&self, t: f64) -> BTreeSet<NodeId> {
        self.ignition_time_s
            .iter()
            .filter(|&(_, &t0)| t0 <= t)
            .map(|(&n, _)| n)
            .collect()
    }
}

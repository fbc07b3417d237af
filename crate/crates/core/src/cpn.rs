//! Adaptive packet routing. Smart packets explore a topology guided by
//! per-node neural gates, acknowledgements retrace the loop-erased path and
//! reinforce the choices that led to low goal values, and a per-source route
//! cache holds the best path seen so far. The goal abstraction covers both
//! additive travel-time metrics and the product-times-sum energy/delay metric
//! used on relay graphs.

use crate::building::{BuildingError, BuildingGraph, NodeId};
use crate::rnn::{RandomNeuralNetwork, RnnError, RnnParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use thiserror::Error;

/// Goal values are floored here before taking reciprocals for rewards.
pub const GOAL_FLOOR: f64 = 1e-6;

pub type VertexId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpnParams {
    /// Smart packets emitted per route recomputation at a source.
    pub packets_per_recompute: u32,
    /// Walk length bound as a multiple of the vertex count.
    pub hop_limit_factor: u32,
    /// Congestion coefficient of the travel-time metric.
    pub congestion_gamma: f64,
    /// Speed dividing edge lengths in the travel-time metric, m/s.
    pub walk_speed_mps: f64,
    /// Cache entries older than this lose their right-of-way: a fresher
    /// acknowledgement replaces them even with a worse goal value.
    pub cache_ttl_s: f64,
}

impl Default for CpnParams {
    fn default() -> Self {
        CpnParams {
            packets_per_recompute: 20,
            hop_limit_factor: 4,
            congestion_gamma: 0.2,
            walk_speed_mps: 1.4,
            cache_ttl_s: 10.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CpnError {
    #[error(transparent)]
    Rnn(#[from] RnnError),
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("every edge out of source {0} is blocked")]
    BlockedAtSource(VertexId),
    #[error("acknowledged path does not end at a destination")]
    AckNotAtDestination,
}

/// One measured hop. `additive` terms sum along a path, `factor` terms
/// multiply; the goal of a path is `scale * product(factor) * sum(additive)`.
/// Additive metrics set `factor = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopMeasure {
    pub additive: f64,
    pub factor: f64,
}

/// Evaluates candidate hops. `None` marks a hop as blocked; `first_hop`
/// distinguishes the sending end of a path where a metric needs it.
pub trait GoalFunction {
    fn measure_hop(&self, from: VertexId, to: VertexId, first_hop: bool) -> Option<HopMeasure>;
    fn scale(&self) -> f64 {
        1.0
    }
}

pub fn goal_value(scale: f64, hops: &[HopMeasure]) -> f64 {
    let product: f64 = hops.iter().map(|h| h.factor).product();
    let sum: f64 = hops.iter().map(|h| h.additive).sum();
    scale * product * sum
}

/// Observes each hop a packet physically takes (energy accounting lives
/// here); returning `false` kills the packet.
pub trait WalkMonitor {
    fn on_hop(&mut self, from: VertexId, to: VertexId) -> bool;
}

pub struct NoMonitor;

impl WalkMonitor for NoMonitor {
    fn on_hop(&mut self, _from: VertexId, _to: VertexId) -> bool {
        true
    }
}

/// Adjacency view the engine routes over; neighbor lists are sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    adj: BTreeMap<VertexId, Vec<VertexId>>,
}

impl Topology {
    pub fn new() -> Topology {
        Topology::default()
    }

    pub fn from_building(g: &BuildingGraph) -> Topology {
        let mut t = Topology::new();
        for id in g.node_ids() {
            let nbrs = g.neighbors(id).iter().map(|&(n, _)| n.0).collect();
            t.adj.insert(id.0, nbrs);
        }
        t
    }

    pub fn insert_vertex(&mut self, v: VertexId) {
        self.adj.entry(v).or_default();
    }

    pub fn insert_edge(&mut self, a: VertexId, b: VertexId) {
        debug_assert_ne!(a, b);
        let la = self.adj.entry(a).or_default();
        if let Err(pos) = la.binary_search(&b) {
            la.insert(pos, b);
        }
        let lb = self.adj.entry(b).or_default();
        if let Err(pos) = lb.binary_search(&a) {
            lb.insert(pos, a);
        }
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.adj.contains_key(&v)
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.adj
            .get(&a)
            .is_some_and(|l| l.binary_search(&b).is_ok())
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        self.adj.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.adj.keys().copied()
    }
}

/// A finished forward walk: visited vertices and the measure of each hop.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedWalk {
    pub visited: Vec<VertexId>,
    pub measures: Vec<HopMeasure>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpOutcome {
    Reached(CompletedWalk),
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedRoute {
    pub path: Vec<VertexId>,
    pub goal: f64,
    pub cached_at_s: f64,
}

struct Gate {
    neighbors: Vec<VertexId>,
    rnn: RandomNeuralNetwork,
}

/// One routing engine per destination class (building exits, or relay access
/// points). Neural gates are (re)built lazily to match the current topology,
/// which lets the same engine serve a phone graph that changes every tick.
pub struct CpnEngine {
    params: CpnParams,
    rnn_params: RnnParams,
    destinations: BTreeSet<VertexId>,
    gates: BTreeMap<VertexId, Gate>,
    cache: BTreeMap<VertexId, CachedRoute>,
}

impl CpnEngine {
    pub fn new(
        params: CpnParams,
        rnn_params: RnnParams,
        destinations: BTreeSet<VertexId>,
    ) -> CpnEngine {
        CpnEngine {
            params,
            rnn_params,
            destinations,
            gates: BTreeMap::new(),
            cache: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &CpnParams {
        &self.params
    }

    pub fn destinations(&self) -> &BTreeSet<VertexId> {
        &self.destinations
    }

    pub fn cached(&self, source: VertexId) -> Option<&CachedRoute> {
        self.cache.get(&source)
    }

    pub fn invalidate(&mut self, source: VertexId) {
        self.cache.remove(&source);
    }

    /// Gate for `v`, re-initialized whenever its neighbor set changed.
    fn sync_gate(&mut self, topo: &Topology, v: VertexId) -> Result<bool, RnnError> {
        let nbrs = topo.neighbors(v);
        if nbrs.is_empty() {
            self.gates.remove(&v);
            return Ok(false);
        }
        let stale = match self.gates.get(&v) {
            Some(g) => g.neighbors != nbrs,
            None => true,
        };
        if stale {
            self.gates.insert(
                v,
                Gate {
                    neighbors: nbrs.to_vec(),
                    rnn: RandomNeuralNetwork::new(nbrs.len(), &self.rnn_params)?,
                },
            );
        }
        Ok(true)
    }

    /// Walk one smart packet from `source` toward the destination set.
    /// Neighbors already visited are masked out unless that would silence
    /// every unblocked choice; blocked hops are never taken. The walk drops
    /// at the hop limit or when the monitor kills the packet.
    pub fn send_smart_packet<G, M, R>(
        &mut self,
        topo: &Topology,
        goal: &G,
        source: VertexId,
        rng: &mut R,
        monitor: &mut M,
    ) -> Result<SpOutcome, CpnError>
    where
        G: GoalFunction,
        M: WalkMonitor,
        R: Rng + ?Sized,
    {
        if !topo.contains(source) {
            return Err(CpnError::UnknownVertex(source));
        }
        if self.destinations.contains(&source) {
            return Ok(SpOutcome::Reached(CompletedWalk {
                visited: vec![source],
                measures: vec![],
            }));
        }
        let hop_limit = (self.params.hop_limit_factor as usize)
            .saturating_mul(topo.vertex_count())
            .max(2);
        let mut visited = vec![source];
        let mut measures: Vec<HopMeasure> = Vec::new();
        loop {
            let current = *visited.last().unwrap();
            if !self.sync_gate(topo, current)? {
                return if visited.len() == 1 {
                    Err(CpnError::BlockedAtSource(source))
                } else {
                    Ok(SpOutcome::Dropped)
                };
            }
            let nbrs = topo.neighbors(current).to_vec();
            let first_hop = visited.len() == 1;
            let measured: Vec<Option<HopMeasure>> = nbrs
                .iter()
                .map(|&n| goal.measure_hop(current, n, first_hop))
                .collect();
            if measured.iter().all(Option::is_none) {
                return if visited.len() == 1 {
                    Err(CpnError::BlockedAtSource(source))
                } else {
                    Ok(SpOutcome::Dropped)
                };
            }
            let mut forbidden: Vec<bool> = nbrs
                .iter()
                .zip(&measured)
                .map(|(n, m)| m.is_none() || visited.contains(n))
                .collect();
            if forbidden.iter().all(|&f| f) {
                // lift the visited mask, keep blocked hops forbidden
                for (f, m) in forbidden.iter_mut().zip(&measured) {
                    *f = m.is_none();
                }
            }
            let gate = self.gates.get(&current).expect("gate synced above");
            let idx = gate
                .rnn
                .select_next(self.rnn_params.epsilon, &forbidden, rng)?;
            let next = nbrs[idx];
            let measure = measured[idx].expect("forbidden mask keeps blocked hops out");
            if !monitor.on_hop(current, next) {
                return Ok(SpOutcome::Dropped);
            }
            visited.push(next);
            measures.push(measure);
            if self.destinations.contains(&next) {
                return Ok(SpOutcome::Reached(CompletedWalk { visited, measures }));
            }
            if visited.len() >= hop_limit {
                return Ok(SpOutcome::Dropped);
            }
        }
    }

    /// Acknowledge a completed walk: loop-erase it, sweep it backwards
    /// reinforcing each gate's choice with the reciprocal of the downstream
    /// goal, and offer the full path to the source's cache slot. A fresher
    /// acknowledgement beats the cache when its goal is lower or the cached
    /// entry has outlived `cache_ttl_s`.
    pub fn process_ack(
        &mut self,
        scale: f64,
        walk: &CompletedWalk,
        now_s: f64,
    ) -> Result<(), CpnError> {
        let last = walk.visited.last().ok_or(CpnError::AckNotAtDestination)?;
        if !self.destinations.contains(last) {
            return Err(CpnError::AckNotAtDestination);
        }
        let (path, measures) = loop_erase(&walk.visited, &walk.measures);
        for i in (0..path.len().saturating_sub(1)).rev() {
            let node = path[i];
            let next = path[i + 1];
            let Some(gate) = self.gates.get_mut(&node) else {
                continue;
            };
            let Some(neuron) = gate.neighbors.iter().position(|&n| n == next) else {
                continue;
            };
            let downstream = goal_value(scale, &measures[i..]).max(GOAL_FLOOR);
            gate.rnn.reinforce(neuron, 1.0 / downstream)?;
        }
        let goal = goal_value(scale, &measures);
        let source = path[0];
        let replace = match self.cache.get(&source) {
            None => true,
            Some(entry) => {
                goal < entry.goal || now_s - entry.cached_at_s > self.params.cache_ttl_s
            }
        };
        if replace {
            self.cache.insert(
                source,
                CachedRoute {
                    path,
                    goal,
                    cached_at_s: now_s,
                },
            );
        }
        Ok(())
    }

    /// Cached route for `source`, dropping the entry when any hop on it has
    /// become blocked since it was quoted.
    pub fn best_route<G: GoalFunction>(
        &mut self,
        goal: &G,
        source: VertexId,
    ) -> Option<Vec<VertexId>> {
        let entry = self.cache.get(&source)?;
        let admissible = entry
            .path
            .windows(2)
            .enumerate()
            .all(|(i, hop)| goal.measure_hop(hop[0], hop[1], i == 0).is_some());
        if !admissible {
            self.cache.remove(&source);
            return None;
        }
        Some(entry.path.clone())
    }

    /// Emit a recompute burst of packets from `source` and fold every
    /// acknowledgement into the gates and cache.
    ///
    /// A burst that comes back empty-handed also voids the cached route for
    /// `source`: the service will not keep quoting a path it can no longer
    /// confirm end to end.
    pub fn explore<G, M, R>(
        &mut self,
        topo: &Topology,
        goal: &G,
        source: VertexId,
        rng: &mut R,
        monitor: &mut M,
        now_s: f64,
    ) -> Result<(), CpnError>
    where
        G: GoalFunction,
        M: WalkMonitor,
        R: Rng + ?Sized,
    {
        let mut acks = 0usize;
        for _ in 0..self.params.packets_per_recompute {
            match self.send_smart_packet(topo, goal, source, rng, monitor) {
                Ok(SpOutcome::Reached(walk)) => {
                    self.process_ack(goal.scale(), &walk, now_s)?;
                    acks += 1;
                }
                Ok(SpOutcome::Dropped) => {}
                Err(CpnError::BlockedAtSource(_)) => break,
                Err(e) => return Err(e),
            }
        }
        if acks == 0 {
            self.cache.remove(&source);
        }
        Ok(())
    }
}

/// First-occurrence loop erasure, keeping hop measures aligned with the
/// surviving hops.
pub fn loop_erase(
    visited: &[VertexId],
    measures: &[HopMeasure],
) -> (Vec<VertexId>, Vec<HopMeasure>) {
    let mut path: Vec<VertexId> = Vec::with_capacity(visited.len());
    let mut kept: Vec<HopMeasure> = Vec::with_capacity(measures.len());
    if let Some(&first) = visited.first() {
        path.push(first);
    }
    for (i, &v) in visited.iter().enumerate().skip(1) {
        if let Some(pos) = path.iter().position(|&x| x == v) {
            path.truncate(pos + 1);
            kept.truncate(pos);
        } else {
            path.push(v);
            kept.push(measures[i - 1]);
        }
    }
    (path, kept)
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // reversed so the max-heap pops the smallest distance first;
        // node id breaks exact ties deterministically
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("distances are never NaN")
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest path from `source` to the nearest of `destinations` under
/// `edge_cost` (`None` marks a blocked edge). Among equal-cost optima the
/// lexicographically smallest node-id sequence wins. Returns `None` when no
/// destination is reachable.
pub fn dijkstra_route<F>(
    g: &BuildingGraph,
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
    edge_cost: F,
) -> Result<Option<Vec<NodeId>>, BuildingError>
where
    F: Fn(NodeId, NodeId) -> Option<f64>,
{
    g.node(source)?;
    for &d in destinations {
        g.node(d)?;
    }
    if destinations.is_empty() {
        return Ok(None);
    }

    // distance-to-goal from every node, seeded at the destinations
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for &d in destinations {
        dist.insert(d, 0.0);
        heap.push(HeapEntry { dist: 0.0, vertex: d });
    }
    while let Some(HeapEntry { dist: du, vertex: u }) = heap.pop() {
        if dist.get(&u).copied().unwrap_or(f64::INFINITY) < du {
            continue;
        }
        for &(v, _) in g.neighbors(u) {
            // cost oriented the way it would be traveled: v toward u
            let Some(c) = edge_cost(v, u) else { continue };
            let cand = c + du;
            if cand < dist.get(&v).copied().unwrap_or(f64::INFINITY) {
                dist.insert(v, cand);
                heap.push(HeapEntry { dist: cand, vertex: v });
            }
        }
    }

    if !dist.contains_key(&source) {
        return Ok(None);
    }
    // walk downhill choosing the smallest node id among optimal continuations;
    // the candidate costs reproduce the relaxation expression bit for bit
    let mut path = vec![source];
    let mut current = source;
    for _ in 0..g.node_count() {
        if destinations.contains(&current) {
            return Ok(Some(path));
        }
        let dcur = dist[&current];
        let mut next = None;
        for &(v, _) in g.neighbors(current) {
            let Some(c) = edge_cost(current, v) else { continue };
            if let Some(&dv) = dist.get(&v) {
                if c + dv == dcur {
                    next = Some(v);
                    break;
                }
            }
        }
        match next {
            Some(v) => {
                path.push(v);
                current = v;
            }
            None => return Ok(None),
        }
    }
    Ok(None)
}

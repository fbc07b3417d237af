//! The time-stepped evacuation world. Each step runs a fixed phase order —
//! fire spread, casualties, communications, decisions, movement, arrivals,
//! bookkeeping — and draws all randomness from one seeded stream in
//! deterministic order, so a (building, params, scenario) triple always
//! reproduces the same run bit for bit.

use crate::building::{distance_3d, BuildingError, BuildingGraph, NodeId, NodeKind};
use crate::comms::{build_phone_net, CommsMode, DeliveryOutcome, RelayService};
use crate::config::Params;
use crate::cpn::{
    dijkstra_route, CpnEngine, CpnError, GoalFunction, HopMeasure, Topology, VertexId,
};
use crate::energy::{Direction, EnergyError, LinkMode, PhoneFleet};
use crate::hazard::{HazardField, IgnitionSpec};
use crate::spf::{resultant_force, spf_next_node};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Navigation policy an evacuee's phone runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Dijkstra,
    Cpnst,
    CpnSpf,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Dijkstra => "dijkstra",
            Algorithm::Cpnst => "cpnst",
            Algorithm::CpnSpf => "cpn-spf",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Algorithm, String> {
        match s.to_ascii_lowercase().as_str() {
            "dijkstra" => Ok(Algorithm::Dijkstra),
            "cpnst" => Ok(Algorithm::Cpnst),
            "cpn-spf" => Ok(Algorithm::CpnSpf),
            other => Err(format!(
                "unknown algorithm '{other}' (expected dijkstra, cpnst, or cpn-spf)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Simulated seconds per step.
    pub step_s: f64,
    /// Step cap; evacuees still inside afterwards count as trapped.
    pub max_steps: u32,
    /// Probability that a cpn-spf decision follows the social force.
    pub p_spf: f64,
    /// Evacuee walking speed before congestion, m/s.
    pub walk_speed_mps: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            step_s: 0.5,
            max_steps: 2_000,
            p_spf: 0.5,
            walk_speed_mps: 1.4,
        }
    }
}

/// One cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub evacuee_count: u32,
    pub algorithm: Algorithm,
    pub comms: CommsMode,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    AtNode(NodeId),
    OnEdge {
        from: NodeId,
        to: NodeId,
        progress_m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifeState {
    Moving,
    Evacuated,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evacuee {
    pub id: u32,
    pub location: Location,
    pub life: LifeState,
    pub speed_mps: f64,
    pub route: Option<Vec<NodeId>>,
    pub follow_target: Option<u32>,
    pub pending_localization: bool,
    pub evacuated_at_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Ignition { node: NodeId, time_s: f64 },
    FireSpread { node: NodeId, time_s: f64 },
    Casualty { evacuee: u32, time_s: f64 },
    Upload { evacuee: u32, node: NodeId, time_s: f64, relayed: bool, energy_nj: u64 },
    PhoneDrained { evacuee: u32, time_s: f64 },
    Evacuated { evacuee: u32, time_s: f64 },
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub survivors: u32,
    pub survivor_pct: f64,
    pub casualties: u32,
    pub trapped_at_cap: u32,
    pub drained_phones: u32,
    pub mean_evacuation_time_s: f64,
    pub total_energy_j: f64,
    pub total_energy_nj: u64,
    pub ledger_balanced: bool,
    pub steps: u32,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Building(#[from] BuildingError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Hazard(#[from] crate::hazard::HazardError),
    #[error(transparent)]
    Routing(#[from] CpnError),
}

/// Travel-time hop metric for navigation: edge length over walking speed,
/// inflated by current congestion. Hops touching a node that is either
/// reported burning by the building sensors or flagged by a lost scout
/// packet are blocked.
struct NavGoal<'a> {
    graph: &'a BuildingGraph,
    hazard: &'a HazardField,
    suspected: &'a BTreeSet<NodeId>,
    time_s: f64,
    occupancy: &'a BTreeMap<(u32, u32), u32>,
    walk_speed_mps: f64,
    congestion_gamma: f64,
}

impl GoalFunction for NavGoal<'_> {
    fn measure_hop(&self, from: VertexId, to: VertexId, _first_hop: bool) -> Option<HopMeasure> {
        let (a, b) = (NodeId(from), NodeId(to));
        let known = |n| self.hazard.known_burning(n, self.time_s).unwrap_or(true);
        if known(a) || known(b) || self.suspected.contains(&a) || self.suspected.contains(&b) {
            return None;
        }
        let edge = self.graph.edge_between(a, b)?;
        let occupants = *self.occupancy.get(&edge_key(a, b)).unwrap_or(&0);
        let congestion = 1.0 + self.congestion_gamma * occupants.saturating_sub(1) as f64;
        Some(HopMeasure {
            additive: edge.length_m / self.walk_speed_mps * congestion,
            factor: 1.0,
        })
    }
}

/// Walk monitor that burns scout packets entering a node that is actually on
/// fire. The packet is lost, and its death marks the node as suspected —
/// this is how the packet cloud learns about fire ahead of the building's
/// delayed sensors.
struct FireScout<'a> {
    hazard: &'a HazardField,
    time_s: f64,
    hits: BTreeSet<NodeId>,
}

impl crate::cpn::WalkMonitor for FireScout<'_> {
    fn on_hop(&mut self, _from: VertexId, to: VertexId) -> bool {
        let node = NodeId(to);
        if self.hazard.burning(node, self.time_s).unwrap_or(false) {
            self.hits.insert(node);
            false
        } else {
            true
        }
    }
}

fn edge_key(a: NodeId, b: NodeId) -> (u32, u32) {
    (a.0.min(b.0), a.0.max(b.0))
}

enum NavService {
    Dijkstra,
    Cpn(CpnEngine),
}

/// One live simulation.
pub struct World<'g> {
    graph: &'g BuildingGraph,
    params: Params,
    scenario: Scenario,
    rng: ChaCha8Rng,
    /// Dedicated stream for ignition and fire spread. Keeping the fire on its
    /// own stream means every run with the same building and seed burns the
    /// same way no matter which navigation algorithm or comms mode is being
    /// measured, so cross-algorithm comparisons are paired.
    hazard_rng: ChaCha8Rng,
    /// Dedicated stream for relay discovery, for the same reason: radio
    /// traffic must not perturb fire or movement draws.
    comms_rng: ChaCha8Rng,
    hazard: HazardField,
    fleet: PhoneFleet,
    evacuees: Vec<Evacuee>,
    nav: NavService,
    nav_topo: Topology,
    relay: RelayService,
    ap_vertices: Vec<(VertexId, [f64; 3])>,
    /// Nodes where scout packets have died in fire the sensors have not
    /// reported yet. Shared across all phone-routed evacuees; fire never
    /// recedes, so entries are kept for the whole run.
    suspected_fire: BTreeSet<NodeId>,
    events: Vec<SimEvent>,
    evac_times_s: Vec<f64>,
    step_count: u32,
    time_s: f64,
    spread_every: u32,
    discovery_every: u32,
}

impl<'g> World<'g> {
    pub fn new(
        graph: &'g BuildingGraph,
        params: Params,
        scenario: Scenario,
    ) -> Result<World<'g>, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut hazard_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        hazard_rng.set_stream(1);
        let mut comms_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        comms_rng.set_stream(2);
        let mut events = Vec::new();

        // scatter evacuees uniformly over non-exit nodes, sampling each
        // phone's battery right after its owner's position
        let spawn_nodes: Vec<NodeId> = graph
            .node_ids()
            .filter(|n| !graph.exits().contains(n))
            .collect();
        let mut evacuees = Vec::with_capacity(scenario.evacuee_count as usize);
        let mut batteries = Vec::with_capacity(scenario.evacuee_count as usize);
        for id in 0..scenario.evacuee_count {
            let node = spawn_nodes[rng.gen_range(0..spawn_nodes.len())];
            batteries.push(params.battery.sample(&mut rng)?);
            let landmark = graph.node(node)?.kind == NodeKind::Landmark;
            evacuees.push(Evacuee {
                id,
                location: Location::AtNode(node),
                life: LifeState::Moving,
                speed_mps: params.sim.walk_speed_mps,
                route: None,
                follow_target: None,
                pending_localization: landmark,
                evacuated_at_s: None,
            });
        }
        let fleet = PhoneFleet::new(batteries);

        let mut hazard = HazardField::new(graph, params.hazard);
        let ignited = match params.hazard.ignition {
            IgnitionSpec::Random => {
                let all: Vec<NodeId> = graph.node_ids().collect();
                Some(all[hazard_rng.gen_range(0..all.len())])
            }
            IgnitionSpec::Node(n) => Some(n),
            IgnitionSpec::None => None,
        };
        if let Some(node) = ignited {
            hazard.ignite(node, 0.0)?;
            events.push(SimEvent::Ignition { node, time_s: 0.0 });
        }

        let exits: BTreeSet<VertexId> = graph.exits().iter().map(|n| n.0).collect();
        let mut nav = match scenario.algorithm {
            Algorithm::Dijkstra => NavService::Dijkstra,
            Algorithm::Cpnst | Algorithm::CpnSpf => {
                NavService::Cpn(CpnEngine::new(params.cpn, params.rnn, exits.clone()))
            }
        };
        let nav_topo = Topology::from_building(graph);

        // The route service studies the floor plan before anyone moves: one
        // discovery burst from every interior node seeds the gates, so the
        // first real route requests already rank the corridors sensibly.
        // Packets lost to flames double as a day-zero hazard report.
        let mut suspected_fire: BTreeSet<NodeId> = BTreeSet::new();
        if let NavService::Cpn(engine) = &mut nav {
            let occupancy = BTreeMap::new();
            for v in nav_topo.vertices().collect::<Vec<_>>() {
                if exits.contains(&v) {
                    continue;
                }
                let mut scout = FireScout {
                    hazard: &hazard,
                    time_s: 0.0,
                    hits: BTreeSet::new(),
                };
                {
                    let goal = NavGoal {
                        graph,
                        hazard: &hazard,
                        suspected: &suspected_fire,
                        time_s: 0.0,
                        occupancy: &occupancy,
                        walk_speed_mps: params.cpn.walk_speed_mps,
                        congestion_gamma: params.cpn.congestion_gamma,
                    };
                    engine.explore(&nav_topo, &goal, v, &mut rng, &mut scout, 0.0)?;
                }
                suspected_fire.extend(scout.hits);
            }
        }

        // relay vertex space: phones are evacuee ids, access points follow
        let ap_base = scenario.evacuee_count;
        let mut ap_vertices = Vec::new();
        for (k, &node) in graph.access_points().iter().enumerate() {
            ap_vertices.push((ap_base + k as u32, graph.position(node)?));
        }
        let relay = RelayService::new(
            params.comms,
            params.energy.clone(),
            params.cpn,
            params.rnn,
            ap_base,
            ap_vertices.len() as u32,
        );

        let step_s = params.sim.step_s;
        let spread_every = ((params.hazard.spread_tick_s / step_s).round() as u32).max(1);
        let discovery_every = ((params.comms.discovery_tick_s / step_s).round() as u32).max(1);

        Ok(World {
            graph,
            params,
            scenario,
            rng,
            hazard_rng,
            comms_rng,
            hazard,
            fleet,
            evacuees,
            nav,
            nav_topo,
            relay,
            ap_vertices,
            suspected_fire,
            events,
            evac_times_s: Vec::new(),
            step_count: 0,
            time_s: 0.0,
            spread_every,
            discovery_every,
        })
    }

    pub fn evacuees(&self) -> &[Evacuee] {
        &self.evacuees
    }

    pub fn fleet(&self) -> &PhoneFleet {
        &self.fleet
    }

    pub fn hazard(&self) -> &HazardField {
        &self.hazard
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn is_finished(&self) -> bool {
        self.evacuees.iter().all(|e| e.life != LifeState::Moving)
    }

    fn burning(&self, node: NodeId, t: f64) -> bool {
        self.hazard.burning(node, t).expect("nodes validated at construction")
    }

    fn position_of(&self, e: &Evacuee) -> [f64; 3] {
        match e.location {
            Location::AtNode(n) => self.graph.position(n).expect("valid node"),
            Location::OnEdge { from, to, progress_m } => {
                let a = self.graph.position(from).expect("valid node");
                let b = self.graph.position(to).expect("valid node");
                let length = self
                    .graph
                    .edge_between(from, to)
                    .expect("evacuees travel existing edges")
                    .length_m;
                let f = (progress_m / length).clamp(0.0, 1.0);
                [
                    a[0] + (b[0] - a[0]) * f,
                    a[1] + (b[1] - a[1]) * f,
                    a[2] + (b[2] - a[2]) * f,
                ]
            }
        }
    }

    /// Node an evacuee is counted at for visibility: its node, or the node
    /// it is walking toward.
    fn anchor_of(&self, e: &Evacuee) -> NodeId {
        match e.location {
            Location::AtNode(n) => n,
            Location::OnEdge { to, .. } => to,
        }
    }

    fn edge_occupancy(&self) -> BTreeMap<(u32, u32), u32> {
        let mut occupancy = BTreeMap::new();
        for e in &self.evacuees {
            if e.life != LifeState::Moving {
                continue;
            }
            if let Location::OnEdge { from, to, .. } = e.location {
                *occupancy.entry(edge_key(from, to)).or_insert(0) += 1;
            }
        }
        occupancy
    }

    /// Advance the world by one step through the fixed phase order.
    pub fn step(&mut self) -> Result<(), SimError> {
        self.step_count += 1;
        let t = self.step_count as f64 * self.params.sim.step_s;
        self.time_s = t;

        self.phase_hazard(t);
        self.phase_casualties(t);
        self.phase_comms(t)?;
        self.phase_decisions(t)?;
        let arrivals = self.phase_movement();
        self.phase_arrivals(t, arrivals);
        self.phase_bookkeeping(t);
        Ok(())
    }

    fn phase_hazard(&mut self, t: f64) {
        if self.step_count.is_multiple_of(self.spread_every) {
            let ignited = self.hazard.spread(self.graph, t, &mut self.hazard_rng);
            for node in ignited {
                self.events.push(SimEvent::FireSpread { node, time_s: t });
            }
        }
    }

    fn phase_casualties(&mut self, t: f64) {
        for idx in 0..self.evacuees.len() {
            if self.evacuees[idx].life != LifeState::Moving {
                continue;
            }
            let hit = match self.evacuees[idx].location {
                Location::AtNode(n) => self.burning(n, t),
                Location::OnEdge { from, to, .. } => self.burning(from, t) || self.burning(to, t),
            };
            if hit {
                self.evacuees[idx].life = LifeState::Dead;
                self.events.push(SimEvent::Casualty {
                    evacuee: self.evacuees[idx].id,
                    time_s: t,
                });
            }
        }
    }

    fn build_phone_topo(&self) -> Topology {
        let mut phones = BTreeMap::new();
        for e in &self.evacuees {
            if e.life == LifeState::Moving && self.fleet.is_active(e.id) {
                phones.insert(e.id, self.position_of(e));
            }
        }
        build_phone_net(&phones, &self.ap_vertices, self.params.comms.bluetooth_range_m)
    }

    fn phase_comms(&mut self, t: f64) -> Result<(), SimError> {
        let discovery_tick = self.scenario.comms == CommsMode::Ahcpn
            && (self.step_count - 1).is_multiple_of(self.discovery_every);
        let uploaders: Vec<usize> = (0..self.evacuees.len())
            .filter(|&i| {
                self.evacuees[i].life == LifeState::Moving && self.evacuees[i].pending_localization
            })
            .collect();
        let topo = if self.scenario.comms == CommsMode::Ahcpn
            && (discovery_tick || !uploaders.is_empty())
        {
            self.build_phone_topo()
        } else {
            Topology::new()
        };

        let photo = self.params.comms.photo_bytes;
        let instruction_nj = self.params.energy.tx_energy_nj(
            LinkMode::ThreeG,
            Direction::Download,
            self.params.comms.instruction_bytes,
        );
        for idx in uploaders {
            self.evacuees[idx].pending_localization = false;
            let id = self.evacuees[idx].id;
            if !self.fleet.is_active(id) {
                continue;
            }
            let node = self.anchor_of(&self.evacuees[idx]);
            let report = self.relay.upload(
                &topo,
                &mut self.fleet,
                id,
                photo,
                self.scenario.comms,
                &mut self.comms_rng,
                t,
            )?;
            let mut energy_nj = report.total_nj();
            // the cloud answers every successful localization with a small
            // instruction payload over cellular
            if report.success() && self.fleet.is_active(id) {
                energy_nj += self.fleet.debit(id, instruction_nj).drawn_nj;
            }
            self.events.push(SimEvent::Upload {
                evacuee: id,
                node,
                time_s: t,
                relayed: matches!(report.outcome, DeliveryOutcome::Relayed(_)),
                energy_nj,
            });
        }

        if discovery_tick {
            for idx in 0..self.evacuees.len() {
                let id = self.evacuees[idx].id;
                if self.evacuees[idx].life != LifeState::Moving || !self.fleet.is_active(id) {
                    continue;
                }
                self.relay
                    .discover_relay_route(&topo, &mut self.fleet, id, photo, &mut self.comms_rng, t)?;
            }
        }
        Ok(())
    }

    fn phase_decisions(&mut self, t: f64) -> Result<(), SimError> {
        let occupancy = self.edge_occupancy();
        let deciders: Vec<(usize, NodeId)> = self
            .evacuees
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match (e.life, e.location) {
                (LifeState::Moving, Location::AtNode(n)) => Some((i, n)),
                _ => None,
            })
            .collect();
        for (idx, node) in deciders {
            let id = self.evacuees[idx].id;
            let mut follow: Option<u32> = None;
            let choice = if self.fleet.is_active(id) {
                self.routed_choice(idx, node, t, &occupancy)?
            } else {
                let (c, f) = self.depleted_choice(idx, node, t);
                follow = f;
                c
            };
            let e = &mut self.evacuees[idx];
            e.follow_target = follow;
            if let Some(next) = choice {
                debug_assert!(self.graph.edge_between(node, next).is_some());
                e.location = Location::OnEdge {
                    from: node,
                    to: next,
                    progress_m: 0.0,
                };
            }
        }
        Ok(())
    }

    /// Active-phone decision: the next hop of the route service's current
    /// answer, with cpn-spf mixing in the social force.
    fn routed_choice(
        &mut self,
        idx: usize,
        node: NodeId,
        t: f64,
        occupancy: &BTreeMap<(u32, u32), u32>,
    ) -> Result<Option<NodeId>, SimError> {
        if self.scenario.algorithm == Algorithm::CpnSpf && self.params.sim.p_spf > 0.0 {
            let take_spf = self.rng.gen::<f64>() < self.params.sim.p_spf;
            if take_spf {
                if let Some(next) = self.spf_choice(idx, node) {
                    let goal = self.nav_goal(t, occupancy);
                    if goal.measure_hop(node.0, next.0, true).is_some() {
                        self.evacuees[idx].route = Some(vec![node, next]);
                        return Ok(Some(next));
                    }
                }
                // zero force, no same-floor alignment, or a blocked pick all
                // fall back to the packet-routed hop
            }
        }
        match self.scenario.algorithm {
            Algorithm::Dijkstra => {
                let exits = self.graph.exits();
                let cost = |u: NodeId, v: NodeId| {
                    let known = |n| self.hazard.known_burning(n, t).unwrap_or(true);
                    if known(u) || known(v) {
                        return None;
                    }
                    self.graph.edge_between(u, v).map(|e| e.length_m)
                };
                let path = dijkstra_route(self.graph, node, exits, cost)?;
                let next = path.as_ref().and_then(|p| p.get(1).copied());
                self.evacuees[idx].route = path;
                Ok(next)
            }
            Algorithm::Cpnst | Algorithm::CpnSpf => {
                let mut scout = FireScout {
                    hazard: &self.hazard,
                    time_s: t,
                    hits: BTreeSet::new(),
                };
                {
                    let goal = NavGoal {
                        graph: self.graph,
                        hazard: &self.hazard,
                        suspected: &self.suspected_fire,
                        time_s: t,
                        occupancy,
                        walk_speed_mps: self.params.cpn.walk_speed_mps,
                        congestion_gamma: self.params.cpn.congestion_gamma,
                    };
                    let NavService::Cpn(engine) = &mut self.nav else {
                        unreachable!("cpn algorithms carry a cpn engine");
                    };
                    engine.explore(&self.nav_topo, &goal, node.0, &mut self.rng, &mut scout, t)?;
                }
                self.suspected_fire.extend(scout.hits);
                // packet deaths during the burst may have flagged new nodes,
                // so judge the cached route with the updated picture
                let goal = NavGoal {
                    graph: self.graph,
                    hazard: &self.hazard,
                    suspected: &self.suspected_fire,
                    time_s: t,
                    occupancy,
                    walk_speed_mps: self.params.cpn.walk_speed_mps,
                    congestion_gamma: self.params.cpn.congestion_gamma,
                };
                let NavService::Cpn(engine) = &mut self.nav else {
                    unreachable!("cpn algorithms carry a cpn engine");
                };
                let path = engine.best_route(&goal, node.0);
                let next = path.as_ref().and_then(|p| p.get(1).map(|&v| NodeId(v)));
                self.evacuees[idx].route =
                    path.map(|p| p.into_iter().map(NodeId).collect());
                Ok(next)
            }
        }
    }

    fn nav_goal<'a>(
        &'a self,
        t: f64,
        occupancy: &'a BTreeMap<(u32, u32), u32>,
    ) -> NavGoal<'a> {
        NavGoal {
            graph: self.graph,
            hazard: &self.hazard,
            suspected: &self.suspected_fire,
            time_s: t,
            occupancy,
            walk_speed_mps: self.params.cpn.walk_speed_mps,
            congestion_gamma: self.params.cpn.congestion_gamma,
        }
    }

    /// Direction of the social force at this node, resolved to a same-floor
    /// neighbor; `None` when the force abstains or nothing aligns.
    fn spf_choice(&self, idx: usize, node: NodeId) -> Option<NodeId> {
        let here = self.position_of(&self.evacuees[idx]);
        let mut others = Vec::new();
        for (j, other) in self.evacuees.iter().enumerate() {
            if j == idx || other.life != LifeState::Moving {
                continue;
            }
            let p = self.position_of(other);
            if (p[2] - here[2]).abs() <= crate::building::FLOOR_HEIGHT_M / 2.0 {
                others.push([p[0], p[1]]);
            }
        }
        let force = resultant_force([here[0], here[1]], &others, &self.params.spf);
        spf_next_node(self.graph, node, force).expect("valid node")
    }

    /// Phone-dead decision: follow the nearest visible evacuee whose phone
    /// still works, otherwise wander to a random non-burning neighbor.
    fn depleted_choice(&mut self, idx: usize, node: NodeId, t: f64) -> (Option<NodeId>, Option<u32>) {
        let here = self.graph.position(node).expect("valid node");
        let mut nearest: Option<(f64, u32, NodeId)> = None;
        for (j, other) in self.evacuees.iter().enumerate() {
            if j == idx || other.life != LifeState::Moving || !self.fleet.is_active(other.id) {
                continue;
            }
            let anchor = self.anchor_of(other);
            let visible = self
                .graph
                .line_of_sight(node, anchor, &self.hazard, t)
                .expect("valid nodes");
            if !visible {
                continue;
            }
            let d = distance_3d(here, self.graph.position(anchor).expect("valid node"));
            let better = match nearest {
                None => true,
                Some((best_d, best_id, _)) => {
                    d < best_d || (d == best_d && other.id < best_id)
                }
            };
            if better {
                nearest = Some((d, other.id, anchor));
            }
        }
        if let Some((_, target, anchor)) = nearest {
            // walk with the guide when sharing its node, else step toward it
            let step = if anchor == node { None } else { Some(anchor) };
            return (step, Some(target));
        }
        let candidates: Vec<NodeId> = self
            .graph
            .neighbors(node)
            .iter()
            .map(|&(n, _)| n)
            .filter(|&n| !self.burning(n, t))
            .collect();
        if candidates.is_empty() {
            (None, None)
        } else {
            (Some(candidates[self.rng.gen_range(0..candidates.len())]), None)
        }
    }

    fn phase_movement(&mut self) -> Vec<(usize, NodeId)> {
        let occupancy = self.edge_occupancy();
        let step_s = self.params.sim.step_s;
        let gamma = self.params.cpn.congestion_gamma;
        let mut arrivals = Vec::new();
        for idx in 0..self.evacuees.len() {
            if self.evacuees[idx].life != LifeState::Moving {
                continue;
            }
            let Location::OnEdge { from, to, progress_m } = self.evacuees[idx].location else {
                continue;
            };
            let length = self
                .graph
                .edge_between(from, to)
                .expect("evacuees travel existing edges")
                .length_m;
            let occupants = occupancy[&edge_key(from, to)];
            let divisor = 1.0 + gamma * (occupants - 1) as f64;
            let advanced = progress_m + self.evacuees[idx].speed_mps * step_s / divisor;
            if advanced + 1e-9 >= length {
                self.evacuees[idx].location = Location::AtNode(to);
                arrivals.push((idx, to));
            } else {
                self.evacuees[idx].location = Location::OnEdge {
                    from,
                    to,
                    progress_m: advanced,
                };
            }
        }
        arrivals
    }

    fn phase_arrivals(&mut self, t: f64, arrivals: Vec<(usize, NodeId)>) {
        for (idx, node) in arrivals {
            if self.graph.exits().contains(&node) {
                let e = &mut self.evacuees[idx];
                e.life = LifeState::Evacuated;
                e.evacuated_at_s = Some(t);
                e.route = None;
                self.evac_times_s.push(t);
                self.events.push(SimEvent::Evacuated {
                    evacuee: self.evacuees[idx].id,
                    time_s: t,
                });
            } else if self.graph.node(node).expect("valid node").kind == NodeKind::Landmark {
                self.evacuees[idx].pending_localization = true;
            }
        }
    }

    fn phase_bookkeeping(&mut self, t: f64) {
        for phone in self.fleet.take_new_drained() {
            self.events.push(SimEvent::PhoneDrained {
                evacuee: phone,
                time_s: t,
            });
        }
        debug_assert_eq!(
            self.evacuees.len(),
            self.evacuees
                .iter()
                .filter(|e| {
                    matches!(
                        e.life,
                        LifeState::Moving | LifeState::Evacuated | LifeState::Dead
                    )
                })
                .count()
        );
    }

    /// Drive the run to completion and summarize it.
    pub fn run(&mut self) -> Result<RunMetrics, SimError> {
        while !self.is_finished() && self.step_count < self.params.sim.max_steps {
            self.step()?;
        }
        Ok(self.metrics())
    }

    pub fn metrics(&self) -> RunMetrics {
        let count = self.evacuees.len() as u32;
        let survivors = self
            .evacuees
            .iter()
            .filter(|e| e.life == LifeState::Evacuated)
            .count() as u32;
        let casualties = self
            .evacuees
            .iter()
            .filter(|e| e.life == LifeState::Dead)
            .count() as u32;
        let trapped_at_cap = count - survivors - casualties;
        let survivor_pct = if count == 0 {
            0.0
        } else {
            survivors as f64 / count as f64
        };
        let mean_evacuation_time_s = if self.evac_times_s.is_empty() {
            0.0
        } else {
            self.evac_times_s.iter().sum::<f64>() / self.evac_times_s.len() as f64
        };
        let ledger_balanced = self.fleet.ledger_balanced();
        assert!(ledger_balanced, "energy ledger must balance exactly");
        RunMetrics {
            survivors,
            survivor_pct,
            casualties,
            trapped_at_cap,
            drained_phones: self.fleet.drained_count(),
            mean_evacuation_time_s,
            total_energy_j: self.fleet.consumed_j(),
            total_energy_nj: self.fleet.consumed_nj(),
            ledger_balanced,
            steps: self.step_count,
            events: self.events.clone(),
        }
    }
}

/// Run one scenario start to finish.
pub fn run_scenario(
    graph: &BuildingGraph,
    params: &Params,
    scenario: Scenario,
) -> Result<RunMetrics, SimError> {
    World::new(graph, params.clone(), scenario)?.run()
}

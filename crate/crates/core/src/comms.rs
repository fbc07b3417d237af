//! Energy-aware ad-hoc relaying. Phones within Bluetooth range of each other
//! and of the deployed access points form a dynamic graph; a packet-routing
//! engine over that graph searches for upload paths that minimize a goal
//! combining per-relay battery drain factors with total transmission delay.
//! Direct cellular upload is the baseline and the fallback.

use crate::building::distance_3d;
use crate::cpn::{
    CpnEngine, CpnError, CpnParams, GoalFunction, HopMeasure, SpOutcome, Topology, VertexId,
    WalkMonitor,
};
use crate::energy::{Direction, EnergyModel, LinkMode, PhoneFleet};
use crate::rnn::RnnParams;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// How a localization payload travels to the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommsMode {
    Direct3g,
    Ahcpn,
}

impl fmt::Display for CommsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommsMode::Direct3g => "direct3g",
            CommsMode::Ahcpn => "ahcpn",
        })
    }
}

impl FromStr for CommsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<CommsMode, String> {
        match s.to_ascii_lowercase().as_str() {
            "direct3g" => Ok(CommsMode::Direct3g),
            "ahcpn" => Ok(CommsMode::Ahcpn),
            other => Err(format!(
                "unknown comms mode '{other}' (expected direct3g or ahcpn)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommsParams {
    /// Scale constant of the energy/delay goal.
    pub alpha: f64,
    /// Bluetooth reach, 3-D metres.
    pub bluetooth_range_m: f64,
    /// Payload of one exploratory packet.
    pub smart_packet_bytes: u64,
    /// Period of the background route-discovery sweep, simulated seconds.
    pub discovery_tick_s: f64,
    /// Localization photo payload.
    pub photo_bytes: u64,
    /// Cloud instruction payload (always downloaded over cellular).
    pub instruction_bytes: u64,
    /// Upload over cellular when no admissible relay path exists.
    pub fallback_to_3g: bool,
}

impl Default for CommsParams {
    fn default() -> Self {
        CommsParams {
            alpha: 1.0,
            bluetooth_range_m: 10.0,
            smart_packet_bytes: 100,
            discovery_tick_s: 10.0,
            photo_bytes: 500_000,
            instruction_bytes: 1_000,
            fallback_to_3g: true,
        }
    }
}

/// Battery-drain availability factor of a relay: remaining / (remaining −
/// required). `None` (exclusion) when the required energy meets or exceeds
/// what is left, which also covers the division-by-zero boundary.
pub fn availability(remaining_nj: u64, required_nj: u64) -> Option<f64> {
    if required_nj >= remaining_nj {
        None
    } else {
        Some(remaining_nj as f64 / (remaining_nj - required_nj) as f64)
    }
}

/// Energy/delay goal of a path: alpha × product of hop availability factors
/// × sum of hop delays. Minimized by the relay engine.
pub fn eq_goal(alpha: f64, availabilities: &[f64], delays_s: &[f64]) -> f64 {
    alpha * availabilities.iter().product::<f64>() * delays_s.iter().sum::<f64>()
}

/// An admissible relay path priced at quote time: one availability factor and
/// one delay per hop, sender-side. The final access point contributes no
/// factor (it is mains powered).
#[derive(Debug, Clone, PartialEq)]
pub struct PathQuote {
    pub path: Vec<VertexId>,
    pub availabilities: Vec<f64>,
    pub delays_s: Vec<f64>,
    pub alpha: f64,
    pub goal: f64,
}

impl PathQuote {
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    /// Re-derives the goal from the stored hops; bit-identical to `goal`.
    pub fn recompute_goal(&self) -> f64 {
        eq_goal(self.alpha, &self.availabilities, &self.delays_s)
    }
}

/// Sender-side energy a phone must spend to move `payload_bytes` along:
/// the source only uploads, every intermediate downloads then uploads.
fn sender_cost_nj(energy: &EnergyModel, payload_bytes: u64, first_hop: bool) -> u64 {
    let up = energy.tx_energy_nj(LinkMode::Bluetooth, Direction::Upload, payload_bytes);
    if first_hop {
        up
    } else {
        up + energy.tx_energy_nj(LinkMode::Bluetooth, Direction::Download, payload_bytes)
    }
}

/// Price `path` for `payload_bytes` against the fleet's current batteries.
/// `None` when any phone on the path is excluded. Vertices below `ap_base`
/// are phones indexed into the fleet; the path must end at an access point
/// and contain no other one.
pub fn quote_path(
    path: &[VertexId],
    ap_base: VertexId,
    fleet: &PhoneFleet,
    payload_bytes: u64,
    energy: &EnergyModel,
    alpha: f64,
) -> Option<PathQuote> {
    if path.len() < 2 || *path.last().unwrap() < ap_base {
        return None;
    }
    let hop_delay = energy.tx_time_s(LinkMode::Bluetooth, payload_bytes);
    let mut availabilities = Vec::with_capacity(path.len() - 1);
    let mut delays = Vec::with_capacity(path.len() - 1);
    for (i, &sender) in path[..path.len() - 1].iter().enumerate() {
        if sender >= ap_base {
            return None;
        }
        let need = sender_cost_nj(energy, payload_bytes, i == 0);
        availabilities.push(availability(fleet.remaining_nj(sender), need)?);
        delays.push(hop_delay);
    }
    let goal = eq_goal(alpha, &availabilities, &delays);
    Some(PathQuote {
        path: path.to_vec(),
        availabilities,
        delays_s: delays,
        alpha,
        goal,
    })
}

/// Build the phone/access-point adjacency from 3-D positions: phones link to
/// each other and to access points within Bluetooth range; access points do
/// not interlink.
pub fn build_phone_net(
    phones: &BTreeMap<VertexId, [f64; 3]>,
    access_points: &[(VertexId, [f64; 3])],
    range_m: f64,
) -> Topology {
    let mut topo = Topology::new();
    for &v in phones.keys() {
        topo.insert_vertex(v);
    }
    for &(v, _) in access_points {
        topo.insert_vertex(v);
    }
    let list: Vec<(VertexId, [f64; 3])> = phones.iter().map(|(&v, &p)| (v, p)).collect();
    for (i, &(a, pa)) in list.iter().enumerate() {
        for &(b, pb) in &list[i + 1..] {
            if distance_3d(pa, pb) <= range_m {
                topo.insert_edge(a, b);
            }
        }
        for &(ap, pap) in access_points {
            if distance_3d(pa, pap) <= range_m {
                topo.insert_edge(a, ap);
            }
        }
    }
    topo
}

/// Relay-search goal evaluated against a battery snapshot: each hop carries
/// the sending phone's availability factor for the payload and the payload's
/// Bluetooth transmission time.
pub struct RelayGoal {
    batteries_nj: BTreeMap<VertexId, u64>,
    first_hop_nj: u64,
    relay_hop_nj: u64,
    hop_delay_s: f64,
    alpha: f64,
}

impl RelayGoal {
    pub fn new(
        fleet: &PhoneFleet,
        topo: &Topology,
        ap_base: VertexId,
        payload_bytes: u64,
        energy: &EnergyModel,
        alpha: f64,
    ) -> RelayGoal {
        let batteries_nj = topo
            .vertices()
            .filter(|&v| v < ap_base)
            .map(|v| (v, fleet.remaining_nj(v)))
            .collect();
        RelayGoal {
            batteries_nj,
            first_hop_nj: sender_cost_nj(energy, payload_bytes, true),
            relay_hop_nj: sender_cost_nj(energy, payload_bytes, false),
            hop_delay_s: energy.tx_time_s(LinkMode::Bluetooth, payload_bytes),
            alpha,
        }
    }
}

impl GoalFunction for RelayGoal {
    fn measure_hop(&self, from: VertexId, _to: VertexId, first_hop: bool) -> Option<HopMeasure> {
        let remaining = *self.batteries_nj.get(&from)?;
        let need = if first_hop {
            self.first_hop_nj
        } else {
            self.relay_hop_nj
        };
        let factor = availability(remaining, need)?;
        Some(HopMeasure {
            additive: self.hop_delay_s,
            factor,
        })
    }

    fn scale(&self) -> f64 {
        self.alpha
    }
}

/// Charges discovery-packet radio costs to the fleet as packets hop:
/// Bluetooth upload on the sender, download on a phone receiver (access
/// points are free). A phone that cannot afford its share declines the
/// packet — the hop fails without touching the battery.
pub struct FleetDebiter<'a> {
    fleet: &'a mut PhoneFleet,
    ap_base: VertexId,
    up_nj: u64,
    down_nj: u64,
}

impl<'a> FleetDebiter<'a> {
    pub fn new(
        fleet: &'a mut PhoneFleet,
        ap_base: VertexId,
        packet_bytes: u64,
        energy: &EnergyModel,
    ) -> FleetDebiter<'a> {
        FleetDebiter {
            fleet,
            ap_base,
            up_nj: energy.tx_energy_nj(LinkMode::Bluetooth, Direction::Upload, packet_bytes),
            down_nj: energy.tx_energy_nj(LinkMode::Bluetooth, Direction::Download, packet_bytes),
        }
    }
}

impl WalkMonitor for FleetDebiter<'_> {
    fn on_hop(&mut self, from: VertexId, to: VertexId) -> bool {
        if from < self.ap_base && self.fleet.remaining_nj(from) <= self.up_nj {
            return false;
        }
        if to < self.ap_base && self.fleet.remaining_nj(to) <= self.down_nj {
            return false;
        }
        if from < self.ap_base {
            self.fleet.debit(from, self.up_nj);
        }
        if to < self.ap_base {
            self.fleet.debit(to, self.down_nj);
        }
        true
    }
}

/// Where a delivery ended up.
#[derive(Debug, Clone, PartialEq)]
pub enum DeliveryOutcome {
    /// Hopped phone-to-phone to an access point along this path.
    Relayed(Vec<VertexId>),
    /// Single cellular upload (chosen mode or fallback).
    Direct3g,
    /// No admissible route and fallback disabled, or a phone died mid-path;
    /// energy spent before the failure stays debited.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryReport {
    pub outcome: DeliveryOutcome,
    /// Joules actually drawn from each phone, in nanojoules.
    pub per_phone_nj: BTreeMap<VertexId, u64>,
    pub latency_s: f64,
}

impl DeliveryReport {
    pub fn success(&self) -> bool {
        !matches!(self.outcome, DeliveryOutcome::Failed)
    }

    pub fn total_nj(&self) -> u64 {
        self.per_phone_nj.values().sum()
    }
}

/// The upload service: owns the relay routing engine and prices, debits, and
/// reports every payload movement.
pub struct RelayService {
    engine: CpnEngine,
    params: CommsParams,
    energy: EnergyModel,
    ap_base: VertexId,
}

impl RelayService {
    pub fn new(
        params: CommsParams,
        energy: EnergyModel,
        cpn: CpnParams,
        rnn: RnnParams,
        ap_base: VertexId,
        ap_count: u32,
    ) -> RelayService {
        let destinations: BTreeSet<VertexId> = (0..ap_count).map(|k| ap_base + k).collect();
        RelayService {
            engine: CpnEngine::new(cpn, rnn, destinations),
            params,
            energy,
            ap_base,
        }
    }

    pub fn params(&self) -> &CommsParams {
        &self.params
    }

    pub fn engine(&self) -> &CpnEngine {
        &self.engine
    }

    pub fn ap_base(&self) -> VertexId {
        self.ap_base
    }

    /// Emit a discovery burst of smart packets from `phone` (each debited
    /// per Bluetooth hop), then price the engine's cached route for
    /// `payload_bytes` against current batteries. An inadmissible or
    /// disconnected cached route is dropped and `None` returned. The burst
    /// stops early if the source phone drains.
    pub fn discover_relay_route<R: Rng + ?Sized>(
        &mut self,
        topo: &Topology,
        fleet: &mut PhoneFleet,
        phone: VertexId,
        payload_bytes: u64,
        rng: &mut R,
        now_s: f64,
    ) -> Result<Option<PathQuote>, CpnError> {
        for _ in 0..self.engine.params().packets_per_recompute {
            if !fleet.is_active(phone) {
                break;
            }
            let goal = RelayGoal::new(
                fleet,
                topo,
                self.ap_base,
                payload_bytes,
                &self.energy,
                self.params.alpha,
            );
            let mut monitor =
                FleetDebiter::new(fleet, self.ap_base, self.params.smart_packet_bytes, &self.energy);
            match self.engine.send_smart_packet(topo, &goal, phone, rng, &mut monitor) {
                Ok(SpOutcome::Reached(walk)) => {
                    self.engine.process_ack(goal.scale(), &walk, now_s)?;
                }
                Ok(SpOutcome::Dropped) => {}
                Err(CpnError::BlockedAtSource(_)) | Err(CpnError::UnknownVertex(_)) => break,
                Err(e) => return Err(e),
            }
        }
        let Some(entry) = self.engine.cached(phone) else {
            return Ok(None);
        };
        let connected = entry.path.windows(2).all(|w| topo.has_edge(w[0], w[1]));
        let quote = if connected {
            quote_path(
                &entry.path,
                self.ap_base,
                fleet,
                payload_bytes,
                &self.energy,
                self.params.alpha,
            )
        } else {
            None
        };
        if quote.is_none() {
            self.engine.invalidate(phone);
        }
        Ok(quote)
    }

    /// Move a payload from `phone` to the cloud under `mode`, debit every
    /// participant, and report the path, per-phone joules, and latency.
    #[allow(clippy::too_many_arguments)]
    pub fn upload<R: Rng + ?Sized>(
        &mut self,
        topo: &Topology,
        fleet: &mut PhoneFleet,
        phone: VertexId,
        payload_bytes: u64,
        mode: CommsMode,
        rng: &mut R,
        now_s: f64,
    ) -> Result<DeliveryReport, CpnError> {
        match mode {
            CommsMode::Direct3g => Ok(self.direct_upload(fleet, phone, payload_bytes)),
            CommsMode::Ahcpn => {
                // the energy-aware protocol never starts an exchange it
                // cannot finish: the phone must cover the upload plus the
                // instruction download that answers it, or it skips this
                // landmark and keeps the battery for a later chance
                let instr_nj = self.energy.tx_energy_nj(
                    LinkMode::ThreeG,
                    Direction::Download,
                    self.params.instruction_bytes,
                );
                let bt_up_nj =
                    self.energy
                        .tx_energy_nj(LinkMode::Bluetooth, Direction::Upload, payload_bytes);
                let refusal = DeliveryReport {
                    outcome: DeliveryOutcome::Failed,
                    per_phone_nj: BTreeMap::new(),
                    latency_s: 0.0,
                };
                if fleet.remaining_nj(phone) <= bt_up_nj + instr_nj {
                    return Ok(refusal);
                }
                match self.discover_relay_route(topo, fleet, phone, payload_bytes, rng, now_s)? {
                    Some(quote) => {
                        // the discovery burst itself spent a little; re-check
                        // the margin before committing the real upload
                        if fleet.remaining_nj(phone) <= bt_up_nj + instr_nj {
                            Ok(refusal)
                        } else {
                            Ok(self.deliver_relayed(fleet, &quote, payload_bytes))
                        }
                    }
                    None => {
                        let need = self.energy.tx_energy_nj(
                            LinkMode::ThreeG,
                            Direction::Upload,
                            payload_bytes,
                        );
                        if self.params.fallback_to_3g
                            && need + instr_nj < fleet.remaining_nj(phone)
                        {
                            Ok(self.direct_upload(fleet, phone, payload_bytes))
                        } else {
                            Ok(refusal)
                        }
                    }
                }
            }
        }
    }

    fn direct_upload(&self, fleet: &mut PhoneFleet, phone: VertexId, payload_bytes: u64) -> DeliveryReport {
        let need = self
            .energy
            .tx_energy_nj(LinkMode::ThreeG, Direction::Upload, payload_bytes);
        let debit = fleet.debit(phone, need);
        let mut per_phone_nj = BTreeMap::new();
        per_phone_nj.insert(phone, debit.drawn_nj);
        let complete = debit.drawn_nj == need;
        DeliveryReport {
            outcome: if complete {
                DeliveryOutcome::Direct3g
            } else {
                DeliveryOutcome::Failed
            },
            per_phone_nj,
            latency_s: if complete {
                self.energy.tx_time_s(LinkMode::ThreeG, payload_bytes)
            } else {
                0.0
            },
        }
    }

    fn deliver_relayed(
        &self,
        fleet: &mut PhoneFleet,
        quote: &PathQuote,
        payload_bytes: u64,
    ) -> DeliveryReport {
        let mut per_phone_nj = BTreeMap::new();
        for (i, &v) in quote.path.iter().enumerate() {
            if v >= self.ap_base {
                break;
            }
            let need = sender_cost_nj(&self.energy, payload_bytes, i == 0);
            let debit = fleet.debit(v, need);
            per_phone_nj.insert(v, debit.drawn_nj);
            if debit.drawn_nj < need {
                return DeliveryReport {
                    outcome: DeliveryOutcome::Failed,
                    per_phone_nj,
                    latency_s: 0.0,
                };
            }
        }
        DeliveryReport {
            outcome: DeliveryOutcome::Relayed(quote.path.clone()),
            per_phone_nj,
            latency_s: quote.delays_s.iter().sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const J: u64 = 1_000_000_000; // nanojoules per joule

    fn fleet_of(joules: &[f64]) -> PhoneFleet {
        PhoneFleet::new(joules.iter().map(|&j| crate::energy::Battery::from_j(j, j)).collect())
    }

    fn service(params: CommsParams, cpn: CpnParams, ap_base: VertexId, ap_count: u32) -> RelayService {
        RelayService::new(
            params,
            EnergyModel::default(),
            cpn,
            RnnParams::default(),
            ap_base,
            ap_count,
        )
    }

    #[test]
    fn availability_matches_worked_examples() {
        assert_eq!(availability(100 * J, 20 * J), Some(1.25));
        assert_eq!(availability(100 * J, 0), Some(1.0));
        assert_eq!(availability(50 * J, 50 * J), None);
        assert_eq!(availability(0, 0), None);
        assert_eq!(availability(10, 20), None);
    }

    #[test]
    fn goal_matches_worked_examples() {
        assert_eq!(eq_goal(1.0, &[2.0], &[0.5]), 1.0);
        let two_hop = eq_goal(1.0, &[1.25, 1.2], &[0.04, 0.08]);
        assert!((two_hop - 0.18).abs() < 1e-15, "got {two_hop}");
        assert_eq!(eq_goal(1.0, &[1.5, 3.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn goal_increases_in_each_hop_factor_and_delay() {
        let base = eq_goal(1.0, &[1.2, 1.1], &[0.5, 0.25]);
        assert!(eq_goal(1.0, &[1.3, 1.1], &[0.5, 0.25]) > base);
        assert!(eq_goal(1.0, &[1.2, 1.2], &[0.5, 0.25]) > base);
        assert!(eq_goal(1.0, &[1.2, 1.1], &[0.6, 0.25]) > base);
        assert!(eq_goal(1.0, &[1.2, 1.1], &[0.5, 0.35]) > base);
    }

    #[test]
    fn quote_reproduces_its_goal_bit_for_bit() {
        let fleet = fleet_of(&[1000.0, 800.0]);
        let quote = quote_path(&[0, 1, 10], 10, &fleet, 500_000, &EnergyModel::default(), 1.0)
            .expect("admissible path");
        assert_eq!(quote.goal, quote.recompute_goal());
        assert_eq!(quote.hops(), 2);
        assert!(quote.availabilities.iter().all(|&a| a >= 1.0));
        assert_eq!(quote.delays_s, vec![4.0, 4.0]);
    }

    #[test]
    fn quote_excludes_overcommitted_relays() {
        // intermediate needs download + upload = 128.91 J for a photo
        let fleet = fleet_of(&[1000.0, 128.0]);
        assert!(quote_path(&[0, 1, 10], 10, &fleet, 500_000, &EnergyModel::default(), 1.0).is_none());
        let fleet = fleet_of(&[1000.0, 130.0]);
        assert!(quote_path(&[0, 1, 10], 10, &fleet, 500_000, &EnergyModel::default(), 1.0).is_some());
    }

    #[test]
    fn phone_net_links_by_three_d_range() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        phones.insert(1, [9.0, 0.0, 0.0]);
        phones.insert(2, [18.0, 0.0, 0.0]);
        phones.insert(3, [0.0, 0.0, 4.0]); // one floor up
        let aps = vec![(10, [26.0, 0.0, 0.0])];
        let topo = build_phone_net(&phones, &aps, 10.0);
        assert!(topo.has_edge(0, 1));
        assert!(topo.has_edge(1, 2));
        assert!(!topo.has_edge(0, 2), "18 m exceeds range");
        assert!(topo.has_edge(0, 3), "4 m vertical separation is in range");
        assert!(topo.has_edge(2, 10), "phone 2 reaches the access point");
        assert!(!topo.has_edge(0, 10));
        assert_eq!(topo.vertex_count(), 5);
    }

    #[test]
    fn relay_goal_blocks_excluded_senders() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        phones.insert(1, [5.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(10, [10.0, 0.0, 0.0])], 10.0);
        let fleet = fleet_of(&[1000.0, 100.0]); // phone 1 cannot afford 128.91 J relaying
        let goal = RelayGoal::new(&fleet, &topo, 10, 500_000, &EnergyModel::default(), 1.0);
        let first = goal.measure_hop(0, 1, true).expect("source can upload");
        assert_eq!(first.additive, 4.0);
        assert!(first.factor > 1.0);
        assert!(goal.measure_hop(1, 10, false).is_none(), "relay hop excluded");
        assert!(goal.measure_hop(1, 10, true).is_some(), "as a source it could");
    }

    #[test]
    fn fleet_debiter_charges_hops_and_declines_unaffordable_ones() {
        let mut fleet = fleet_of(&[1.0, 0.0000125]); // phone 1 holds 12,500 nJ
        let energy = EnergyModel::default();
        // 100 bytes: the 13,770,000 nJ download exceeds phone 1's charge, so
        // it declines the packet and neither side is billed
        {
            let mut monitor = FleetDebiter::new(&mut fleet, 10, 100, &energy);
            assert!(!monitor.on_hop(0, 1), "receiver declines");
        }
        assert_eq!(fleet.consumed_nj(), 0);
        {
            let mut monitor = FleetDebiter::new(&mut fleet, 10, 100, &energy);
            assert!(monitor.on_hop(0, 10), "access point receives for free");
        }
        assert_eq!(fleet.consumed_nj(), 12_012_000);
        assert_eq!(fleet.drained_count(), 0);
        assert!(fleet.is_active(1));
        assert!(fleet.is_active(0));
    }

    #[test]
    fn single_hop_discovery_quotes_the_direct_path() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(1, [5.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[1500.0]);
        let mut svc = service(CommsParams::default(), CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let quote = svc
            .discover_relay_route(&topo, &mut fleet, 0, 500_000, &mut rng, 0.0)
            .unwrap()
            .expect("adjacent access point yields a quote");
        assert_eq!(quote.path, vec![0, 1]);
        assert_eq!(quote.delays_s, vec![4.0]);
        // burst of 20 packets each debits one Bluetooth upload of 100 bytes
        let after_nj = 1500 * J - 20 * 12_012_000;
        assert_eq!(fleet.remaining_nj(0), after_nj);
        let expected = availability(after_nj, 60_060_000_000).unwrap() * 4.0;
        assert_eq!(quote.goal, expected);
    }

    #[test]
    fn discovery_routes_around_an_excluded_relay() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        phones.insert(1, [6.0, 1.0, 0.0]);
        phones.insert(2, [6.0, -1.0, 0.0]);
        let topo = build_phone_net(&phones, &[(3, [12.0, 0.0, 0.0])], 10.0);
        // phone 2 cannot afford download + upload of a photo (128.91 J)
        let mut fleet = fleet_of(&[1500.0, 1500.0, 120.0]);
        // a large burst: only an epsilon-exploration at phone 1 discovers the
        // access point, so give the random walks plenty of attempts
        let params = CpnParams {
            packets_per_recompute: 150,
            ..CpnParams::default()
        };
        let mut svc = service(CommsParams::default(), params, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let quote = svc
            .discover_relay_route(&topo, &mut fleet, 0, 500_000, &mut rng, 0.0)
            .unwrap()
            .expect("the affordable relay works");
        assert_eq!(quote.path, vec![0, 1, 3]);
    }

    #[test]
    fn line_discovery_matches_the_only_simple_path() {
        // five phones in a chain, access point reachable only from the last
        let mut phones = BTreeMap::new();
        for i in 0..5u32 {
            phones.insert(i, [9.0 * i as f64, 0.0, 0.0]);
        }
        let topo = build_phone_net(&phones, &[(5, [45.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[2000.0; 5]);
        let params = CpnParams {
            packets_per_recompute: 300,
            ..CpnParams::default()
        };
        let mut svc = service(CommsParams::default(), params, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let quote = svc
            .discover_relay_route(&topo, &mut fleet, 0, 500_000, &mut rng, 0.0)
            .unwrap()
            .expect("chain is admissible");
        assert_eq!(quote.path, vec![0, 1, 2, 3, 4, 5]);
        // oracle: price the unique simple path by hand from current batteries
        let energy = EnergyModel::default();
        let mut factors = 1.0;
        for (i, v) in (0..5u32).enumerate() {
            let need = sender_cost_nj(&energy, 500_000, i == 0);
            factors *= availability(fleet.remaining_nj(v), need).unwrap();
        }
        let oracle = factors * 5.0 * 4.0;
        assert!(
            (quote.goal - oracle).abs() / oracle < 0.01,
            "quoted {} vs enumerated {}",
            quote.goal,
            oracle
        );
    }

    #[test]
    fn direct_upload_debits_the_cellular_coefficient() {
        let mut fleet = fleet_of(&[1500.0]);
        let topo = Topology::new();
        let mut svc = service(CommsParams::default(), CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Direct3g, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Direct3g);
        assert_eq!(report.per_phone_nj.get(&0), Some(&168_750_000_000));
        assert_eq!(report.latency_s, 2.0);
        assert_eq!(fleet.consumed_nj(), 168_750_000_000);
    }

    #[test]
    fn relayed_upload_debits_sender_and_reports_latency() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(1, [5.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[1500.0]);
        let mut svc = service(CommsParams::default(), CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Ahcpn, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Relayed(vec![0, 1]));
        assert_eq!(report.per_phone_nj.get(&0), Some(&60_060_000_000));
        assert_eq!(report.latency_s, 4.0);
    }

    #[test]
    fn relayed_upload_ledger_matches_hop_costs_exactly() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        phones.insert(1, [9.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(2, [18.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[1500.0, 1500.0]);
        let params = CpnParams {
            packets_per_recompute: 30,
            ..CpnParams::default()
        };
        let mut svc = service(CommsParams::default(), params, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Ahcpn, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Relayed(vec![0, 1, 2]));
        // source uploads, the relay downloads then uploads
        assert_eq!(report.per_phone_nj.get(&0), Some(&60_060_000_000));
        assert_eq!(report.per_phone_nj.get(&1), Some(&(68_850_000_000 + 60_060_000_000)));
        assert_eq!(report.total_nj(), 60_060_000_000 + 68_850_000_000 + 60_060_000_000);
        assert_eq!(report.latency_s, 8.0);
    }

    #[test]
    fn isolated_phone_falls_back_to_cellular() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(1, [50.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[1500.0]);
        let mut svc = service(CommsParams::default(), CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Ahcpn, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Direct3g);
        assert_eq!(fleet.consumed_nj(), 168_750_000_000);
    }

    #[test]
    fn unaffordable_fallback_is_refused_and_keeps_the_phone_alive() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(1, [50.0, 0.0, 0.0])], 10.0);
        // 150 J cannot cover a 168.75 J cellular photo upload
        let mut fleet = fleet_of(&[150.0]);
        let mut svc = service(CommsParams::default(), CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Ahcpn, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Failed);
        assert_eq!(fleet.consumed_nj(), 0);
        assert!(fleet.is_active(0), "refusing the upload preserves the phone");
        // the baseline mode stays blind and drains the phone instead
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Direct3g, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Failed);
        assert!(!fleet.is_active(0));
    }

    #[test]
    fn fallback_disabled_reports_failure_without_spending() {
        let mut phones = BTreeMap::new();
        phones.insert(0, [0.0, 0.0, 0.0]);
        let topo = build_phone_net(&phones, &[(1, [50.0, 0.0, 0.0])], 10.0);
        let mut fleet = fleet_of(&[1500.0]);
        let params = CommsParams {
            fallback_to_3g: false,
            ..CommsParams::default()
        };
        let mut svc = service(params, CpnParams::default(), 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let report = svc
            .upload(&topo, &mut fleet, 0, 500_000, CommsMode::Ahcpn, &mut rng, 0.0)
            .unwrap();
        assert_eq!(report.outcome, DeliveryOutcome::Failed);
        assert!(!report.success());
        assert_eq!(fleet.consumed_nj(), 0);
    }

    #[test]
    fn comms_mode_labels_round_trip() {
        assert_eq!(CommsMode::Direct3g.to_string(), "direct3g");
        assert_eq!(CommsMode::Ahcpn.to_string(), "ahcpn");
        assert_eq!("direct3g".parse::<CommsMode>().unwrap(), CommsMode::Direct3g);
        assert_eq!("Direct3G".parse::<CommsMode>().unwrap(), CommsMode::Direct3g);
        assert_eq!("ahcpn".parse::<CommsMode>().unwrap(), CommsMode::Ahcpn);
        assert!("wifi".parse::<CommsMode>().is_err());
    }
}

//! Building graphs: nodes with 3-D positions, undirected edges, exits and
//! relay access points, loaded from a JSON document.

use crate::hazard::HazardField;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

/// Vertical distance between consecutive floors, metres.
pub const FLOOR_HEIGHT_M: f64 = 4.0;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Landmark,
    Exit,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub x_m: f64,
    pub y_m: f64,
    pub floor: u32,
    pub kind: NodeKind,
}

/// An undirected edge; `length_m` is always resolved after load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: NodeId,
    pub b: NodeId,
    pub length_m: f64,
}

#[derive(Debug, Error)]
pub enum BuildingError {
    #[error("building file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("edge {a}-{b} references unknown node {missing}")]
    EdgeEndpointMissing { a: NodeId, b: NodeId, missing: NodeId },
    #[error("edge {0}-{0} is a self-loop")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge {a}-{b} has non-positive length {length_m}")]
    NonPositiveLength { a: NodeId, b: NodeId, length_m: f64 },
    #[error("building has no exit node")]
    NoExit,
    #[error("node {0} is unreachable from the rest of the building")]
    Disconnected(NodeId),
    #[error("access point {0} is not a node")]
    UnknownAccessPoint(NodeId),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileEdge {
    a: NodeId,
    b: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_m: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileDoc {
    nodes: Vec<NodeRecord>,
    edges: Vec<FileEdge>,
    #[serde(default)]
    access_points: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    access_points: BTreeSet<NodeId>,
    index: BTreeMap<NodeId, usize>,
    // Neighbor lists sorted by node id; second element is the edge index.
    adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>>,
    exits: BTreeSet<NodeId>,
}

impl BuildingGraph {
    /// Validate raw records into a graph. Edges without an explicit length get
    /// the 3-D Euclidean distance between their endpoints.
    pub fn new(
        nodes: Vec<NodeRecord>,
        edges: Vec<(NodeId, NodeId, Option<f64>)>,
        access_points: Vec<NodeId>,
    ) -> Result<BuildingGraph, BuildingError> {
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(BuildingError::DuplicateNode(n.id));
            }
        }

        let mut resolved = Vec::with_capacity(edges.len());
        let mut seen_pairs = BTreeSet::new();
        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>> =
            index.keys().map(|&id| (id, Vec::new())).collect();
        for (a, b, length_m) in edges {
            if a == b {
                return Err(BuildingError::SelfLoop(a));
            }
            for end in [a, b] {
                if !index.contains_key(&end) {
                    return Err(BuildingError::EdgeEndpointMissing { a, b, missing: end });
                }
            }
            let key = (a.min(b), a.max(b));
            if !seen_pairs.insert(key) {
                return Err(BuildingError::DuplicateEdge(key.0, key.1));
            }
            let length_m = match length_m {
                Some(l) => {
                    if !(l.is_finite() && l > 0.0) {
                        return Err(BuildingError::NonPositiveLength { a, b, length_m: l });
                    }
                    l
                }
                None => euclidean_between(&nodes[index[&a]], &nodes[index[&b]]),
            };
            let edge_idx = resolved.len();
            resolved.push(EdgeRecord { a, b, length_m });
            adjacency.get_mut(&a).unwrap().push((b, edge_idx));
            adjacency.get_mut(&b).unwrap().push((a, edge_idx));
        }
        for list in adjacency.values_mut() {
            list.sort_by_key(|&(n, _)| n);
        }

        let exits: BTreeSet<NodeId> = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Exit)
            .map(|n| n.id)
            .collect();
        if exits.is_empty() {
            return Err(BuildingError::NoExit);
        }

        // Access points default to the exits when the file lists none.
        let access_points: BTreeSet<NodeId> = if access_points.is_empty() {
            exits.clone()
        } else {
            for &ap in &access_points {
                if !index.contains_key(&ap) {
                    return Err(BuildingError::UnknownAccessPoint(ap));
                }
            }
            access_points.into_iter().collect()
        };

        let g = BuildingGraph {
            nodes,
            edges: resolved,
            access_points,
            index,
            adjacency,
            exits,
        };

        if let Some(&start) = g.index.keys().next() {
            let mut seen = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(v) = queue.pop_front() {
                for &(n, _) in g.neighbors(v) {
                    if seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            if let Some(&missing) = g.index.keys().find(|id| !seen.contains(id)) {
                return Err(BuildingError::Disconnected(missing));
            }
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn access_points(&self) -> &BTreeSet<NodeId> {
        &self.access_points
    }

    pub fn exits(&self) -> &BTreeSet<NodeId> {
        &self.exits
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeRecord, BuildingError> {
        self.index
            .get(&id)
            .map(|&i| &self.nodes[i])
            .ok_or(BuildingError::UnknownNode(id))
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.index.keys().copied()
    }

    /// Neighbors of `id` sorted by node id, with the index of the joining edge.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, usize)] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<&EdgeRecord> {
        self.adjacency
            .get(&u)?
            .iter()
            .find(|&&(n, _)| n == v)
            .map(|&(_, i)| &self.edges[i])
    }

    /// 3-D position of a node: planar coordinates plus 4 m per floor.
    pub fn position(&self, id: NodeId) -> Result<[f64; 3], BuildingError> {
        let n = self.node(id)?;
        Ok([n.x_m, n.y_m, n.floor as f64 * FLOOR_HEIGHT_M])
    }

    /// Straight-line 3-D distance between two nodes.
    pub fn euclidean_m(&self, u: NodeId, v: NodeId) -> Result<f64, BuildingError> {
        Ok(euclidean_between(self.node(u)?, self.node(v)?))
    }

    /// Two nodes can see each other when they are the same node, or adjacent
    /// on the same floor with neither endpoint on fire at time `t`.
    pub fn line_of_sight(
        &self,
        u: NodeId,
        v: NodeId,
        hazard: &HazardField,
        t: f64,
    ) -> Result<bool, BuildingError> {
        let nu = self.node(u)?;
        let nv = self.node(v)?;
        if u == v {
            return Ok(true);
        }
        Ok(nu.floor == nv.floor
            && self.edge_between(u, v).is_some()
            && !hazard.burning(u, t).unwrap_or(true)
            && !hazard.burning(v, t).unwrap_or(true))
    }

    /// Serialize back to the JSON document form (lengths explicit, so a
    /// render/load round trip reproduces the graph exactly).
    pub fn render(&self) -> String {
        let doc = FileDoc {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| FileEdge {
                    a: e.a,
                    b: e.b,
                    length_m: Some(e.length_m),
                })
                .collect(),
            access_points: self.access_points.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("building graphs always serialize")
    }
}

pub fn load_building(text: &str) -> Result<BuildingGraph, BuildingError> {
    let doc: FileDoc = serde_json::from_str(text)?;
    BuildingGraph::new(
        doc.nodes,
        doc.edges.into_iter().map(|e| (e.a, e.b, e.length_m)).collect(),
        doc.access_points,
    )
}

fn euclidean_between(a: &NodeRecord, b: &NodeRecord) -> f64 {
    let az = a.floor as f64 * FLOOR_HEIGHT_M;
    let bz = b.floor as f64 * FLOOR_HEIGHT_M;
    distance_3d([a.x_m, a.y_m, az], [b.x_m, b.y_m, bz])
}

/// Straight-line distance between two 3-D points in metres.
pub fn distance_3d(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

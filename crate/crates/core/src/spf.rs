//! Social potential field: pairwise inverse-power forces between evacuees on
//! the same floor, and the node-level movement decision they induce.

use crate::building::{BuildingGraph, BuildingError, NodeId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance substituted for coincident evacuees, along +x.
pub const COINCIDENT_EPSILON_M: f64 = 0.01;
/// Resultants weaker than this give no movement preference.
pub const FORCE_ABSTAIN_THRESHOLD: f64 = 1e-6;

/// Force-law parameters: `f(r) = -c1 / r^sigma1 + c2 / r^sigma2`, zero beyond
/// the influence radius. With the defaults the force is repulsive (negative)
/// below about 7 m and attractive out to 20 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpfParams {
    pub c1: f64,
    pub c2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub influence_radius_m: f64,
}

impl Default for SpfParams {
    fn default() -> Self {
        SpfParams {
            c1: 20.0,
            c2: 15.0,
            sigma1: 0.9478,
            sigma2: 0.8,
            influence_radius_m: 20.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SpfError {
    #[error("pairwise force undefined for non-positive separation {0}")]
    NonPositiveSeparation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceVector {
    pub fx: f64,
    pub fy: f64,
}

impl ForceVector {
    pub const ZERO: ForceVector = ForceVector { fx: 0.0, fy: 0.0 };

    pub fn magnitude(&self) -> f64 {
        (self.fx * self.fx + self.fy * self.fy).sqrt()
    }
}

/// Signed force magnitude at separation `r`: positive pulls the evacuees
/// together, negative pushes them apart, zero beyond the influence radius.
pub fn pairwise_force(r: f64, p: &SpfParams) -> Result<f64, SpfError> {
    if r.is_nan() || r <= 0.0 {
        return Err(SpfError::NonPositiveSeparation(r));
    }
    if r > p.influence_radius_m {
        return Ok(0.0);
    }
    Ok(-p.c1 / r.powf(p.sigma1) + p.c2 / r.powf(p.sigma2))
}

/// Sum of pairwise contributions on an evacuee at `self_xy` from `others`,
/// which the caller has already filtered to the same floor. Coincident
/// neighbors are treated as sitting `COINCIDENT_EPSILON_M` away along +x.
pub fn resultant_force(self_xy: [f64; 2], others: &[[f64; 2]], p: &SpfParams) -> ForceVector {
    let mut acc = ForceVector::ZERO;
    for o in others {
        let dx = o[0] - self_xy[0];
        let dy = o[1] - self_xy[1];
        let r = (dx * dx + dy * dy).sqrt();
        let (r, ux, uy) = if r == 0.0 {
            (COINCIDENT_EPSILON_M, 1.0, 0.0)
        } else {
            (r, dx / r, dy / r)
        };
        // pairwise_force already yields 0 beyond the influence radius
        let f = pairwise_force(r, p).expect("separation is positive here");
        acc.fx += f * ux;
        acc.fy += f * uy;
    }
    acc
}

/// The same-floor neighbor of `current` whose direction best matches `force`
/// (highest cosine). `None` when the force is too weak to express a
/// preference or no same-floor neighbor exists. Ties pick the smallest id.
pub fn spf_next_node(
    g: &BuildingGraph,
    current: NodeId,
    force: ForceVector,
) -> Result<Option<NodeId>, BuildingError> {
    let here = g.node(current)?;
    let mag = force.magnitude();
    if mag < FORCE_ABSTAIN_THRESHOLD {
        return Ok(None);
    }
    let mut best: Option<(NodeId, f64)> = None;
    for &(nid, _) in g.neighbors(current) {
        let n = g.node(nid)?;
        if n.floor != here.floor {
            continue;
        }
        let dx = n.x_m - here.x_m;
        let dy = n.y_m - here.y_m;
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let cos = (force.fx * dx + force.fy * dy) / (mag * len);
        match best {
            // neighbors iterate in ascending id, so strict improvement keeps
            // the smallest id on ties
            Some((_, c)) if cos <= c => {}
            _ => best = Some((nid, cos)),
        }
    }
    Ok(best.map(|(n, _)| n))
}

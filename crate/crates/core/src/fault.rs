//! Agent loss on an open chain.
//!
//! Survivors keep every desired value they stored before the loss; only the
//! identity of their neighbour changes. On the bridging edge the tail agent
//! brings its copy from its old edge toward the lost agent and the head agent
//! brings its own copy from the other side. An interior loss between edges
//! with different desired shifts therefore leaves one edge whose two copies
//! disagree, and no phase vector can zero every interaction.

use serde::{Deserialize, Serialize};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::pattern::{DesiredCopies, EdgeCopies};
use crate::topology::{AgentId, InteractionTopology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    /// Event time (s).
    pub time: f64,
    pub lost_agent: AgentId,
}

/// Removes `lost` from a chain and rewires its neighbours.
pub fn apply_agent_loss(
    topology: &InteractionTopology,
    d: &DesiredCopies,
    lost: AgentId,
) -> Result<(InteractionTopology, DesiredCopies)> {
    if !topology.is_chain() {
        return Err(Error::NotAChain);
    }
    d.check_covers(topology)?;
    let idx = topology.index_of(lost)?;
    let n = topology.n_agents();
    if n - 1 < 2 {
        return Err(Error::TooFewSurvivors(lost));
    }

    let survivors: Vec<AgentId> = topology.agent_ids().iter().copied().filter(|&a| a != lost).collect();
    let old = d.edges();
    // chain edge k joins agents k and k+1
    let copies: Vec<EdgeCopies> = if idx == 0 {
        old[1..].to_vec()
    } else if idx == n - 1 {
        old[..n - 2].to_vec()
    } else {
        let mut c = old[..idx - 1].to_vec();
        c.push(EdgeCopies {
            tail: old[idx - 1].tail,
            head: old[idx].head,
        });
        c.extend_from_slice(&old[idx + 1..]);
        c
    };
    let new_topology = InteractionTopology::chain(&survivors)?;
    Ok((new_topology, DesiredCopies::from_edge_copies(copies)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMismatch {
    pub tail: AgentId,
    pub head: AgentId,
    /// Wrapped `|copy(tail) - copy(head)|` (rad).
    pub mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub edges: Vec<EdgeMismatch>,
    /// Stale imbalance `σ = -Σ_i x_di` (rad); zero for any consistent set.
    pub imbalance: f64,
}

impl ConsistencyReport {
    pub fn max_mismatch(&self) -> f64 {
        self.edges.iter().map(|e| e.mismatch).fold(0.0, f64::max)
    }

    pub fn inconsistent_edges(&self, tol: f64) -> usize {
        self.edges.iter().filter(|e| e.mismatch > tol).count()
    }
}

pub fn consistency_report(d: &DesiredCopies, topology: &InteractionTopology) -> Result<ConsistencyReport> {
    d.check_covers(topology)?;
    let edges = (0..topology.n_edges())
        .map(|k| {
            let (tail, head) = topology.edge_ids(k);
            EdgeMismatch {
                tail,
                head,
                mismatch: d.edge(k).mismatch(),
            }
        })
        .collect();
    // Σ_i x_di telescopes to Σ_k (tail copy - head copy)
    let imbalance = d.edges().iter().map(|c| wrap(c.head - c.tail)).sum();
    Ok(ConsistencyReport { edges, imbalance })
}

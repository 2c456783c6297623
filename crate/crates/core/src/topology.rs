//! Interaction topology: the edge/agent incidence map `L` with its
//! pseudoinverse and kernel.
//!
//! Row `k` of `L` describes edge `k`: `-1` at the tail agent, `+1` at the
//! head agent, so `p = L q` yields `p_k = q_head - q_tail`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Stable agent identifier (survives re-indexing after losses).
pub type AgentId = u32;

/// Rank / kernel tolerance for singular values and Laplacian eigenvalues.
pub const RANK_TOL: f64 = 1e-10;

/// Edge between two agents, stored as indices into the topology's agent list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

/// Which end of an edge an agent sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Tail,
    Head,
}

impl Endpoint {
    /// Entry of `L` at this endpoint.
    pub fn incidence(self) -> f64 {
        match self {
            Endpoint::Tail => -1.0,
            Endpoint::Head => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTopology {
    agent_ids: Vec<AgentId>,
    edges: Vec<Edge>,
    incidence: DMatrix<f64>,
    pinv: DMatrix<f64>,
    kernel: Vec<DVector<f64>>,
    rank: usize,
    chain: bool,
}

impl InteractionTopology {
    /// Open chain `ids[0] - ids[1] - ... - ids[n-1]`, tail at the lower index.
    pub fn chain(ids: &[AgentId]) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::TooFewAgents(ids.len()));
        }
        let pairs: Vec<(AgentId, AgentId)> = ids.windows(2).map(|w| (w[0], w[1])).collect();
        Self::from_edges(ids, &pairs)
    }

    /// General topology from `(tail, head)` id pairs. Every agent must be
    /// incident to at least one edge.
    pub fn from_edges(ids: &[AgentId], pairs: &[(AgentId, AgentId)]) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::TooFewAgents(ids.len()));
        }
        let mut seen = HashSet::new();
        for &id in ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateAgent(id));
            }
        }
        let index = |id: AgentId| ids.iter().position(|&a| a == id).ok_or(Error::UnknownAgent(id));
        let mut edges = Vec::with_capacity(pairs.len());
        let mut seen_edges = HashSet::new();
        for &(t, h) in pairs {
            let (ti, hi) = (index(t)?, index(h)?);
            if ti == hi || !seen_edges.insert((ti.min(hi), ti.max(hi))) {
                return Err(Error::InvalidEdge(t, h));
            }
            edges.push(Edge { tail: ti, head: hi });
        }
        for (i, &id) in ids.iter().enumerate() {
            if !edges.iter().any(|e| e.tail == i || e.head == i) {
                return Err(Error::IsolatedAgent(id));
            }
        }

        let n = ids.len();
        let m = edges.len();
        let mut incidence = DMatrix::zeros(m, n);
        for (k, e) in edges.iter().enumerate() {
            incidence[(k, e.tail)] = -1.0;
            incidence[(k, e.head)] = 1.0;
        }
        let svd = incidence.clone().svd(true, true);
        let rank = svd.rank(RANK_TOL);
        let pinv = svd.pseudo_inverse(RANK_TOL).map_err(|e| Error::Linalg(e.to_string()))?;
        let kernel = kernel_basis(&incidence);
        let chain = m == n - 1 && edges.iter().enumerate().all(|(k, e)| e.tail == k && e.head == k + 1);

        Ok(Self {
            agent_ids: ids.to_vec(),
            edges,
            incidence,
            pinv,
            kernel,
            rank,
            chain,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn agent_ids(&self) -> &[AgentId] {
        &self.agent_ids
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(tail id, head id)` of edge `k`.
    pub fn edge_ids(&self, k: usize) -> (AgentId, AgentId) {
        let e = self.edges[k];
        (self.agent_ids[e.tail], self.agent_ids[e.head])
    }

    /// The matrix `L` (edges × agents).
    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    /// `L⁺` (agents × edges).
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Orthonormal basis of `ker L`. For a connected graph this is the single
    /// direction `1/√n · [1, …, 1]`.
    pub fn kernel_basis(&self) -> &[DVector<f64>] {
        &self.kernel
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn has_full_row_rank(&self) -> bool {
        self.rank == self.n_edges()
    }

    pub fn is_chain(&self) -> bool {
        self.chain
    }

    pub fn index_of(&self, id: AgentId) -> Result<usize> {
        self.agent_ids
            .iter()
            .position(|&a| a == id)
            .ok_or(Error::UnknownAgent(id))
    }

    /// Endpoint role of agent index `i` on edge `k`, if incident.
    pub fn endpoint(&self, k: usize, i: usize) -> Option<Endpoint> {
        let e = self.edges[k];
        if e.tail == i {
            Some(Endpoint::Tail)
        } else if e.head == i {
            Some(Endpoint::Head)
        } else {
            None
        }
    }

    /// Edges incident to agent index `i` with the agent's role on each.
    pub fn incident_edges(&self, i: usize) -> impl Iterator<Item = (usize, Endpoint)> + '_ {
        (0..self.edges.len()).filter_map(move |k| self.endpoint(k, i).map(|r| (k, r)))
    }
}

/// Kernel of `L` from the eigen-decomposition of the Laplacian `LᵀL`.
fn kernel_basis(incidence: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let laplacian = incidence.transpose() * incidence;
    let eig = SymmetricEigen::new(laplacian);
    let mut basis: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l.abs() < RANK_TOL)
        .map(|(j, _)| eig.eigenvectors.column(j).into_owned())
        .collect();
    for v in &mut basis {
        if v.sum() < 0.0 {
            v.neg_mut();
        }
    }
    basis
}

//! Phase and pattern vectors, per-endpoint desired copies, formation
//! vectors, the objective `E` and the per-agent interactions.

use nalgebra::{DMatrix, DVector};

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::topology::{AgentId, Endpoint, InteractionTopology};

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

/// Unwrapped orbit phases, one per agent (rad).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_finite(&q, "phase vector")?;
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Edge phase shifts `p_k = q_head - q_tail` (rad).
#[derive(Debug, Clone, PartialEq)]
pub struct PatternVector(Vec<f64>);

impl PatternVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_finite(&p, "pattern vector")?;
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The two agent-local copies of one edge's desired shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCopies {
    pub tail: f64,
    pub head: f64,
}

impl EdgeCopies {
    pub fn consistent(value: f64) -> Self {
        Self {
            tail: value,
            head: value,
        }
    }

    pub fn get(&self, end: Endpoint) -> f64 {
        match end {
            Endpoint::Tail => self.tail,
            Endpoint::Head => self.head,
        }
    }

    pub fn get_mut(&mut self, end: Endpoint) -> &mut f64 {
        match end {
            Endpoint::Tail => &mut self.tail,
            Endpoint::Head => &mut self.head,
        }
    }

    /// Wrapped `|tail - head|`.
    pub fn mismatch(&self) -> f64 {
        wrap(self.tail - self.head).abs()
    }
}

/// Desired edge shifts stored per endpoint: `p_dk^(i)` for each edge `k` and
/// each agent `i` incident to it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredCopies(Vec<EdgeCopies>);

impl DesiredCopies {
    /// Freshly configured formation: both endpoints hold the same value.
    pub fn consistent(values: &[f64]) -> Result<Self> {
        check_finite(values, "desired shifts")?;
        Ok(Self(values.iter().map(|&v| EdgeCopies::consistent(v)).collect()))
    }

    pub fn from_edge_copies(copies: Vec<EdgeCopies>) -> Result<Self> {
        for c in &copies {
            check_finite(&[c.tail, c.head], "desired copies")?;
        }
        Ok(Self(copies))
    }

    /// Assemble from `(edge index, agent id, value)` entries; every endpoint
    /// of every edge must be covered.
    pub fn from_entries(topology: &InteractionTopology, entries: &[(usize, AgentId, f64)]) -> Result<Self> {
        let m = topology.n_edges();
        let mut slots: Vec<[Option<f64>; 2]> = vec![[None, None]; m];
        for &(k, agent, value) in entries {
            if k >= m {
                return Err(Error::Dimension {
                    what: "desired copy edge index",
                    expected: m,
                    got: k + 1,
                });
            }
            if !value.is_finite() {
                return Err(Error::NonFiniteInput("desired copies"));
            }
            let i = topology.index_of(agent)?;
            let (tail, head) = topology.edge_ids(k);
            match topology.endpoint(k, i) {
                Some(Endpoint::Tail) => slots[k][0] = Some(value),
                Some(Endpoint::Head) => slots[k][1] = Some(value),
                None => return Err(Error::NotIncident { tail, head, agent }),
            }
        }
        let mut copies = Vec::with_capacity(m);
        for (k, slot) in slots.iter().enumerate() {
            let (tail, head) = topology.edge_ids(k);
            match slot {
                [Some(t), Some(h)] => copies.push(EdgeCopies { tail: *t, head: *h }),
                [None, _] => {
                    return Err(Error::MissingCopy {
                        tail,
                        head,
                        agent: tail,
                    })
                }
                [_, None] => {
                    return Err(Error::MissingCopy {
                        tail,
                        head,
                        agent: head,
                    })
                }
            }
        }
        Ok(Self(copies))
    }

    pub fn edges(&self) -> &[EdgeCopies] {
        &self.0
    }

    pub fn edge(&self, k: usize) -> EdgeCopies {
        self.0[k]
    }

    pub fn n_edges(&self) -> usize {
        self.0.len()
    }

    /// Flattened `[tail_0, head_0, tail_1, head_1, …]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|c| [c.tail, c.head]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        Self(
            flat.chunks_exact(2)
                .map(|c| EdgeCopies { tail: c[0], head: c[1] })
                .collect(),
        )
    }

    pub fn is_consistent(&self, tol: f64) -> bool {
        self.0.iter().all(|c| c.mismatch() <= tol)
    }

    /// One value per edge (the tail copy); meaningful when consistent.
    pub fn tail_values(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.tail).collect()
    }

    /// Checks that there is a copy pair for every edge of `topology`.
    pub fn check_covers(&self, topology: &InteractionTopology) -> Result<()> {
        let m = topology.n_edges();
        if self.0.len() < m {
            let (tail, head) = topology.edge_ids(self.0.len());
            return Err(Error::MissingCopy {
                tail,
                head,
                agent: tail,
            });
        }
        check_len("desired copies", m, self.0.len())
    }
}

/// `x = -Lᵀ p` and the agent-local targets `x_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationVector {
    pub x: Vec<f64>,
    pub x_d: Vec<f64>,
}

impl FormationVector {
    /// `x - x_d` without angle wrapping.
    pub fn residual(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x_d).map(|(a, b)| a - b).collect()
    }
}

/// `p = L q`, evaluated edge by edge as `q_head - q_tail`.
pub fn pattern_of(topology: &InteractionTopology, q: &PhaseVector) -> Result<PatternVector> {
    check_len("phase vector", topology.n_agents(), q.len())?;
    Ok(PatternVector(pattern_slice(topology, q.as_slice())))
}

pub(crate) fn pattern_slice(topology: &InteractionTopology, q: &[f64]) -> Vec<f64> {
    topology.edges().iter().map(|e| q[e.head] - q[e.tail]).collect()
}

pub fn formation_vectors(
    topology: &InteractionTopology,
    p: &PatternVector,
    d: &DesiredCopies,
) -> Result<FormationVector> {
    check_len("pattern vector", topology.n_edges(), p.len())?;
    d.check_covers(topology)?;
    let n = topology.n_agents();
    let mut x = vec![0.0; n];
    let mut x_d = vec![0.0; n];
    for (k, e) in topology.edges().iter().enumerate() {
        let c = d.edge(k);
        x[e.tail] += p.as_slice()[k];
        x[e.head] -= p.as_slice()[k];
        x_d[e.tail] += c.tail;
        x_d[e.head] -= c.head;
    }
    Ok(FormationVector { x, x_d })
}

/// `(I - L L⁺) p_d`; zero iff some phase vector realizes `p_d`.
pub fn attainability_residual(topology: &InteractionTopology, p_d: &[f64]) -> Result<Vec<f64>> {
    check_len("desired pattern", topology.n_edges(), p_d.len())?;
    let m = topology.n_edges();
    let l = topology.incidence();
    let proj = DMatrix::<f64>::identity(m, m) - l * topology.pinv();
    Ok((proj * DVector::from_column_slice(p_d)).iter().copied().collect())
}

/// Objective `E = ¼ Σ_k Σ_{i ∈ k} wrap(p_k - p_dk^(i))²`.
///
/// With consistent copies this is `½ Σ_k (p_k - p_dk)²`.
pub fn objective_e(p: &PatternVector, d: &DesiredCopies) -> Result<f64> {
    check_len("desired copies", p.len(), d.n_edges())?;
    Ok(objective_e_slice(p.as_slice(), d.edges()))
}

pub(crate) fn objective_e_slice(p: &[f64], copies: &[EdgeCopies]) -> f64 {
    0.25 * p
        .iter()
        .zip(copies)
        .map(|(&pk, c)| wrap(pk - c.tail).powi(2) + wrap(pk - c.head).powi(2))
        .sum::<f64>()
}

/// Interactions `I_k^i = -L_ki · wrap(p_k - p_dk^(i))`, stored per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Interactions {
    agent_ids: Vec<AgentId>,
    edge_ids: Vec<(AgentId, AgentId)>,
    values: Vec<EdgeCopies>,
    sums: Vec<f64>,
}

impl Interactions {
    /// `I_k^i` for edge index `k` and agent id `agent`.
    pub fn at(&self, k: usize, agent: AgentId) -> Result<f64> {
        let (tail, head) = *self.edge_ids.get(k).ok_or(Error::Dimension {
            what: "edge index",
            expected: self.edge_ids.len(),
            got: k + 1,
        })?;
        if agent == tail {
            Ok(self.values[k].tail)
        } else if agent == head {
            Ok(self.values[k].head)
        } else {
            Err(Error::NotIncident { tail, head, agent })
        }
    }

    pub fn per_edge(&self) -> &[EdgeCopies] {
        &self.values
    }

    /// `Σ_k I_k^i` per agent; equals `x_i - x_di` (with wrapped edge errors).
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn agent_ids(&self) -> &[AgentId] {
        &self.agent_ids
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|c| [c.tail.abs(), c.head.abs()])
            .fold(0.0, f64::max)
    }
}

pub fn interactions(topology: &InteractionTopology, p: &PatternVector, d: &DesiredCopies) -> Result<Interactions> {
    check_len("pattern vector", topology.n_edges(), p.len())?;
    d.check_covers(topology)?;
    let mut sums = vec![0.0; topology.n_agents()];
    let values = edge_interactions(topology, p.as_slice(), d.edges(), &mut sums);
    Ok(Interactions {
        agent_ids: topology.agent_ids().to_vec(),
        edge_ids: (0..topology.n_edges()).map(|k| topology.edge_ids(k)).collect(),
        values,
        sums,
    })
}

/// Fills `sums` with per-agent interaction sums and returns per-edge values.
pub(crate) fn edge_interactions(
    topology: &InteractionTopology,
    p: &[f64],
    copies: &[EdgeCopies],
    sums: &mut [f64],
) -> Vec<EdgeCopies> {
    sums.iter_mut().for_each(|s| *s = 0.0);
    topology
        .edges()
        .iter()
        .zip(p.iter().zip(copies))
        .map(|(e, (&pk, c))| {
            let tail = wrap(pk - c.tail);
            let head = -wrap(pk - c.head);
            sums[e.tail] += tail;
            sums[e.head] += head;
            EdgeCopies { tail, head }
        })
        .collect()
}

/// Per-agent coupling arguments `x_i - x_di` with wrapped edge errors.
pub(crate) fn residuals_slice(topology: &InteractionTopology, p: &[f64], copies: &[EdgeCopies], out: &mut [f64]) {
    out.iter_mut().for_each(|s| *s = 0.0);
    for (e, (&pk, c)) in topology.edges().iter().zip(p.iter().zip(copies)) {
        out[e.tail] += wrap(pk - c.tail);
        out[e.head] -= wrap(pk - c.head);
    }
}

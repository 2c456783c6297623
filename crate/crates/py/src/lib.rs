use std::collections::HashMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use engine::analysis::summarize;
use engine::equilibrium::{predict_for_scenario, PredictionMethod};
use engine::fault::apply_agent_loss;
use engine::pattern::{attainability_residual, objective_e};
use engine::scenario_file::{bundled_scenario, scenario_from_str, scenario_to_string};
use engine::topology::AgentId;
use engine::trace_csv::trace_to_csv_string;
use engine::{AgentParams, DesiredCopies, EdgeCopies, InteractionTopology, PatternVector};

fn to_py(e: engine::Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn copies_from_pairs(pairs: &[(f64, f64)]) -> PyResult<DesiredCopies> {
    DesiredCopies::from_edge_copies(pairs.iter().map(|&(tail, head)| EdgeCopies { tail, head }).collect())
        .map_err(to_py)
}

fn pairs_of(d: &DesiredCopies) -> Vec<(f64, f64)> {
    d.edges().iter().map(|c| (c.tail, c.head)).collect()
}

/// Interaction graph over agent ids with its incidence matrix.
#[pyclass(name = "Topology", module = "flockadapt", skip_from_py_object)]
#[derive(Clone)]
struct Topology(InteractionTopology);

#[pymethods]
impl Topology {
    #[staticmethod]
    fn chain(ids: Vec<AgentId>) -> PyResult<Self> {
        InteractionTopology::chain(&ids).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_edges(ids: Vec<AgentId>, edges: Vec<(AgentId, AgentId)>) -> PyResult<Self> {
        InteractionTopology::from_edges(&ids, &edges).map(Self).map_err(to_py)
    }

    #[getter]
    fn agents(&self) -> Vec<AgentId> {
        self.0.agent_ids().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(AgentId, AgentId)> {
        (0..self.0.n_edges()).map(|k| self.0.edge_ids(k)).collect()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    fn incidence(&self) -> Vec<Vec<f64>> {
        let l = self.0.incidence();
        l.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn pinv(&self) -> Vec<Vec<f64>> {
        let l = self.0.pinv();
        l.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// `(I - L L⁺) p_d`; all zeros when the pattern is attainable.
    fn attainability_residual(&self, p_d: Vec<f64>) -> PyResult<Vec<f64>> {
        attainability_residual(&self.0, &p_d).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Topology(agents={:?}, edges={:?})", self.agents(), self.edges())
    }
}

#[pyclass(name = "Scenario", module = "flockadapt", skip_from_py_object)]
#[derive(Clone)]
struct Scenario(engine::Scenario);

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn canonical() -> Self {
        Self(engine::Scenario::canonical())
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        bundled_scenario(name).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        scenario_from_str(text).map(Self).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        scenario_to_string(&self.0)
    }

    fn with_loss(&self, agent: AgentId, time: f64) -> Self {
        Self(self.0.clone().with_loss(agent, time))
    }

    fn with_adaptation(&self, start_time: f64) -> Self {
        Self(self.0.clone().with_adaptation(start_time))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.0.duration
    }

    #[setter]
    fn set_duration(&mut self, v: f64) {
        self.0.duration = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }

    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.0.dt = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.0.seed = v;
    }

    #[getter]
    fn notices(&self) -> Vec<String> {
        self.0.notices.clone()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }
}

/// Result of a simulation run.
#[pyclass(name = "Trace", module = "flockadapt")]
struct Trace(engine::sim::Trace);

#[pymethods]
impl Trace {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.time).collect()
    }

    /// Speed of every surviving agent at the final sample.
    fn final_speeds(&self) -> HashMap<AgentId, f64> {
        self.0.speeds(self.0.final_sample()).into_iter().collect()
    }

    /// Shifts at the final sample in the order of the final topology's edges.
    fn final_shifts(&self) -> Vec<Option<f64>> {
        self.0.final_order_shifts(self.0.final_sample())
    }

    /// `E` at each recorded sample.
    fn objective(&self) -> Vec<f64> {
        self.0.samples.iter().map(|s| s.e).collect()
    }

    fn max_shift_error(&self) -> f64 {
        self.0.final_sample().max_abs_shift_error()
    }

    fn summary(&self) -> String {
        summarize(&self.0).to_string()
    }

    fn to_csv(&self) -> String {
        trace_to_csv_string(&self.0)
    }

    fn __len__(&self) -> usize {
        self.0.samples.len()
    }
}

/// Runs the scenario with the interpreter lock released.
#[pyfunction]
fn run(py: Python<'_>, scenario: &Scenario) -> PyResult<Trace> {
    let s = scenario.0.clone();
    py.detach(move || engine::run_scenario(&s)).map(Trace).map_err(to_py)
}

/// Steady state after the scenario's losses, without simulating.
#[pyfunction]
fn predict<'py>(py: Python<'py>, scenario: &Scenario) -> PyResult<Bound<'py, PyDict>> {
    let p = predict_for_scenario(&scenario.0).map_err(to_py)?;
    let method = match p.method {
        PredictionMethod::ClosedForm => "closed_form",
        PredictionMethod::Numeric => "numeric",
    };
    let out = PyDict::new(py);
    out.set_item("method", method)?;
    out.set_item("delta", p.delta)?;
    out.set_item("speed_offsets", p.speed_offsets)?;
    out.set_item("steady_shifts", p.steady_shifts)?;
    out.set_item("residuals", p.residuals)?;
    Ok(out)
}

/// `f⁺(x)`, the added orbit rate (rad/s) for coupling argument `x`.
#[pyfunction]
#[pyo3(signature = (x, v_f = 3.0, rho = 100.0, k_theta = 5.0))]
fn coupling(x: f64, v_f: f64, rho: f64, k_theta: f64) -> PyResult<f64> {
    let params = AgentParams::uniform_cruise(AgentParams::default().v_nominal, rho, v_f, k_theta);
    params.validate().map_err(to_py)?;
    Ok(params.coupling().eval(x))
}

/// `E` for shifts `p` and per-edge `(tail, head)` desired copies.
#[pyfunction]
fn objective(p: Vec<f64>, copies: Vec<(f64, f64)>) -> PyResult<f64> {
    let p = PatternVector::new(p).map_err(to_py)?;
    objective_e(&p, &copies_from_pairs(&copies)?).map_err(to_py)
}

/// Removes `agent` from a chain; survivors keep their own copies.
#[pyfunction]
fn lose_agent(topology: &Topology, copies: Vec<(f64, f64)>, agent: AgentId) -> PyResult<(Topology, Vec<(f64, f64)>)> {
    let d = copies_from_pairs(&copies)?;
    let (t, d) = apply_agent_loss(&topology.0, &d, agent).map_err(to_py)?;
    Ok((Topology(t), pairs_of(&d)))
}

#[pymodule]
fn flockadapt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Topology>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(coupling, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(lose_agent, m)?)?;
    Ok(())
}

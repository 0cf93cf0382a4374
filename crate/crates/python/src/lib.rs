//! Python bindings: a thin layer over the core crate for scripting and
//! plotting. Fields cross the boundary as flat lists in row-major order
//! (`k * nx + j`).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use driftcast::config::Config;
use driftcast::error::Error;
use driftcast::grid::{ModelGrid, PhysParams};
use driftcast::observation::format_record;
use driftcast::rng::{stream, Purpose};
use driftcast::swe::{cfl_timestep, init_double_jet, SchemeParams, Stepper};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::Format(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config_from(text: Option<&str>) -> Result<Config, Error> {
    match text {
        Some(t) => Config::from_toml(t),
        None => Ok(Config::desk()),
    }
}

/// TOML text of the built-in desk-scale configuration.
#[pyfunction]
fn desk_config() -> String {
    Config::desk().to_toml()
}

/// Principal branch of the Lambert W function.
#[pyfunction]
fn lambert_w0(z: f64) -> PyResult<f64> {
    driftcast::filter::lambert_w0(z).map(|w| w.value).map_err(to_py)
}

/// Scaling `alpha` that brings a particle to the target weight.
#[pyfunction]
fn solve_alpha(c_star: f64, gamma: f64, n: f64) -> PyResult<f64> {
    driftcast::filter::solve_alpha(c_star, gamma, n)
        .map(|a| a.alpha)
        .map_err(to_py)
}

/// Stable time step of the rest state on an `nx` by `ny` grid.
#[pyfunction]
#[pyo3(signature = (nx, ny, dx, dy, h_eq = 230.0))]
fn rest_state_cfl(nx: usize, ny: usize, dx: f64, dy: f64, h_eq: f64) -> PyResult<f64> {
    let grid = ModelGrid::new(nx, ny, dx, dy).map_err(to_py)?;
    let phys = PhysParams {
        h_eq,
        ..PhysParams::default()
    };
    let state = driftcast::grid::OceanState::zeros(&grid);
    cfl_timestep(&state, &grid, &phys, &SchemeParams::default()).map_err(to_py)
}

/// Balanced double jet advanced by `steps` deterministic model steps;
/// returns `(eta, hu, hv)`.
#[pyfunction]
#[pyo3(signature = (nx, ny, dx, dy, steps = 0))]
fn double_jet(nx: usize, ny: usize, dx: f64, dy: f64, steps: usize) -> PyResult<(Vec<f32>, Vec<f32>, Vec<f32>)> {
    let grid = ModelGrid::new(nx, ny, dx, dy).map_err(to_py)?;
    let phys = PhysParams::default();
    let mut state = init_double_jet(&grid, &phys).map_err(to_py)?;
    let mut stepper = Stepper::new(grid, phys, SchemeParams::default()).map_err(to_py)?;
    for _ in 0..steps {
        stepper.step(&mut state).map_err(to_py)?;
    }
    Ok((state.eta, state.hu, state.hv))
}

/// Observation records of a truth run as CSV lines
/// (`time,kind,id,x,y,hu,hv`).
#[pyfunction]
#[pyo3(signature = (config_toml = None, seed = 1))]
fn truth_observations(config_toml: Option<&str>, seed: u64) -> PyResult<Vec<String>> {
    let cfg = config_from(config_toml).map_err(to_py)?;
    let run = driftcast::truth::generate_truth(&cfg, seed).map_err(to_py)?;
    Ok(run.observations.iter().map(format_record).collect())
}

/// Rank of `truth` among `values` perturbed with `N(0, r)`.
#[pyfunction]
#[pyo3(signature = (truth, values, r = 1.0, seed = 0))]
fn compute_rank(truth: f64, values: Vec<f64>, r: f64, seed: u64) -> usize {
    let mut rng = stream(seed, 0, Purpose::Diagnostics);
    driftcast::diagnostics::compute_rank(truth, &values, r, &mut rng)
}

#[pymodule]
fn driftcast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(desk_config, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(solve_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(rest_state_cfl, m)?)?;
    m.add_function(wrap_pyfunction!(double_jet, m)?)?;
    m.add_function(wrap_pyfunction!(truth_observations, m)?)?;
    m.add_function(wrap_pyfunction!(compute_rank, m)?)?;
    Ok(())
}

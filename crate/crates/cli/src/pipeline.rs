//! Glue between the simulator and the network: training sets from
//! snapshots, dense predictions and their audits.

use kwet_core::evaluation::{mass_audit, metrics, Metrics};
use kwet_core::lbm::{initial_density, MacroField, SimConfig, Snapshot};
use kwet_pinn::autodiff::{Network, Normalization};
use kwet_pinn::kpinn_loss::{
    sample_boundary, sample_collocation, sample_data, sample_init, DataSet, LossProblem, Medium,
    Observation,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub collocation: usize,
    pub data_points: usize,
    /// Double the data density in the lowest quarter of the domain.
    pub densify: bool,
    pub periodic_points: usize,
    pub wall_points: usize,
    pub init_points: usize,
    /// Also enforce top-bottom periodicity (off: the substrate fills the bottom).
    pub top_bottom: bool,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            collocation: 4096,
            data_points: 2048,
            densify: true,
            periodic_points: 512,
            wall_points: 512,
            init_points: 1024,
            top_bottom: false,
            seed: 0,
        }
    }
}

pub fn medium(sim: &SimConfig<f64>) -> Result<Medium<f64>, CliError> {
    let substrate = sim.surface.build(sim.nx, sim.ny)?;
    Ok(Medium::new(sim, substrate.mask))
}

/// Latest snapshot time.
pub fn horizon(snapshots: &[Snapshot<f64>]) -> Result<f64, CliError> {
    snapshots
        .iter()
        .map(|s| s.time)
        .max()
        .filter(|&t| t > 0)
        .map(|t| t as f64)
        .ok_or_else(|| CliError::Config("snapshots must span a positive time".into()))
}

/// Min-max input scaling over the domain and the snapshot horizon.
pub fn normalization(sim: &SimConfig<f64>, horizon: f64) -> Result<Normalization<f64>, CliError> {
    Ok(Normalization::new([0.0; 3], [sim.nx as f64, (sim.ny - 1) as f64, horizon])?)
}

/// Draws the observation set from the snapshots.
pub fn sample_dataset(
    sim: &SimConfig<f64>,
    snapshots: &[Snapshot<f64>],
    n: usize,
    densify: bool,
    validation_fraction: f64,
    seed: u64,
) -> Result<DataSet<f64>, CliError> {
    let m = medium(sim)?;
    Ok(sample_data(snapshots, &m, n, seed, densify, validation_fraction)?)
}

/// Assembles the loss problem for a run: collocation, boundary and initial
/// sets are drawn here, the observations come from `data`.
pub fn build_problem(
    sim: &SimConfig<f64>,
    horizon: f64,
    data: &DataSet<f64>,
    s: &SamplingConfig,
) -> Result<LossProblem<f64>, CliError> {
    let m = medium(sim)?;
    let coll = sample_collocation(&m, horizon, s.collocation, s.seed ^ 0xc011)?;
    let boundary = sample_boundary(&m, horizon, s.periodic_points, s.wall_points, s.top_bottom, s.seed ^ 0xb0d)?;
    let substrate = sim.surface.build(sim.nx, sim.ny)?;
    let rho0 = initial_density(sim, &substrate)?;
    let init = sample_init(&m, &rho0, s.init_points, s.seed ^ 0x1417)?;
    let mut problem = LossProblem::new(m, coll, data.train(), data.held_out(), boundary, init)?;
    problem.horizon = horizon;
    Ok(problem)
}

/// Density and momentum velocity of the network on the full grid at `t`.
pub fn predict_field(net: &Network<f64>, nx: usize, ny: usize, t: f64) -> Result<MacroField<f64>, CliError> {
    let pts: Vec<[f64; 3]> = (0..nx * ny).map(|n| [(n % nx) as f64, (n / nx) as f64, t]).collect();
    let f = predict_points(net, &pts)?;
    let mut field = MacroField::zeros(nx, ny);
    for (n, fi) in f.iter().enumerate() {
        let (rho, u) = macroscopic(fi);
        field.rho[n] = rho;
        field.ux[n] = u[0];
        field.uy[n] = u[1];
    }
    Ok(field)
}

/// Populations at arbitrary points, evaluated in blocks.
pub fn predict_points(net: &Network<f64>, pts: &[[f64; 3]]) -> Result<Vec<[f64; 9]>, CliError> {
    let mut out = Vec::with_capacity(pts.len());
    for chunk in pts.chunks(4096) {
        let x = ndarray_rows(chunk);
        let f = net.predict(x.view())?;
        out.extend(f.rows().into_iter().map(|r| std::array::from_fn(|i| r[i])));
    }
    Ok(out)
}

fn ndarray_rows(pts: &[[f64; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((pts.len(), 3), |(r, c)| pts[r][c])
}

/// `(rho, j / rho)` of one population vector.
pub fn macroscopic(f: &[f64; 9]) -> (f64, [f64; 2]) {
    let c = kwet_core::lattice::VELOCITIES;
    let rho: f64 = f.iter().sum();
    let jx: f64 = (0..9).map(|i| f[i] * c[i][0] as f64).sum();
    let jy: f64 = (0..9).map(|i| f[i] * c[i][1] as f64).sum();
    (rho, [jx / rho, jy / rho])
}

/// Largest relative change of the predicted fluid mass over `times`.
pub fn predicted_mass_drift(sim: &SimConfig<f64>, net: &Network<f64>, times: &[f64]) -> Result<f64, CliError> {
    let substrate = sim.surface.build(sim.nx, sim.ny)?;
    let fluid: Vec<bool> = substrate.mask.as_slice().iter().map(|s| !s).collect();
    let grids: Vec<Vec<f64>> =
        times.iter().map(|&t| predict_field(net, sim.nx, sim.ny, t).map(|f| f.rho)).collect::<Result<_, _>>()?;
    let refs: Vec<&[f64]> = grids.iter().map(|g| g.as_slice()).collect();
    Ok(mass_audit(&refs, &fluid)?)
}

/// Density metrics of the network on a set of observations.
pub fn density_metrics(net: &Network<f64>, obs: &[Observation<f64>]) -> Result<Metrics<f64>, CliError> {
    let pts: Vec<[f64; 3]> = obs.iter().map(|o| o.point).collect();
    let pred: Vec<f64> = predict_points(net, &pts)?.iter().map(|f| f.iter().sum()).collect();
    let truth: Vec<f64> = obs.iter().map(|o| o.rho).collect();
    Ok(metrics(&pred, &truth)?)
}

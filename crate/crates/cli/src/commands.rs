//! The `kwet` workflows as library calls. Each writes its artifacts into the
//! given paths and returns a summary for the caller to print.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use kwet_core::evaluation::{
    error_histogram, mass_audit, measure_droplet, metrics_series, midpoint_iso, temporal_rmse, write_histogram_csv,
    write_scatter_csv, write_temporal_csv, HistogramSpec, Metrics, MetricsReport,
};
use kwet_core::lbm::{RunError, SimConfig, Snapshot, Solver};
use kwet_core::surface::Substrate;
use kwet_pinn::autodiff::Network;
use kwet_pinn::kpinn_loss::{LogRow, TrainingLog};
use kwet_pinn::trainer::{train as run_training, Monitor, TrainReport, TrainState};

use crate::config::{hex, RunConfig};
use crate::files::{snapshot_name, snapshot_paths, DatasetFile, ModelFile, SnapshotFile};
use crate::pipeline::{build_problem, horizon, macroscopic, normalization, predict_points, sample_dataset};
use crate::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const PROFILE_CSV: &str = "profile.csv";
pub const MASS_CSV: &str = "mass_audit.csv";
pub const MODEL_FILE: &str = "model.kwmodel";
pub const STATE_FILE: &str = "state.kwstate";
pub const LOG_CSV: &str = "train_log.csv";
pub const VALIDATION_CSV: &str = "validation.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "g_ads,status,contact_angle_deg,height,base_diameter,penetration_depth";
pub const POINTS_HEADER: &str = "x,y,t,rho,ux,uy,f0,f1,f2,f3,f4,f5,f6,f7,f8,extrapolated";

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    // write-then-rename so an interrupted run never leaves half a file
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn csv(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| CliError::io(path, e))?;
    write_file(path, &buf)
}

fn f(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotFile, CliError> {
    SnapshotFile::decode(&read_file(path)?).map_err(|e| CliError::io(path, e))
}

/// All snapshots of a directory in time order.
pub fn read_snapshot_dir(dir: &Path) -> Result<Vec<SnapshotFile>, CliError> {
    let paths = snapshot_paths(dir).map_err(|e| CliError::io(dir, e))?;
    if paths.is_empty() {
        return Err(CliError::Io(format!("{}: no snapshot files", dir.display())));
    }
    let mut snaps = paths.iter().map(|p| read_snapshot(p)).collect::<Result<Vec<_>, _>>()?;
    snaps.sort_by_key(|s| s.snapshot.time);
    Ok(snaps)
}

/// The resolved configuration stored next to a directory's artifacts.
pub fn read_dir_config(dir: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(&dir.join(CONFIG_FILE))
}

fn fluid_of(sub: &Substrate<f64>) -> Vec<bool> {
    sub.mask.as_slice().iter().map(|s| !s).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub snapshots: usize,
    pub final_time: u64,
    pub mass_drift: f64,
    pub config_hash: [u8; 32],
}

/// Runs the simulator and writes one snapshot file per stored time, the
/// resolved configuration, the surface profile and the mass audit.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let hash = cfg.hash();
    write_file(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    let sub = cfg.sim.surface.build(cfg.sim.nx, cfg.sim.ny)?;
    csv(&out.join(PROFILE_CSV), |w| {
        writeln!(w, "x,h")?;
        sub.heights.iter().enumerate().try_for_each(|(x, h)| writeln!(w, "{x},{}", f(*h)))
    })?;

    let fluid = fluid_of(&sub);
    let mut solver = Solver::new(cfg.sim.clone())?;
    solver.set_config_hash(hash);
    let mut masses: Vec<(u64, f64)> = Vec::new();
    let result = solver.run_with(|s: Snapshot<f64>| -> Result<(), CliError> {
        let m: f64 = s.fields.rho.iter().zip(&fluid).filter(|(_, &fl)| fl).map(|(r, _)| r).sum();
        masses.push((s.time, m));
        let time = s.time;
        let file = SnapshotFile { snapshot: s, extrapolated: false };
        write_file(&out.join(snapshot_name(time)), &file.encode())
    });
    let audit = |masses: &[(u64, f64)]| -> Result<f64, CliError> {
        let m0 = masses.first().map_or(1.0, |m| m.1);
        csv(&out.join(MASS_CSV), |w| {
            writeln!(w, "t,mass,relative_drift")?;
            masses.iter().try_for_each(|(t, m)| writeln!(w, "{t},{},{}", f(*m), f((m - m0) / m0)))
        })?;
        Ok(masses.iter().map(|(_, m)| ((m - m0) / m0).abs()).fold(0.0, f64::max))
    };
    let drift = audit(&masses)?;
    match result {
        Ok(()) => {}
        Err(RunError::Solver(e)) => return Err(e.into()),
        Err(RunError::Sink(e)) => return Err(e),
    }
    Ok(SimulateSummary {
        snapshots: masses.len(),
        final_time: masses.last().map_or(0, |m| m.0),
        mass_drift: drift,
        config_hash: hash,
    })
}

/// Draws `n` observations from a snapshot directory, using the configuration
/// stored with the snapshots.
pub fn sample(snapshots: &Path, n: usize, densify: bool, seed: Option<u64>, out: &Path) -> Result<DatasetFile, CliError> {
    let cfg = read_dir_config(snapshots)?;
    let snaps: Vec<Snapshot<f64>> = read_snapshot_dir(snapshots)?.into_iter().map(|s| s.snapshot).collect();
    let hash = cfg.hash();
    if let Some(s) = snaps.iter().find(|s| s.config_hash != hash) {
        return Err(CliError::Config(format!("snapshot t = {} was not produced by {}", s.time, CONFIG_FILE)));
    }
    let seed = seed.unwrap_or(cfg.sampling.seed);
    let fraction = cfg.train.validation_fraction;
    let data = sample_dataset(&cfg.sim, &snaps, n, densify, fraction, seed)?;
    let file = DatasetFile {
        config_hash: hash,
        horizon: horizon(&snaps)?,
        nx: cfg.sim.nx,
        ny: cfg.sim.ny,
        validation_fraction: fraction,
        seed,
        densify,
        data,
    };
    write_file(out, &file.encode())?;
    Ok(file)
}

/// Progress and checkpoint writer for `kwet train`.
struct TrainFiles<'a> {
    dir: &'a Path,
    every: usize,
    started: Instant,
}

impl Monitor for TrainFiles<'_> {
    fn epoch(&mut self, row: &LogRow) -> Result<(), String> {
        if self.every > 0 && row.epoch % self.every == 0 {
            log::info!(
                "epoch {} ({:.0} s): total {:.4e}, phys {:.3e}, data {:.3e}, bc {:.3e}, init {:.3e}",
                row.epoch,
                self.started.elapsed().as_secs_f64(),
                row.total,
                row.parts.phys,
                row.parts.data,
                row.parts.bc(),
                row.parts.init
            );
        }
        Ok(())
    }

    fn checkpoint(&mut self, state: &TrainState) -> Result<(), String> {
        write_file(&self.dir.join(STATE_FILE), &state.encode()).map_err(|e| e.to_string())
    }
}

#[derive(Debug)]
pub struct TrainSummary {
    pub report: TrainReport,
    pub model: ModelFile,
    pub seconds: f64,
}

/// Trains a network on a dataset and writes the model, the resumable state,
/// the loss log and the validation curve into `out`.
pub fn train(
    cfg: &RunConfig,
    dataset: &Path,
    out: &Path,
    resume: Option<&Path>,
    force: bool,
    progress_every: usize,
) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let ds = DatasetFile::decode(&read_file(dataset)?).map_err(|e| CliError::io(dataset, e))?;
    let hash = cfg.hash();
    if ds.nx != cfg.sim.nx || ds.ny != cfg.sim.ny {
        return Err(CliError::Config(format!(
            "dataset domain {} x {} differs from the configuration {} x {}",
            ds.nx, ds.ny, cfg.sim.nx, cfg.sim.ny
        )));
    }
    if ds.config_hash != hash {
        let msg = "dataset was sampled under a different configuration";
        if !force {
            return Err(CliError::Config(format!("{msg} (use --force to train anyway)")));
        }
        log::warn!("{msg}");
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;

    let problem = build_problem(&cfg.sim, ds.horizon, &ds.data, &cfg.sampling)?;
    let mut net = Network::new(&cfg.train.hidden, normalization(&cfg.sim, ds.horizon)?, cfg.train.seed)?;
    let state = match resume {
        Some(p) => Some(TrainState::decode(&read_file(p)?).map_err(|e| CliError::io(p, e))?),
        None => None,
    };
    let started = Instant::now();
    let mut monitor = TrainFiles { dir: out, every: progress_every, started };
    let report = run_training(&mut net, &problem, &cfg.train, state, &mut monitor)?;
    let seconds = started.elapsed().as_secs_f64();

    write_file(&out.join(STATE_FILE), &report.state.encode())?;
    let mut log = TrainingLog::new(Vec::new()).map_err(|e| CliError::Io(e.to_string()))?;
    for row in &report.history {
        log.write(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    write_file(&out.join(LOG_CSV), &log.into_inner())?;
    csv(&out.join(VALIDATION_CSV), |w| {
        writeln!(w, "epoch,validation_loss")?;
        report.validation.iter().try_for_each(|(e, v)| writeln!(w, "{e},{}", f(*v)))
    })?;
    let model = ModelFile { config_hash: hash, horizon: ds.horizon, nx: cfg.sim.nx, ny: cfg.sim.ny, net };
    write_file(&out.join(MODEL_FILE), &model.encode())?;
    Ok(TrainSummary { report, model, seconds })
}

pub fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    ModelFile::decode(&read_file(path)?).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    pub evaluations: usize,
    pub seconds: f64,
    pub extrapolated: bool,
}

impl Throughput {
    pub fn per_second(&self) -> f64 {
        self.evaluations as f64 / self.seconds.max(1e-9)
    }
}

/// Dense prediction on the `lx` x `ly` node grid at time `t`, in snapshot
/// format with the populations attached.
pub fn predict_grid(model: &ModelFile, t: f64, lx: usize, ly: usize) -> Result<(SnapshotFile, Throughput), CliError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(CliError::Config(format!("prediction time {t} must be finite and non-negative")));
    }
    if lx == 0 || ly == 0 {
        return Err(CliError::Config("grid must have at least one node".into()));
    }
    let pts: Vec<[f64; 3]> = (0..lx * ly).map(|n| [(n % lx) as f64, (n / lx) as f64, t]).collect();
    let started = Instant::now();
    let pops = predict_points(&model.net, &pts)?;
    let seconds = started.elapsed().as_secs_f64();
    let mut fields = kwet_core::lbm::MacroField::zeros(lx, ly);
    let mut data = vec![0.0; 9 * lx * ly];
    for (n, p) in pops.iter().enumerate() {
        let (rho, u) = macroscopic(p);
        fields.rho[n] = rho;
        fields.ux[n] = u[0];
        fields.uy[n] = u[1];
        for (i, v) in p.iter().enumerate() {
            data[i * lx * ly + n] = *v;
        }
    }
    let extrapolated = t > model.horizon;
    let snapshot = Snapshot {
        time: t.round() as u64,
        fields,
        distributions: Some(kwet_core::lbm::DistributionField { nx: lx, ny: ly, data }),
        config_hash: model.config_hash,
    };
    Ok((SnapshotFile { snapshot, extrapolated }, Throughput { evaluations: pts.len(), seconds, extrapolated }))
}

/// Parses an `x,y,t` CSV with a header row.
pub fn read_points_csv(text: &str) -> Result<Vec<[f64; 3]>, CliError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(|s| s.trim().to_lowercase()).collect();
    if header != ["x", "y", "t"] {
        return Err(CliError::Config("points file must start with the header x,y,t".into()));
    }
    lines
        .enumerate()
        .map(|(k, l)| {
            let v: Vec<f64> = l.split(',').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| {
                CliError::Config(format!("points line {}: {e}", k + 2))
            })?;
            match v[..] {
                [x, y, t] if x.is_finite() && y.is_finite() && t.is_finite() => Ok([x, y, t]),
                _ => Err(CliError::Config(format!("points line {}: expected three finite numbers", k + 2))),
            }
        })
        .collect()
}

/// Pointwise prediction; returns the CSV text (see [`POINTS_HEADER`]).
pub fn predict_csv(model: &ModelFile, pts: &[[f64; 3]]) -> Result<(String, Throughput), CliError> {
    let started = Instant::now();
    let pops = predict_points(&model.net, pts)?;
    let seconds = started.elapsed().as_secs_f64();
    let mut out = String::with_capacity(pts.len() * 200);
    out.push_str(POINTS_HEADER);
    out.push('\n');
    let mut any = false;
    for (p, fi) in pts.iter().zip(&pops) {
        let (rho, u) = macroscopic(fi);
        let ext = p[2] > model.horizon;
        any |= ext;
        // shortest round-trip text, so the CSV holds the exact values
        let mut row: Vec<String> = p.iter().chain(&[rho, u[0], u[1]]).chain(fi.iter()).map(|v| v.to_string()).collect();
        row.push((ext as u8).to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok((out, Throughput { evaluations: pts.len(), seconds, extrapolated: any }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSummary {
    pub times: Vec<u64>,
    pub density: MetricsReport<f64>,
    pub ux: MetricsReport<f64>,
    pub uy: MetricsReport<f64>,
    pub mass_drift_pred: Option<f64>,
    pub mass_drift_truth: Option<f64>,
}

/// Compares predicted snapshots against the simulator's at matching times
/// and writes `metrics.csv`, `histogram.csv`, `scatter.csv`, `temporal.csv`
/// and `mass_audit.csv` into `out`.
pub fn evaluate(pred_dir: &Path, truth_dir: &Path, out: &Path, force: bool) -> Result<EvaluateSummary, CliError> {
    let pred = read_snapshot_dir(pred_dir)?;
    let truth = read_snapshot_dir(truth_dir)?;
    let mut pairs = Vec::new();
    for p in &pred {
        let t = truth
            .iter()
            .find(|s| s.snapshot.time == p.snapshot.time)
            .ok_or_else(|| CliError::Config(format!("no truth snapshot at t = {}", p.snapshot.time)))?;
        let (a, b) = (&p.snapshot.fields, &t.snapshot.fields);
        if (a.nx, a.ny) != (b.nx, b.ny) {
            return Err(CliError::Config(format!(
                "shape mismatch at t = {}: {} x {} against {} x {}",
                p.snapshot.time, a.nx, a.ny, b.nx, b.ny
            )));
        }
        if p.snapshot.config_hash != t.snapshot.config_hash {
            let msg = format!(
                "config hash mismatch at t = {} ({} against {})",
                p.snapshot.time,
                &hex(&p.snapshot.config_hash)[..12],
                &hex(&t.snapshot.config_hash)[..12]
            );
            if !force {
                return Err(CliError::Config(format!("{msg}; use --force to compare anyway")));
            }
            log::warn!("{msg}");
        }
        pairs.push((&p.snapshot, &t.snapshot));
    }
    // fluid mask from the truth run when its configuration is available
    let fluid = match read_dir_config(truth_dir) {
        Ok(c) if c.sim.nx == pairs[0].1.fields.nx && c.sim.ny == pairs[0].1.fields.ny => {
            Some(fluid_of(&c.sim.surface.build(c.sim.nx, c.sim.ny)?))
        }
        _ => None,
    };
    let times: Vec<f64> = pairs.iter().map(|(p, _)| p.time as f64).collect();
    let grids = |field: fn(&Snapshot<f64>) -> &Vec<f64>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        pairs.iter().map(|(p, t)| (field(p).clone(), field(t).clone())).unzip()
    };
    let mask = fluid.as_deref();
    let (rp, rt) = grids(|s| &s.fields.rho);
    let (up, ut) = grids(|s| &s.fields.ux);
    let (vp, vt) = grids(|s| &s.fields.uy);
    let density = metrics_series(&times, &rp, &rt, mask)?;
    let ux = metrics_series(&times, &up, &ut, mask)?;
    let uy = metrics_series(&times, &vp, &vt, mask)?;

    let select = |g: &[f64]| -> Vec<f64> {
        match mask {
            Some(m) => g.iter().zip(m).filter(|(_, &k)| k).map(|(v, _)| *v).collect(),
            None => g.to_vec(),
        }
    };
    let flat_p: Vec<f64> = rp.iter().flat_map(|g| select(g)).collect();
    let flat_t: Vec<f64> = rt.iter().flat_map(|g| select(g)).collect();
    let masked_p: Vec<Vec<f64>> = rp.iter().map(|g| select(g)).collect();
    let masked_t: Vec<Vec<f64>> = rt.iter().map(|g| select(g)).collect();

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    csv(&out.join("metrics.csv"), |w| {
        writeln!(w, "field,t,l2,rmse,mae,r2,count")?;
        for (name, rep) in [("rho", &density), ("ux", &ux), ("uy", &uy)] {
            let mut line = |t: String, m: &Metrics<f64>| {
                let r2 = m.r2.map(f).unwrap_or_default();
                writeln!(w, "{name},{t},{},{},{},{r2},{}", f(m.l2), f(m.rmse), f(m.mae), m.count)
            };
            for (t, m) in &rep.per_time {
                line(format!("{t}"), m)?;
            }
            line("all".into(), &rep.overall)?;
        }
        Ok(())
    })?;
    let spread = flat_p.iter().zip(&flat_t).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);
    let hist = error_histogram(&flat_p, &flat_t, &HistogramSpec::symmetric(spread.max(1e-12), 41))?;
    csv(&out.join("histogram.csv"), |w| write_histogram_csv(w, &hist))?;
    csv(&out.join("scatter.csv"), |w| write_scatter_csv(w, &flat_p, &flat_t))?;
    let temporal = temporal_rmse(&times, &masked_p, &masked_t)?;
    csv(&out.join("temporal.csv"), |w| write_temporal_csv(w, &temporal))?;

    let audit = |g: &[Vec<f64>]| -> Option<f64> {
        let keep = vec![true; g[0].len()];
        let refs: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
        mass_audit(&refs, fluid.as_deref().unwrap_or(&keep)).ok()
    };
    let (mass_drift_pred, mass_drift_truth) = (audit(&rp), audit(&rt));
    csv(&out.join(MASS_CSV), |w| {
        writeln!(w, "series,max_relative_drift")?;
        for (name, v) in [("pred", mass_drift_pred), ("truth", mass_drift_truth)] {
            writeln!(w, "{name},{}", v.map(f).unwrap_or_default())?;
        }
        Ok(())
    })?;
    Ok(EvaluateSummary {
        times: pairs.iter().map(|(p, _)| p.time).collect(),
        density,
        ux,
        uy,
        mass_drift_pred,
        mass_drift_truth,
    })
}

/// `start:end:step` with the step taken towards `end`; both ends included.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("range '{spec}' must look like start:end:step"));
    let v: Vec<f64> = spec.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = v[..] else { return Err(bad()) };
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step != 0.0) {
        return Err(bad());
    }
    let span = (b - a).abs() / step.abs();
    let n = span.round();
    if (span - n).abs() > 1e-9 * span.max(1.0) || n > 1e6 {
        return Err(CliError::Config(format!("range '{spec}': the step does not divide the interval")));
    }
    let dir = if b >= a { 1.0 } else { -1.0 };
    // round away accumulated representation error in the printed values
    Ok((0..=n as usize).map(|k| ((a + dir * step.abs() * k as f64) * 1e12).round() / 1e12).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub g_ads: f64,
    pub result: Result<Wetting, String>,
}

/// Droplet shape at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wetting {
    pub contact_angle: Option<f64>,
    pub height: f64,
    pub base_diameter: Option<f64>,
    /// Depth of liquid below the substrate reference line.
    pub penetration_depth: f64,
}

/// Droplet geometry of one density field on the given substrate.
pub fn wetting_of(sim: &SimConfig<f64>, rho: &[f64]) -> Result<Wetting, CliError> {
    let sub = sim.surface.build(sim.nx, sim.ny)?;
    let iso = midpoint_iso(sim.rho_l, sim.rho_g);
    let (_, g) = measure_droplet(rho, &sub.mask, &sub.heights, iso)?;
    let lowest = (0..sim.nx * sim.ny)
        .filter(|&n| !sub.mask.as_slice()[n] && rho[n] > iso)
        .map(|n| (n / sim.nx) as f64)
        .fold(f64::INFINITY, f64::min);
    let penetration_depth = if lowest.is_finite() { (g.reference - lowest).max(0.0) } else { 0.0 };
    Ok(Wetting { contact_angle: g.contact_angle, height: g.height, base_diameter: g.base_diameter, penetration_depth })
}

/// Worker count: `KWET_THREADS` wins over the flag, which wins over the
/// number of available cores.
pub fn worker_count(flag: Option<usize>) -> usize {
    std::env::var("KWET_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(flag.filter(|&n| n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn sweep_dir_name(g_ads: f64) -> String {
    format!("g_ads_{g_ads:+.4}")
}

/// Runs one simulation per `G_ads` value in a worker pool, each into its
/// own subdirectory of `out`, and writes the geometry table. A failing run
/// marks its row and the sweep continues.
pub fn sweep(base: &RunConfig, values: &[f64], out: &Path, workers: usize) -> Result<Vec<SweepRow>, CliError> {
    base.validate()?;
    if values.is_empty() {
        return Err(CliError::Config("no sweep values".into()));
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let run_one = |g: f64| -> Result<Wetting, CliError> {
        let mut cfg = base.clone();
        cfg.sim.g_ads = g;
        let dir: PathBuf = out.join(sweep_dir_name(g));
        simulate(&cfg, &dir)?;
        let last = read_snapshot_dir(&dir)?.pop().expect("at least one snapshot");
        wetting_of(&cfg.sim, &last.snapshot.fields.rho)
    };
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        values
            .par_iter()
            .map(|&g| {
                let result = run_one(g).map_err(|e| e.to_string());
                if let Err(e) = &result {
                    log::warn!("G_ads = {g}: {e}");
                }
                SweepRow { g_ads: g, result }
            })
            .collect()
    });
    let path = out.join(SWEEP_CSV);
    let mut w = BufWriter::new(Vec::new());
    writeln!(w, "{SWEEP_HEADER}").map_err(|e| CliError::io(&path, e))?;
    for r in &rows {
        let line = match &r.result {
            Ok(g) => format!(
                "{},ok,{},{},{},{}",
                r.g_ads,
                g.contact_angle.map(f).unwrap_or_default(),
                f(g.height),
                g.base_diameter.map(f).unwrap_or_default(),
                f(g.penetration_depth)
            ),
            Err(e) => format!("{},failed: {},,,,", r.g_ads, e.replace([',', '\n'], ";")),
        };
        writeln!(w, "{line}").map_err(|e| CliError::io(&path, e))?;
    }
    write_file(&path, &w.into_inner().map_err(|e| CliError::io(&path, e.error()))?)?;
    Ok(rows)
}

//! The experiment commands. Each writes its artifacts into the output
//! directory and returns their paths.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DVector;

use super::config::ExperimentConfig;
use super::csv::{render, Cell, CsvSink, Table};
use super::plot::render_svg;
use crate::assembly::EnergyNorm;
use crate::stochastic::Channel;
use crate::pipeline::{
    fom_prior, forward_prior, generate_data, observe, offline, online, reference_solution, relative_hk1, sensor_points, Method, OfflineArtifacts,
    OnlineOptions, ProblemConfig, ReferenceSolution, SyntheticData,
};
use crate::{Error, Result, C64};

/// Subcommands of the `statrom` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    ConvergeRom,
    Sweep,
    StatromConverge,
    Scatter2d,
    GenData,
    Plot,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::ConvergeRom,
        Command::Sweep,
        Command::StatromConverge,
        Command::Scatter2d,
        Command::GenData,
        Command::Plot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::ConvergeRom => "converge-rom",
            Command::Sweep => "sweep",
            Command::StatromConverge => "statrom-converge",
            Command::Scatter2d => "scatter2d",
            Command::GenData => "gen-data",
            Command::Plot => "plot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

fn single_frequency(cfg: &ExperimentConfig, cmd: Command) -> Result<f64> {
    match cfg.frequencies[..] {
        [f] => Ok(f),
        _ => Err(Error::Config(format!("{} evaluates one frequency, got {}", cmd.as_str(), cfg.frequencies.len()))),
    }
}

/// Streams rows into `<out>/<name>.csv`, marking the file on failure.
fn write_table<F>(dir: &Path, name: &str, header: &[&str], body: F) -> Result<PathBuf>
where
    F: FnOnce(&mut CsvSink) -> Result<()>,
{
    let path = dir.join(format!("{name}.csv"));
    let mut sink = CsvSink::create(&path, header)?;
    match body(&mut sink) {
        Ok(()) => Ok(path),
        Err(e) => {
            let _ = sink.mark_incomplete(&e.to_string());
            Err(e)
        }
    }
}

/// Runs `cmd`, creating the output directory first.
pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.out_dir)?;
    match cmd {
        Command::ConvergeRom => converge_rom(cfg).map(|p| vec![p]),
        Command::Sweep => sweep(cfg).map(|p| vec![p]),
        Command::StatromConverge => statrom_converge(cfg).map(|p| vec![p]),
        Command::Scatter2d => scatter2d(cfg).map(|p| vec![p]),
        Command::GenData => gen_data(cfg),
        Command::Plot => plot(cfg).map(|p| vec![p]),
    }
}

/// Offline phase without error training points, for commands that only
/// compare priors.
fn prior_only(problem: &ProblemConfig, m: usize) -> Result<OfflineArtifacts> {
    offline(&ProblemConfig {
        m,
        training_points: 0,
        ..problem.clone()
    })
}

struct FullOrderMean {
    mean: DVector<C64>,
    norm: EnergyNorm,
}

impl FullOrderMean {
    fn new(art: &OfflineArtifacts, omega: f64) -> Result<Self> {
        Ok(FullOrderMean {
            mean: fom_prior(art, omega)?.mean(),
            norm: EnergyNorm::new(art.mesh()),
        })
    }

    fn error(&self, art: &OfflineArtifacts, omega: f64) -> Result<f64> {
        let rom = forward_prior(art, omega)?;
        relative_hk1(&self.norm, &self.mean, &rom.mean(), omega / art.config.c)
    }
}

/// Relative error of the reduced prior mean for `m = m_min..=m_max`.
pub fn converge_rom(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let omega = hz(single_frequency(cfg, Command::ConvergeRom)?);
    write_table(&cfg.out_dir, "converge_rom", &["m", "rel_error"], |sink| {
        let mut fom = None;
        for m in cfg.m_min..=cfg.m_max {
            let art = prior_only(&cfg.problem, m)?;
            if fom.is_none() {
                fom = Some(FullOrderMean::new(&art, omega)?);
            }
            let err = fom.as_ref().expect("set above").error(&art, omega)?;
            info!("m = {m}: {err:.3e}");
            sink.row(&[m.into(), err.into()])?;
        }
        Ok(())
    })
}

/// Reduced prior mean error over the frequency grid, one column per order.
pub fn sweep(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let names: Vec<String> = cfg.m_values.iter().map(|m| format!("err_m{m}")).collect();
    let mut header = vec!["frequency_hz"];
    header.extend(names.iter().map(String::as_str));
    let arts = cfg.m_values.iter().map(|&m| prior_only(&cfg.problem, m)).collect::<Result<Vec<_>>>()?;
    write_table(&cfg.out_dir, "sweep", &header, |sink| {
        for &f in &cfg.frequencies {
            let omega = hz(f);
            let fom = FullOrderMean::new(&arts[0], omega)?;
            let mut row = vec![Cell::Real(f)];
            for art in &arts {
                row.push(fom.error(art, omega)?.into());
            }
            info!("{f} Hz done");
            sink.row(&row)?;
        }
        Ok(())
    })
}

fn synthetic_data(cfg: &ExperimentConfig, problem: &ProblemConfig, omega: f64) -> Result<SyntheticData> {
    match &cfg.sensor_coords {
        None => generate_data(problem, omega),
        Some(coords) => observe(problem, reference_solution(problem, omega)?, &problem.prior_mesh()?, coords.clone()),
    }
}

fn channel_mean(errors: [f64; 2]) -> f64 {
    let finite: Vec<f64> = errors.into_iter().filter(|e| e.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Posterior errors of the three methods for `m = m_min..=m_max`.
///
/// Complex problems report the mean over both channels.
pub fn statrom_converge(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let omega = hz(single_frequency(cfg, Command::StatromConverge)?);
    let data = synthetic_data(cfg, &cfg.problem, omega)?;
    let header = ["m", "err_classical", "err_statrom", "err_fullorder"];
    write_table(&cfg.out_dir, "statrom_converge", &header, |sink| {
        let mut full_order = f64::NAN;
        for m in cfg.m_min..=cfg.m_max {
            let art = offline(&ProblemConfig { m, ..cfg.problem.clone() })?;
            let first = m == cfg.m_min;
            let run = online(&art, omega, &data, OnlineOptions { full_order: first })?;
            let err = |method| run.method(method).map_or(f64::NAN, |r| channel_mean(r.errors()));
            if first {
                full_order = err(Method::FullOrder);
            }
            let (classical, statrom) = (err(Method::Classical), err(Method::StatRom));
            info!("m = {m}: classical {classical:.4e}, statrom {statrom:.4e}, full order {full_order:.4e}");
            sink.row(&[m.into(), classical.into(), statrom.into(), full_order.into()])?;
        }
        Ok(())
    })
}

/// Posterior errors per channel for every configured grid cell.
pub fn scatter2d(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let header = ["frequency_hz", "m", "n_sensors", "n_obs", "method", "err_re", "err_im", "sigma_d_re", "sigma_d_im"];
    write_table(&cfg.out_dir, "scatter2d", &header, |sink| {
        let mut references: Vec<(f64, ReferenceSolution)> = Vec::new();
        let mut art: Option<OfflineArtifacts> = None;
        for cell in &cfg.grid {
            let problem = ProblemConfig {
                m: cell.m,
                n_sensors: cell.n_sensors,
                n_obs: cell.n_obs,
                ..cfg.problem.clone()
            };
            if art.as_ref().map_or(true, |a| a.config.m != cell.m) {
                art.take();
                art = Some(offline(&problem)?);
            }
            let art = art.as_ref().expect("set above");
            let omega = hz(cell.frequency_hz);
            let reference = match references.iter().find(|(f, _)| *f == cell.frequency_hz) {
                Some((_, r)) => r.clone(),
                None => {
                    let r = reference_solution(&problem, omega)?;
                    references.push((cell.frequency_hz, r.clone()));
                    r
                }
            };
            let coords = match &cfg.sensor_coords {
                Some(c) => c.clone(),
                None => sensor_points(&problem, art.mesh(), &reference.mesh)?,
            };
            let data = observe(&problem, reference, art.mesh(), coords)?;
            let run = online(art, omega, &data, OnlineOptions { full_order: true })?;
            for result in &run.methods {
                let [err_re, err_im] = result.errors();
                let [sd_re, sd_im] = result.sigma_d();
                info!(
                    "{} Hz, m = {}, {}/{}: {} {err_re:.4e} {err_im:.4e}",
                    cell.frequency_hz,
                    cell.m,
                    cell.n_sensors,
                    cell.n_obs,
                    result.method.as_str()
                );
                sink.row(&[
                    cell.frequency_hz.into(),
                    cell.m.into(),
                    cell.n_sensors.into(),
                    cell.n_obs.into(),
                    result.method.as_str().into(),
                    err_re.into(),
                    err_im.into(),
                    sd_re.into(),
                    sd_im.into(),
                ])?;
            }
        }
        Ok(())
    })
}

/// Writes sensor coordinates, readings and the reference field.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let omega = hz(single_frequency(cfg, Command::GenData)?);
    let data = synthetic_data(cfg, &cfg.problem, omega)?;
    let sensors = &data.data;
    let mut files: Vec<(String, String)> = Vec::new();

    let coords: Vec<Vec<Cell>> = sensors.coords.iter().enumerate().map(|(i, p)| vec![i.into(), p[0].into(), p[1].into()]).collect();
    files.push(("coordinates.csv".into(), render(&["sensor", "x", "y"], &coords)));

    let obs_names: Vec<String> = (0..sensors.readings.ncols()).map(|j| format!("obs_{j}")).collect();
    let obs_header: Vec<&str> = obs_names.iter().map(String::as_str).collect();
    let reference = &data.reference;
    for ch in Channel::BOTH {
        let tag = match ch {
            Channel::Re => "re",
            Channel::Im => "im",
        };
        let readings: Vec<Vec<Cell>> = sensors.readings.row_iter().map(|r| r.iter().map(|z| Cell::Real(ch.part(*z))).collect()).collect();
        files.push((format!("readings_{tag}.csv"), render(&obs_header, &readings)));
        let nodal: Vec<Vec<Cell>> = reference
            .mesh
            .nodes()
            .iter()
            .zip(reference.values.iter())
            .enumerate()
            .map(|(i, (p, z))| vec![i.into(), p[0].into(), p[1].into(), ch.part(*z).into()])
            .collect();
        files.push((format!("reference_{tag}.csv"), render(&["node", "x", "y", "value"], &nodal)));
    }

    let mut paths = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = cfg.out_dir.join(name);
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Renders the configured `input` CSV to `<out>/<stem>.svg`.
pub fn plot(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let input = cfg.input.as_ref().ok_or_else(|| Error::Config("plot needs an `input` CSV".into()))?;
    let table = Table::parse(&fs::read_to_string(input)?)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let svg = render_svg(&table, stem)?;
    let path = cfg.out_dir.join(format!("{stem}.svg"));
    fs::write(&path, svg)?;
    Ok(path)
}

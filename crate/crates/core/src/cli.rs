//! `affine-lab --config run.toml [--set key=value]... [--seed N] [--workers N] [--out DIR]`
//!
//! Exit status: 0 when the experiment's check passes, 1 when it fails, 2 for
//! configuration errors. `manifest.json` in the output directory is itself a
//! valid `--config` and reproduces every output file bit for bit.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use crate::config::{export_preset, load_config, Experiment, Manifest, MetricChoice, RunConfig};
use crate::error::{Error, Result};
use crate::harness::{
    check_contraction, check_convolution, check_ergodicity, check_mean, check_moment_growth, default_u_grid,
    ErgodicitySettings, McSettings, MomentMode, CONVOLUTION_SEED_SALT, INVARIANT_SEED_SALT, OT_SUBSAMPLE,
};
use crate::models::Preset;
use crate::riccati::{invariant_transform, solve_riccati};
use crate::sde::{read_samples, simulate, simulate_ensemble, write_samples, NoiseBundle};
use crate::wasserstein::{wasserstein, GroundMetric};

pub const PROGRAM: &str = "affine-lab";

#[derive(Debug, Parser)]
#[command(name = PROGRAM, version, about = "Affine process laboratory")]
struct Args {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, required_unless_present = "export_preset")]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set run.paths=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a preset as an editable config and exit.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    export_preset: Option<String>,
}

/// Outcome of one experiment.
pub struct Outcome {
    pub pass: bool,
    pub manifest: Manifest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Riccati { .. } | Error::Explosion { .. } | Error::Divergent(_) | Error::Domain(_) => 1,
        _ => 2,
    }
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(name) = &args.export_preset {
        return match export_preset(name) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let path = args.config.as_deref().expect("clap enforces --config");
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = match load_config(path, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let workers = args.workers.or(cfg.workers).unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {workers} workers: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| execute(&cfg, &out)) {
        Ok(o) => {
            println!(
                "{:?}: {} (outputs in {})",
                cfg.experiment,
                if o.pass { "pass" } else { "FAIL" },
                out.display()
            );
            ExitCode::from(if o.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn require<T: Clone>(v: &Option<T>, key: &str, exp: Experiment) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("experiment {exp:?} requires `{key}`")))
}

fn metric(cfg: &RunConfig, preset: &Preset) -> Result<GroundMetric> {
    match cfg.run.metric {
        MetricChoice::Kappa => GroundMetric::kappa(cfg.run.kappa, preset.params.dims),
        MetricChoice::Log => Ok(GroundMetric::log(preset.params.dims)),
    }
}

fn grid(cfg: &RunConfig, preset: &Preset) -> Vec<Vec<num_complex::Complex64>> {
    cfg.explicit_grid()
        .unwrap_or_else(|| default_u_grid(&preset.params, cfg.run.u_points))
}

#[derive(Serialize)]
struct Validation<'a> {
    model: &'a str,
    report: crate::params::ValidationReport,
}

#[derive(Serialize)]
struct Invariant {
    u: Vec<num_complex::Complex64>,
    transform: crate::riccati::InvariantTransform,
}

#[derive(Serialize)]
struct Transport {
    points_p: usize,
    points_q: usize,
    value: f64,
    resolution: f64,
}

/// Runs the configured experiment, writing all outputs and the manifest into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let preset = cfg.resolve_model()?;
    let p = &preset.params;
    let exp = cfg.experiment;
    let x = cfg.run.x.clone().unwrap_or_else(|| preset.start.clone());
    let mc = McSettings::new(cfg.scheme, cfg.run.paths, cfg.seed);
    let times = &cfg.run.times;
    let mut resolved = cfg.clone();
    resolved.run.x = Some(x.clone());
    let mut seeds = vec![cfg.seed];
    let mut cost_resolution = None;
    if exp == Experiment::Wasserstein {
        for f in [&cfg.run.samples_p, &cfg.run.samples_q] {
            let f = require(f, "run.samples_p and run.samples_q", exp)?;
            if !Path::new(&f).is_file() {
                return Err(Error::Config(format!("sample file {f} does not exist")));
            }
        }
    }
    if exp == Experiment::Contraction {
        require(&cfg.run.x_tilde, "run.x_tilde", exp)?;
    }
    fs::create_dir_all(out)?;

    let pass = match exp {
        Experiment::Validate => {
            let report = p.validate()?;
            let pass = report.is_admissible();
            write_json(out, "report.json", &Validation { model: &preset.name, report })?;
            pass
        }
        Experiment::Simulate => {
            let s = cfg.scheme;
            s.check()?;
            let tr = simulate(p, &x, &s, NoiseBundle::new(cfg.seed, 0))?;
            tr.write_csv(create(out, "trajectory.csv")?)?;
            let mut obs: Vec<f64> = times.iter().copied().filter(|t| *t < s.horizon).collect();
            obs.push(s.horizon);
            let ens = simulate_ensemble(p, &x, &s, cfg.run.paths, cfg.seed, &obs)?;
            write_samples(create(out, "samples.bin")?, ens.samples.last().expect("horizon observed"))?;
            let mut wr = csv::Writer::from_writer(create(out, "summary.csv")?);
            let d = p.dims.d();
            let mut header = vec!["t".to_string()];
            header.extend((0..d).map(|k| format!("mean_{k}")));
            header.extend((0..d).map(|k| format!("se_{k}")));
            header.extend(["v1".to_string(), "v2".to_string()]);
            wr.write_record(&header)?;
            for row in ens.summary(cfg.run.kappa) {
                let mut r = vec![row.t.to_string()];
                r.extend(row.mean.iter().chain(&row.std_err).map(|v| v.to_string()));
                r.extend([row.v1.to_string(), row.v2.to_string()]);
                wr.write_record(&r)?;
            }
            wr.flush()?;
            true
        }
        Experiment::Riccati => {
            let u = cfg.transform_argument(p.dims.d(), p.dims.m);
            let sol = solve_riccati(p, &u, cfg.run.t, cfg.run.tol)?;
            sol.write_csv(create(out, "riccati.csv")?)?;
            true
        }
        Experiment::Invariant => {
            let u = cfg.transform_argument(p.dims.d(), p.dims.m);
            let it = invariant_transform(p, &u, 1e-6, cfg.run.tol)?;
            write_json(out, "invariant.json", &Invariant { u, transform: it })?;
            true
        }
        Experiment::Mean => {
            let r = check_mean(p, &x, cfg.run.t, &mc)?;
            write_json(out, "mean.json", &r)?;
            r.pass
        }
        Experiment::Moments => {
            let mode = match cfg.run.metric {
                MetricChoice::Kappa => MomentMode::Kappa { kappa: cfg.run.kappa },
                MetricChoice::Log => MomentMode::Log,
            };
            let r = check_moment_growth(p, &x, mode, times, &mc)?;
            write_json(out, "moments.json", &r)?;
            let mut wr = csv::Writer::from_writer(create(out, "moments.csv")?);
            wr.write_record(["t", "value", "se"])?;
            for k in 0..r.times.len() {
                wr.write_record([r.times[k].to_string(), r.values[k].to_string(), r.std_err[k].to_string()])?;
            }
            wr.flush()?;
            r.pass
        }
        Experiment::Contraction => {
            let xt = require(&cfg.run.x_tilde, "run.x_tilde", exp)?;
            let r = check_contraction(p, &x, &xt, times, &mc)?;
            write_json(out, "contraction.json", &r)?;
            if let Some(f) = &r.fit {
                f.write_csv(create(out, "decay.csv")?)?;
            }
            r.pass
        }
        Experiment::Convolution => {
            seeds.push(cfg.seed ^ CONVOLUTION_SEED_SALT);
            let r = check_convolution(p, &x, cfg.run.t, &grid(cfg, &preset), &mc)?;
            write_json(out, "convolution.json", &r)?;
            r.write_csv(create(out, "convolution.csv")?)?;
            r.pass
        }
        Experiment::Ergodicity => {
            seeds.push(cfg.seed ^ INVARIANT_SEED_SALT);
            let es = ErgodicitySettings {
                burn_in: cfg.run.burn_in,
                far_start_scale: cfg.run.far_start_scale,
                repeats: cfg.run.repeats,
                u_points: cfg.run.u_points,
            };
            let mut mc = mc;
            mc.paths = mc.paths.max(OT_SUBSAMPLE * es.repeats.max(1));
            let r = check_ergodicity(p, &x, times, &metric(cfg, &preset)?, &es, &mc)?;
            cost_resolution = Some(r.resolution);
            write_json(out, "ergodicity.json", &r)?;
            r.write_csv(create(out, "ergodicity.csv")?)?;
            if let Some(f) = &r.fit {
                f.write_csv(create(out, "decay.csv")?)?;
            }
            r.pass
        }
        Experiment::Wasserstein => {
            let d = p.dims.d();
            let load = |f: &Option<String>| -> Result<_> {
                let f = f.as_deref().expect("checked above");
                read_samples(File::open(f)?, d)
            };
            let (sp, sq) = (load(&cfg.run.samples_p)?, load(&cfg.run.samples_q)?);
            let r = wasserstein(&metric(cfg, &preset)?, &sp, &sq)?;
            cost_resolution = Some(r.resolution);
            let rep = Transport {
                points_p: sp.len(),
                points_q: sq.len(),
                value: r.value,
                resolution: r.resolution,
            };
            let mut wr = csv::Writer::from_writer(create(out, "wasserstein.csv")?);
            wr.serialize(&rep)?;
            wr.flush()?;
            true
        }
    };
    let manifest = Manifest {
        program: PROGRAM.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: resolved,
        seeds,
        cost_resolution,
    };
    write_json(out, "manifest.json", &manifest)?;
    Ok(Outcome { pass, manifest })
}

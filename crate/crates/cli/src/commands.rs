use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use clear_core::experiments::estimators::run_refit;
use clear_core::experiments::sweep::{default_grid, default_h_grid, geometric_grid, sweep_observation, to_csv};
use clear_core::experiments::validation::{all_passed, format_table, run_suite, ValidateOptions};
use clear_core::experiments::{
    degrade, mse, phantom, psnr, ssim, DegradationSpec, EstimatorId, EstimatorSettings, PhantomId,
};
use clear_core::{io, Error, Grid, LinearMap};

use crate::manifest::Manifest;
use crate::{Cli, ProblemArgs, RerunArgs, RestoreArgs, SweepArgs, Task, ValidateArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Manifest keys that are replayed as `--key value` flags by `rerun`.
const FLAG_KEYS: [&str; 22] = [
    "estimator",
    "task",
    "in",
    "size",
    "truth",
    "sigma",
    "mask-fraction",
    "blur",
    "seed",
    "s",
    "b",
    "iters",
    "tol",
    "beta",
    "jvp",
    "out",
    "lambda",
    "h",
    "points",
    "parallel",
    "n",
    "observed",
];

#[derive(Debug)]
pub enum Failure {
    Check(String),
    Usage(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::ShapeMismatch { .. } => Failure::Usage(e.to_string()),
            Error::Io(_) | Error::Parse(_) => Failure::Io(e.to_string()),
            Error::Singular(_) | Error::NonFinite(_) => Failure::Check(e.to_string()),
        }
    }
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read_image(path: &Path) -> Result<Grid, Failure> {
    io::read_image(path).map_err(|e| io_fail(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| io_fail(path, e))
}

fn phantom_name(s: &str) -> Option<PhantomId> {
    if s == "phantom" {
        return Some(PhantomId::Squares2d);
    }
    s.parse().ok()
}

/// Observation, forward operator and (when known) the ground truth.
struct Problem {
    y: Grid,
    phi: LinearMap,
    truth: Option<Grid>,
}

fn build_problem(p: &ProblemArgs) -> Result<Problem, Failure> {
    let (clean, is_phantom) = match phantom_name(&p.input) {
        Some(id) => (phantom(id, p.size)?, true),
        None => (read_image(Path::new(&p.input))?, false),
    };
    let (y, phi) = if p.observed {
        if p.task != Task::Denoise {
            return Err(Failure::Usage(
                "--observed is only meaningful with --task denoise".into(),
            ));
        }
        let (r, c) = clean.shape();
        (clean.clone(), LinearMap::identity(r, c))
    } else {
        let spec = match p.task {
            Task::Denoise => DegradationSpec::awgn(p.sigma, p.seed),
            Task::Inpaint => DegradationSpec::mask(p.mask_fraction, p.sigma, p.seed),
            Task::Deblur => DegradationSpec::blur(p.blur, p.sigma, p.seed),
        };
        degrade(&clean, &spec)?
    };
    let truth = match &p.truth {
        Some(path) => Some(read_image(path)?),
        None if is_phantom || !p.observed => Some(clean),
        None => None,
    };
    if let Some(t) = &truth {
        if t.shape() != y.shape() {
            return Err(Failure::Usage(format!(
                "truth is {:?} but the observation is {:?}",
                t.shape(),
                y.shape()
            )));
        }
    }
    Ok(Problem { y, phi, truth })
}

fn settings(p: &ProblemArgs, param: f64) -> EstimatorSettings {
    EstimatorSettings {
        nlm_s: p.s,
        nlm_b: p.b,
        sigma_noise: p.sigma,
        max_iters: p.iters,
        rel_tol: p.tol,
        beta: p.beta,
        jvp: p.jvp,
        ..EstimatorSettings::new(p.estimator, param)
    }
}

fn absolute(path: &str) -> String {
    fs::canonicalize(path)
        .map(|p| p.display().to_string())
        .unwrap_or_else(|_| path.to_string())
}

fn problem_manifest(command: &str, p: &ProblemArgs) -> Manifest {
    let mut m = Manifest::new();
    m.set("command", command);
    m.set("version", VERSION);
    m.set("estimator", p.estimator);
    m.set("task", p.task.as_str());
    let input = if phantom_name(&p.input).is_some() {
        p.input.clone()
    } else {
        absolute(&p.input)
    };
    m.set("in", input);
    m.set("size", p.size);
    if let Some(t) = &p.truth {
        m.set("truth", absolute(&t.display().to_string()));
    }
    if p.observed {
        m.set("observed", true);
    }
    m.set_f64("sigma", p.sigma);
    m.set_f64("mask-fraction", p.mask_fraction);
    m.set_f64("blur", p.blur);
    m.set("seed", p.seed);
    m.set("s", p.s);
    m.set("b", p.b);
    m.set("iters", p.iters);
    m.set_f64("tol", p.tol);
    if let Some(b) = p.beta {
        m.set_f64("beta", b);
    }
    m.set("jvp", p.jvp.as_str());
    m.set("out", p.out.display());
    m
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))
}

fn write_manifest(m: &Manifest, dir: &Path) -> Result<(), Failure> {
    let path = dir.join("manifest.txt");
    write_file(&path, m.to_text().as_bytes())
}

/// Resolves `--lambda` / `--h` against the estimator.
fn estimator_param(a: &RestoreArgs) -> Result<(&'static str, f64), Failure> {
    let id = a.problem.estimator;
    let (name, given, other) = if id == EstimatorId::Nlm {
        ("h", a.h, a.lambda.map(|_| "lambda"))
    } else {
        ("lambda", a.lambda, a.h.map(|_| "h"))
    };
    if let Some(o) = other {
        return Err(Failure::Usage(format!("--{o} does not apply to {id}; use --{name}")));
    }
    let v = given.ok_or_else(|| Failure::Usage(format!("missing --{name} for estimator {id}")))?;
    Ok((name, v))
}

pub fn restore(a: &RestoreArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let p = &a.problem;
    let (pname, param) = estimator_param(a)?;
    let prob = build_problem(p)?;
    let run = run_refit(&settings(p, param), &prob.phi, &prob.y)?;
    let px = prob.phi.apply(run.estimate.as_slice())?;
    let residual = prob.y.zip_map(&prob.y.with_data(px)?, |a, b| a - b);

    create_out(&p.out)?;
    let d = &p.out;
    write_file(&d.join("observation.grid"), io::encode_grid_text(&prob.y).as_bytes())?;
    write_file(&d.join("estimate.grid"), io::encode_grid_text(&run.estimate).as_bytes())?;
    write_file(&d.join("refit.grid"), io::encode_grid_text(&run.refit).as_bytes())?;
    write_file(&d.join("residual.grid"), io::encode_grid_text(&residual).as_bytes())?;
    write_file(&d.join("observation.pgm"), &io::encode_pgm(&prob.y))?;
    write_file(&d.join("estimate.pgm"), &io::encode_pgm(&run.estimate))?;
    write_file(&d.join("refit.pgm"), &io::encode_pgm(&run.refit))?;

    let mut m = problem_manifest("restore", p);
    m.set_f64(pname, param);
    m.set_f64("rho", run.rho);
    m.set("iters_used", run.iters);
    m.set("converged", run.converged);
    m.set("jvp_mode", run.jvp_mode.as_str());
    println!(
        "estimator {}  {pname}={param}  rho={:.6}  iters={}  converged={}",
        p.estimator, run.rho, run.iters, run.converged
    );
    if let Some(t) = &prob.truth {
        for (label, g) in [("estimate", &run.estimate), ("refit", &run.refit)] {
            let (e, q, s) = (mse(g, t)?, psnr(g, t)?, ssim(g, t)?);
            println!("{label:<8}  mse={e:.4}  psnr={q:.3} dB  ssim={s:.4}");
            m.set_f64(&format!("mse_{label}"), e);
            m.set_f64(&format!("psnr_{label}"), q);
            m.set_f64(&format!("ssim_{label}"), s);
        }
    }
    m.set_f64("wall_time_s", started.elapsed().as_secs_f64());
    write_manifest(&m, d)?;
    println!("wrote {}", d.display());
    Ok(())
}

fn parse_points(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad grid value '{t}'")))
        })
        .collect()
}

fn parse_grid_spec(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::Usage(format!("--grid expects LO:HI:N, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].parse::<f64>().map_err(|_| bad())?;
    let hi = parts[1].parse::<f64>().map_err(|_| bad())?;
    let n = parts[2].parse::<usize>().map_err(|_| bad())?;
    Ok(geometric_grid(lo, hi, n)?)
}

pub fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let p = &a.problem;
    if a.parallel == 0 {
        return Err(Failure::Usage("--parallel must be at least 1".into()));
    }
    let mut grid = match (&a.points, &a.grid) {
        (Some(pts), _) => parse_points(pts)?,
        (None, Some(g)) => parse_grid_spec(g)?,
        (None, None) if p.estimator == EstimatorId::Nlm => default_h_grid(p.sigma, p.b),
        (None, None) => default_grid(p.sigma),
    };
    grid.sort_by(f64::total_cmp);
    let prob = build_problem(p)?;
    let truth = prob
        .truth
        .as_ref()
        .ok_or_else(|| Failure::Usage("sweep needs a ground truth (--truth)".into()))?;
    let records = sweep_observation(&settings(p, grid[0]), &grid, truth, &prob.y, &prob.phi, a.parallel)?;

    create_out(&p.out)?;
    write_file(&p.out.join("sweep.csv"), to_csv(&records).as_bytes())?;

    let mut m = problem_manifest("sweep", p);
    let pts: Vec<String> = grid.iter().map(|v| format!("{v:?}")).collect();
    m.set("points", pts.join(","));
    m.set("parallel", a.parallel);
    let best = |f: fn(&clear_core::experiments::SweepRecord) -> f64| {
        records
            .iter()
            .min_by(|x, y| f(x).total_cmp(&f(y)))
            .expect("non-empty sweep")
    };
    let (bo, br) = (best(|r| r.mse_orig), best(|r| r.mse_refit));
    m.set_f64("best_param_orig", bo.param);
    m.set_f64("best_mse_orig", bo.mse_orig);
    m.set_f64("best_param_refit", br.param);
    m.set_f64("best_mse_refit", br.mse_refit);
    m.set_f64("wall_time_s", started.elapsed().as_secs_f64());
    write_manifest(&m, &p.out)?;
    let name = p.estimator.param_name();
    println!(
        "{} points  best original {name}={} mse={:.4}  best refit {name}={} mse={:.4}",
        records.len(),
        bo.param,
        bo.mse_orig,
        br.param,
        br.mse_refit
    );
    println!("wrote {}", p.out.join("sweep.csv").display());
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let opts = ValidateOptions {
        seed: a.seed,
        draws: a.draws,
        beta: a.beta,
    };
    let checks = run_suite(a.suite, &opts)?;
    let table = format_table(&checks);
    print!("{table}");
    let ok = all_passed(&checks);
    if let Some(dir) = &a.out {
        create_out(dir)?;
        write_file(&dir.join("checks.txt"), table.as_bytes())?;
        let mut m = Manifest::new();
        m.set("command", "validate");
        m.set("version", VERSION);
        m.set("suite", a.suite.as_str());
        m.set("seed", a.seed);
        m.set("n", a.draws);
        if let Some(b) = a.beta {
            m.set_f64("beta", b);
        }
        m.set("out", dir.display());
        m.set("passed", ok);
        m.set_f64("wall_time_s", started.elapsed().as_secs_f64());
        write_manifest(&m, dir)?;
    }
    if ok {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Failure::Check(format!("suite {} has failing checks", a.suite.as_str())))
    }
}

/// Rebuilds the command line recorded in a manifest.
fn replay_args(m: &Manifest, out: Option<&PathBuf>) -> Result<Vec<String>, Failure> {
    let command = m
        .get("command")
        .ok_or_else(|| Failure::Usage("manifest has no command".into()))?;
    let mut argv = vec!["clear".to_string(), command.to_string()];
    if command == "validate" {
        let suite = m
            .get("suite")
            .ok_or_else(|| Failure::Usage("manifest has no suite".into()))?;
        argv.push(suite.to_string());
    }
    for key in FLAG_KEYS {
        let value = match (key, out) {
            ("out", Some(o)) => o.display().to_string(),
            _ => match m.get(key) {
                Some(v) => v.to_string(),
                None => continue,
            },
        };
        if key == "observed" {
            if value == "true" {
                argv.push("--observed".into());
            }
            continue;
        }
        argv.push(format!("--{key}"));
        argv.push(value);
    }
    Ok(argv)
}

pub fn rerun(a: &RerunArgs) -> Result<(), Failure> {
    let m = Manifest::read(&a.manifest).map_err(|e| io_fail(&a.manifest, e))?;
    if m.get("command") == Some("validate") && a.out.is_none() && m.get("out").is_none() {
        return Err(Failure::Usage("manifest has no output directory".into()));
    }
    let argv = replay_args(&m, a.out.as_ref())?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Usage(format!("manifest does not replay: {e}")))?;
    if matches!(cli.command, crate::Command::Rerun(_)) {
        return Err(Failure::Usage("a manifest cannot describe a rerun".into()));
    }
    crate::dispatch(cli.command)
}

//! Experiment orchestration: JSON configuration, seeded runs, CSV
//! convergence logs and side-by-side solver comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::{Atom, EnergyModel, HessianMode, KohnSham1D, KsParams, QuadraticTraceModel};
use crate::error::{Error, Result};
use crate::geometry::StiefelPoint;
use crate::retraction::RetractionKind;
use crate::solver::{solve, IterationRecord, SigmaMode, SolveResult, SolverConfig, SolverKind, Status};

pub mod props;

/// Raw configuration file contents; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: String,
    pub n_g: usize,
    pub n: usize,
    /// Seed of the symmetric matrix (quadratic model only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomConfig>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_floor: Option<f64>,

    pub solver: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retraction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian: Option<String>,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub position: f64,
    pub depth: f64,
    pub width: f64,
}

/// Which energy model a run is over.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Quadratic {
        dim: usize,
        frame_width: usize,
        matrix_seed: u64,
    },
    KohnSham(KsParams),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn EnergyModel>> {
        match self {
            ModelSpec::Quadratic {
                dim,
                frame_width,
                matrix_seed,
            } => Ok(Box::new(QuadraticTraceModel::seeded(
                *dim,
                *frame_width,
                *matrix_seed,
            )?)),
            ModelSpec::KohnSham(params) => Ok(Box::new(KohnSham1D::new(params.clone())?)),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ModelSpec::Quadratic { dim, .. } => *dim,
            ModelSpec::KohnSham(p) => p.grid_points,
        }
    }

    pub fn frame_width(&self) -> usize {
        match self {
            ModelSpec::Quadratic { frame_width, .. } => *frame_width,
            ModelSpec::KohnSham(p) => p.frame_width,
        }
    }
}

/// A fully validated experiment: model, solver, seed and output path.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub solver_kind: SolverKind,
    pub solver: SolverConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Canonical JSON of the resolved configuration.
    pub canonical: String,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical configuration (excludes the output path).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Parses and validates a JSON configuration, applying the documented
/// defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
    resolve_config(raw)
}

pub fn resolve_config(raw: RawConfig) -> Result<ExperimentConfig> {
    if raw.n_g == 0 || raw.n == 0 || raw.n > raw.n_g {
        return Err(Error::Config(format!(
            "invalid problem size n_g = {}, n = {}",
            raw.n_g, raw.n
        )));
    }
    let seed = raw.seed.unwrap_or(0);
    let model = match raw.model.as_str() {
        "quadratic" => {
            for (key, set) in [
                ("box_length", raw.box_length.is_some()),
                ("atoms", raw.atoms.is_some()),
                ("c_x", raw.c_x.is_some()),
                ("rho_floor", raw.rho_floor.is_some()),
            ] {
                if set {
                    return Err(Error::Config(format!(
                        "key '{key}' does not apply to the quadratic model"
                    )));
                }
            }
            ModelSpec::Quadratic {
                dim: raw.n_g,
                frame_width: raw.n,
                matrix_seed: raw.matrix_seed.unwrap_or(0),
            }
        }
        "ks1d" => {
            if raw.matrix_seed.is_some() {
                return Err(Error::Config(
                    "key 'matrix_seed' does not apply to the ks1d model".into(),
                ));
            }
            let mut params = KsParams::example(raw.n_g, raw.n);
            if let Some(b) = raw.box_length {
                params.box_length = b;
                // keep the default wells proportionate to the box
                params.atoms = KsParams::example(raw.n_g, raw.n)
                    .atoms
                    .into_iter()
                    .map(|a| Atom {
                        position: a.position / 10.0 * b,
                        ..a
                    })
                    .collect();
            }
            if let Some(atoms) = &raw.atoms {
                params.atoms = atoms
                    .iter()
                    .map(|a| Atom {
                        position: a.position,
                        depth: a.depth,
                        width: a.width,
                    })
                    .collect();
            }
            if let Some(c) = raw.c_x {
                params.exchange_constant = c;
            }
            if let Some(f) = raw.rho_floor {
                params.density_floor = f;
            }
            ModelSpec::KohnSham(params)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected quadratic|ks1d)"
            )))
        }
    };

    let solver_kind = SolverKind::from_str(&raw.solver)?;
    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        epsilon: raw.epsilon.unwrap_or(defaults.epsilon),
        q: raw.q.unwrap_or(defaults.q),
        eta: raw.eta.unwrap_or(defaults.eta),
        gamma1: raw.gamma1.unwrap_or(defaults.gamma1),
        gamma2: raw.gamma2.unwrap_or(defaults.gamma2),
        sigma: raw.sigma.unwrap_or(defaults.sigma),
        sigma_mode: match &raw.sigma_mode {
            Some(s) => SigmaMode::from_str(s)?,
            None => defaults.sigma_mode,
        },
        inner_cap: raw.inner_cap.unwrap_or(defaults.inner_cap),
        t_min: raw.t_min.unwrap_or(defaults.t_min),
        alpha: raw.alpha.unwrap_or(defaults.alpha),
        max_outer: raw.max_outer.unwrap_or(defaults.max_outer),
        max_backtracks: raw.max_backtracks.unwrap_or(defaults.max_backtracks),
        retraction: match &raw.retraction {
            Some(s) => RetractionKind::from_str(s)?,
            None => defaults.retraction,
        },
        hessian_mode: match &raw.hessian {
            Some(s) => HessianMode::from_str(s)?,
            None => defaults.hessian_mode,
        },
    };
    solver.validate_for(solver_kind)?;

    let canonical = canonical_json(&raw, seed, &solver, solver_kind)?;
    Ok(ExperimentConfig {
        model,
        solver_kind,
        solver,
        seed,
        output: raw.output.map(PathBuf::from),
        canonical,
    })
}

/// Canonical key-sorted JSON of the resolved settings (defaults included,
/// output path excluded) so equal experiments share a digest.
fn canonical_json(
    raw: &RawConfig,
    seed: u64,
    solver: &SolverConfig,
    kind: SolverKind,
) -> Result<String> {
    let mut map: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    let mut put = |k: &str, v: serde_json::Value| {
        map.insert(k.to_string(), v);
    };
    put("model", raw.model.clone().into());
    put("n_g", raw.n_g.into());
    put("n", raw.n.into());
    if raw.model == "quadratic" {
        put("matrix_seed", raw.matrix_seed.unwrap_or(0).into());
    } else {
        if let Some(b) = raw.box_length {
            put("box_length", b.into());
        }
        if let Some(atoms) = &raw.atoms {
            put(
                "atoms",
                serde_json::to_value(atoms).map_err(|e| Error::Config(e.to_string()))?,
            );
        }
        if let Some(c) = raw.c_x {
            put("c_x", c.into());
        }
        if let Some(f) = raw.rho_floor {
            put("rho_floor", f.into());
        }
    }
    put("solver", kind.name().into());
    put("epsilon", solver.epsilon.into());
    put("eta", solver.eta.into());
    put("q", solver.q.into());
    put("gamma1", solver.gamma1.into());
    put("gamma2", solver.gamma2.into());
    put("sigma", solver.sigma.into());
    put("sigma_mode", solver.sigma_mode.name().into());
    put("inner_cap", solver.inner_cap.into());
    put("t_min", solver.t_min.into());
    put("alpha", solver.alpha.into());
    put("max_outer", solver.max_outer.into());
    put("max_backtracks", solver.max_backtracks.into());
    put("retraction", solver.retraction.name().into());
    put("hessian", solver.hessian_mode.name().into());
    put("seed", seed.into());
    serde_json::to_string(&map).map_err(|e| Error::Config(e.to_string()))
}

/// Header plus per-iteration rows of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceLog {
    pub digest: String,
    pub timestamp: String,
    pub solver: String,
    pub seed: u64,
    pub epsilon: f64,
    pub status: Status,
    pub rows: Vec<IterationRecord>,
}

impl ConvergenceLog {
    /// Serializes to CSV with `#`-prefixed header lines; floats carry 17
    /// significant digits so the file round-trips bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# digest: {}", self.digest);
        let _ = writeln!(out, "# timestamp: {}", self.timestamp);
        let _ = writeln!(out, "# solver: {}", self.solver);
        let _ = writeln!(out, "# seed: {}", self.seed);
        let _ = writeln!(out, "# epsilon: {:.16e}", self.epsilon);
        let _ = writeln!(out, "# status: {}", self.status.name());
        let _ = writeln!(out, "n,energy,grad_norm,step,backtracks,inner_iters,elapsed_s");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
                r.index, r.energy, r.grad_norm, r.step, r.backtracks, r.inner_iters, r.elapsed_s
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut digest = None;
        let mut timestamp = None;
        let mut solver = None;
        let mut seed = None;
        let mut epsilon = None;
        let mut status = None;
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((key, value)) = rest.split_once(':') {
                    let value = value.trim().to_string();
                    match key.trim() {
                        "digest" => digest = Some(value),
                        "timestamp" => timestamp = Some(value),
                        "solver" => solver = Some(value),
                        "seed" => {
                            seed = Some(value.parse::<u64>().map_err(|e| {
                                Error::Config(format!("line {}: bad seed: {e}", lineno + 1))
                            })?)
                        }
                        "epsilon" => {
                            epsilon = Some(value.parse::<f64>().map_err(|e| {
                                Error::Config(format!("line {}: bad epsilon: {e}", lineno + 1))
                            })?)
                        }
                        "status" => status = Some(Status::from_str(&value)?),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "n,energy,grad_norm,step,backtracks,inner_iters,elapsed_s" {
                    return Err(Error::Config(format!(
                        "line {}: unexpected column header '{line}'",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Config(format!(
                    "line {}: expected 7 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse_f = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            let parse_u = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            };
            rows.push(IterationRecord {
                index: parse_u(fields[0])?,
                energy: parse_f(fields[1])?,
                grad_norm: parse_f(fields[2])?,
                step: parse_f(fields[3])?,
                backtracks: parse_u(fields[4])?,
                inner_iters: parse_u(fields[5])?,
                elapsed_s: parse_f(fields[6])?,
            });
        }
        let log = ConvergenceLog {
            digest: digest.ok_or_else(|| Error::Config("missing digest header".into()))?,
            timestamp: timestamp.ok_or_else(|| Error::Config("missing timestamp header".into()))?,
            solver: solver.ok_or_else(|| Error::Config("missing solver header".into()))?,
            seed: seed.ok_or_else(|| Error::Config("missing seed header".into()))?,
            epsilon: epsilon.ok_or_else(|| Error::Config("missing epsilon header".into()))?,
            status: status.ok_or_else(|| Error::Config("missing status header".into()))?,
            rows,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.rows.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(Error::Config(format!(
                    "row indices not strictly increasing at n = {}",
                    pair[1].index
                )));
            }
        }
        if let Some(last) = self.rows.last() {
            let converged = last.grad_norm <= self.epsilon;
            if converged != (self.status == Status::Converged) {
                return Err(Error::Config(format!(
                    "status {} inconsistent with final grad_norm {:.3e} vs epsilon {:.3e}",
                    self.status.name(),
                    last.grad_norm,
                    self.epsilon
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of [`run_experiment`]: the solver result plus its log.
pub struct ExperimentOutcome {
    pub result: SolveResult,
    pub log: ConvergenceLog,
}

/// Builds the model, seeds the start frame, runs the solver and assembles
/// the convergence log (written to `cfg.output` when set).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let model = cfg.model.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u0 = StiefelPoint::random(&mut rng, cfg.model.ambient_dim(), cfg.model.frame_width());
    let result = solve(cfg.solver_kind, model.as_ref(), &u0, &cfg.solver)?;
    let log = ConvergenceLog {
        digest: cfg.digest(),
        timestamp: now_utc_string(),
        solver: cfg.solver_kind.name().to_string(),
        seed: cfg.seed,
        epsilon: cfg.solver.epsilon,
        status: result.status,
        rows: result.records.clone(),
    };
    log.validate()?;
    if let Some(path) = &cfg.output {
        write_log(path, &log)?;
    }
    Ok(ExperimentOutcome { result, log })
}

pub fn write_log(path: &Path, log: &ConvergenceLog) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, log.to_csv())?;
    Ok(())
}

fn now_utc_string() -> String {
    let since_epoch = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    format!("unix:{}.{:06}", since_epoch.as_secs(), since_epoch.subsec_micros())
}

/// One row of a comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub solver: String,
    pub final_energy: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub elapsed_s: f64,
    pub status: Status,
}

pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub logs: Vec<ConvergenceLog>,
}

impl Comparison {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>22} {:>8} {:>12} {:>10} {:>10}",
            "solver", "energy", "iter", "grad_norm", "time (s)", "status"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>22.14e} {:>8} {:>12.3e} {:>10.3} {:>10}",
                r.solver, r.final_energy, r.iterations, r.final_grad_norm, r.elapsed_s,
                r.status.name()
            );
        }
        out
    }
}

/// Runs several configurations over the same model and seed, differing
/// only in solver settings, and tabulates the outcomes.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::Config(
            "compare needs at least two configurations".into(),
        ));
    }
    let first = &configs[0];
    for other in &configs[1..] {
        if other.model != first.model || other.seed != first.seed {
            return Err(Error::Config(
                "compare requires identical model and seed across configurations".into(),
            ));
        }
    }
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for cfg in configs {
        let outcome = run_experiment(cfg)?;
        let last = outcome.log.rows.last().cloned().unwrap_or(IterationRecord {
            index: 0,
            energy: f64::NAN,
            grad_norm: f64::NAN,
            step: 0.0,
            backtracks: 0,
            inner_iters: 0,
            elapsed_s: 0.0,
        });
        rows.push(ComparisonRow {
            solver: cfg.solver_kind.name().to_string(),
            final_energy: last.energy,
            iterations: outcome.result.iterations(),
            final_grad_norm: last.grad_norm,
            elapsed_s: last.elapsed_s,
            status: outcome.result.status,
        });
        logs.push(outcome.log);
    }
    Ok(Comparison { rows, logs })
}

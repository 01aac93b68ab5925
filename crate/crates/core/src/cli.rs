//! Command line front end: configuration, pipelines and report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::additive::AdditiveDesign;
use crate::backend::{MarginalLikelihood, ScoreCache};
use crate::data::{format_float, Dataset};
use crate::design::{equispaced_grid, RawCovariate};
use crate::dof::DofGrid;
use crate::error::{Error, Result};
use crate::gaussian::{GPrior, GaussianBackend};
use crate::glm::{Family, GlmBackend};
use crate::model_space::{inclusion_summary, ModelIndex, ModelScore, ENUMERATION_CAP};
use crate::postprocess::{aggregate_meta, median_probability_meta, model_averaged_curves, optimize_dof, MetaKey, MetaModel};
use crate::sampler::{credible_bands, curves, model_seed, sample_gaussian, sample_glm, CurveSamples, GlmSamplerOptions, PosteriorDraws};
use crate::search::{exhaustive, mh_search, posterior_tables, thread_pool, SearchState};
use crate::simulate::{generate, Scenario, ScenarioKind};

#[derive(Debug, Parser)]
#[command(name = "hypergam", version, about = "Bayesian covariate and spline-shape selection in additive models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score the model space and write ranked models, inclusion probabilities and meta-models.
    Select(Flags),
    /// Sample one model (or meta-model) and write curve estimates with credible bands.
    Fit(Flags),
    /// Optimise the degrees of freedom of a model continuously.
    Optimize(Flags),
    /// Write a simulated data set.
    Simulate(Flags),
}

/// Every configuration key is also a flag of the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Key-value configuration file (`key = value` per line, `#` comments), or a previous run.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated covariate columns; default: every column except the response.
    #[arg(long)]
    pub covariates: Option<String>,
    /// gaussian, bernoulli or poisson.
    #[arg(long)]
    pub family: Option<String>,
    /// hyper-g or hyper-g/n.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub knots: Option<String>,
    /// Comma-separated degrees of freedom, starting 0,1.
    #[arg(long)]
    pub grid: Option<String>,
    /// search or exhaustive.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub iterations: Option<String>,
    #[arg(long = "p-move")]
    pub p_move: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// null, full or comma-separated degrees of freedom.
    #[arg(long)]
    pub start: Option<String>,
    /// map, meta or comma-separated degrees of freedom.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub thin: Option<String>,
    #[arg(long)]
    pub burnin: Option<String>,
    #[arg(long = "iwls-steps")]
    pub iwls_steps: Option<String>,
    #[arg(long = "grid-points")]
    pub grid_points: Option<String>,
    #[arg(long)]
    pub level: Option<String>,
    #[arg(long)]
    pub output: Option<String>,
    /// null, small or large.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// Number of covariates of the null scenario.
    #[arg(long)]
    pub p: Option<String>,
}

const DEFAULTS: &[(&str, &str)] = &[
    ("family", "gaussian"),
    ("prior", "hyper-g/n"),
    ("knots", "4"),
    ("method", "search"),
    ("iterations", "100000"),
    ("p-move", "0.75"),
    ("seed", "1"),
    ("start", "null"),
    ("model", "map"),
    ("samples", "10000"),
    ("thin", "2"),
    ("burnin", "1000"),
    ("iwls-steps", "2"),
    ("grid-points", "100"),
    ("level", "0.95"),
    ("output", "out"),
    ("scenario", "small"),
    ("n", "100"),
    ("sigma", "0.2"),
    ("p", "20"),
];

const OPTIONAL: &[&str] = &["data", "response", "covariates", "grid"];

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("data", self.data.as_ref()),
            ("response", self.response.as_ref()),
            ("covariates", self.covariates.as_ref()),
            ("family", self.family.as_ref()),
            ("prior", self.prior.as_ref()),
            ("knots", self.knots.as_ref()),
            ("grid", self.grid.as_ref()),
            ("method", self.method.as_ref()),
            ("iterations", self.iterations.as_ref()),
            ("p-move", self.p_move.as_ref()),
            ("seed", self.seed.as_ref()),
            ("start", self.start.as_ref()),
            ("model", self.model.as_ref()),
            ("samples", self.samples.as_ref()),
            ("thin", self.thin.as_ref()),
            ("burnin", self.burnin.as_ref()),
            ("iwls-steps", self.iwls_steps.as_ref()),
            ("grid-points", self.grid_points.as_ref()),
            ("level", self.level.as_ref()),
            ("output", self.output.as_ref()),
            ("scenario", self.scenario.as_ref()),
            ("n", self.n.as_ref()),
            ("sigma", self.sigma.as_ref()),
            ("p", self.p.as_ref()),
        ]
    }
}

fn known_key(k: &str) -> bool {
    DEFAULTS.iter().any(|(d, _)| *d == k) || OPTIONAL.contains(&k)
}

/// Reads `key = value` lines, or the `config` object of a run.json.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&text) {
        let cfg = obj
            .get("config")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Config(format!("{}: JSON configuration needs a `config` object", path.display())))?;
        for (k, v) in cfg {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            map.insert(k.clone(), s);
        }
    } else {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", path.display(), lineno + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    for k in map.keys() {
        if !known_key(k) {
            return Err(Error::Config(format!("unknown configuration key `{k}`")));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Search,
    Exhaustive,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Effective key-value pairs, echoed into run.json.
    pub raw: BTreeMap<String, String>,
    pub data: Option<PathBuf>,
    pub response: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub family: Family,
    pub prior: GPrior,
    pub knots: usize,
    pub grid: Option<Vec<f64>>,
    pub method: Method,
    pub iterations: u64,
    pub p_move: f64,
    pub seed: u64,
    pub start: String,
    pub model: String,
    pub sampler: GlmSamplerOptions,
    pub grid_points: usize,
    pub level: f64,
    pub output: PathBuf,
    pub scenario: ScenarioKind,
    pub n: usize,
    pub sigma: f64,
    pub p: usize,
}

fn parse<T: std::str::FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = &raw[key];
    v.parse().map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("`{key}` has invalid entry `{s}`"))))
        .collect()
}

impl RunConfig {
    pub fn from_map(mut raw: BTreeMap<String, String>) -> Result<Self> {
        for (k, v) in DEFAULTS {
            raw.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        let method = match raw["method"].as_str() {
            "search" => Method::Search,
            "exhaustive" => Method::Exhaustive,
            other => return Err(Error::Config(format!("unknown method `{other}` (expected search or exhaustive)"))),
        };
        let cfg = Self {
            data: raw.get("data").map(PathBuf::from),
            response: raw.get("response").cloned(),
            covariates: raw.get("covariates").map(|v| v.split(',').map(|s| s.trim().to_string()).collect()),
            family: raw["family"].parse()?,
            prior: raw["prior"].parse()?,
            knots: parse(&raw, "knots")?,
            grid: raw.get("grid").map(|v| parse_list("grid", v)).transpose()?,
            method,
            iterations: parse(&raw, "iterations")?,
            p_move: parse(&raw, "p-move")?,
            seed: parse(&raw, "seed")?,
            start: raw["start"].clone(),
            model: raw["model"].clone(),
            sampler: GlmSamplerOptions {
                samples: parse(&raw, "samples")?,
                thin: parse(&raw, "thin")?,
                burnin: parse(&raw, "burnin")?,
                iwls_steps: parse(&raw, "iwls-steps")?,
            },
            grid_points: parse(&raw, "grid-points")?,
            level: parse(&raw, "level")?,
            output: PathBuf::from(&raw["output"]),
            scenario: raw["scenario"].parse()?,
            n: parse(&raw, "n")?,
            sigma: parse(&raw, "sigma")?,
            p: parse(&raw, "p")?,
            raw,
        };
        if !(cfg.p_move > 0.0 && cfg.p_move < 1.0) {
            return Err(Error::Config("`p-move` must lie in (0, 1)".into()));
        }
        if !(cfg.level > 0.0 && cfg.level < 1.0) {
            return Err(Error::Config("`level` must lie in (0, 1)".into()));
        }
        if cfg.sampler.samples == 0 || cfg.sampler.thin == 0 || cfg.grid_points < 2 {
            return Err(Error::Config("`samples`, `thin` must be positive and `grid-points` at least 2".into()));
        }
        Ok(cfg)
    }

    pub fn from_flags(flags: &Flags) -> Result<Self> {
        let mut raw = match &flags.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        for (k, v) in flags.pairs() {
            if let Some(v) = v {
                raw.insert(k.to_string(), v.clone());
            }
        }
        Self::from_map(raw)
    }
}

/// Scoring backend for the configured family.
pub enum Backend {
    Gaussian(GaussianBackend<f64>),
    Glm(GlmBackend<f64>),
}

impl Backend {
    pub fn ml(&self) -> &dyn MarginalLikelihood<f64> {
        match self {
            Backend::Gaussian(b) => b,
            Backend::Glm(b) => b,
        }
    }

    pub fn design(&self) -> &AdditiveDesign<f64> {
        self.ml().design()
    }

    pub fn sample(&self, m: &ModelIndex, opts: GlmSamplerOptions, seed: u64) -> Result<PosteriorDraws<f64>> {
        match self {
            Backend::Gaussian(b) => sample_gaussian(b, m, opts.samples, seed),
            Backend::Glm(b) => sample_glm(b, m, opts, seed),
        }
    }
}

pub fn load_backend(cfg: &RunConfig) -> Result<Backend> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("`data` is required".into()))?;
    let response = cfg.response.as_ref().ok_or_else(|| Error::Config("`response` is required".into()))?;
    let ds = Dataset::read_csv(path)?;
    let y = ds.column(response)?.to_vec();
    let names: Vec<String> = match &cfg.covariates {
        Some(c) => c.clone(),
        None => ds.names.iter().filter(|n| *n != response).cloned().collect(),
    };
    if names.is_empty() {
        return Err(Error::Config("no covariates selected".into()));
    }
    if names.len() > 255 {
        return Err(Error::Config("at most 255 covariates are supported".into()));
    }
    let mut covs = Vec::with_capacity(names.len());
    for name in &names {
        let col = ds.column(name)?.to_vec();
        covs.push(RawCovariate::new(name.clone(), col)?);
    }
    let grid = cfg.grid.clone().map(DofGrid::new).transpose().map_err(|e| Error::Config(e.to_string()))?;
    match cfg.family {
        Family::Gaussian => {
            let design = AdditiveDesign::build(covs, cfg.knots, grid, None)?;
            Ok(Backend::Gaussian(GaussianBackend::new(y, design, cfg.prior)?))
        }
        family => Ok(Backend::Glm(GlmBackend::build(y, covs, cfg.knots, grid, family, cfg.prior)?)),
    }
}

fn parse_model(spec: &str, grid: &DofGrid<f64>, p: usize) -> Result<ModelIndex> {
    match spec {
        "null" => Ok(ModelIndex::null(p)),
        "full" => Ok(ModelIndex::full(p, grid)),
        s => {
            let dofs: Vec<f64> = parse_list("model", s)?;
            if dofs.len() != p {
                return Err(Error::Config(format!("model `{s}` has {} entries, expected {p}", dofs.len())));
            }
            ModelIndex::from_dofs(&dofs, grid).map_err(|e| Error::Config(e.to_string()))
        }
    }
}

/// Ranked model scores plus diagnostics of how they were obtained.
pub struct Selection {
    pub scores: Vec<ModelScore<f64>>,
    pub diagnostics: Value,
}

pub fn run_selection(cfg: &RunConfig, backend: &Backend) -> Result<Selection> {
    let ml = backend.ml();
    let design = ml.design();
    let cache = ScoreCache::new();
    let (scores, mut diag) = match cfg.method {
        Method::Exhaustive => {
            let pool = thread_pool()?;
            let scores = pool.install(|| exhaustive(ml, &cache, ENUMERATION_CAP))?;
            (scores, json!({ "method": "exhaustive", "threads": pool.current_num_threads() }))
        }
        Method::Search => {
            let start = parse_model(&cfg.start, &design.grid, design.p())?;
            let state: SearchState = mh_search(ml, &cache, start, cfg.iterations, cfg.p_move, cfg.seed)?;
            let scores = posterior_tables(&state, &cache, &design.grid)?;
            let diag = json!({
                "method": "search",
                "iterations": state.iterations,
                "move_proposals": state.proposals[0],
                "move_accepted": state.accepted[0],
                "swap_proposals": state.proposals[1],
                "swap_accepted": state.accepted[1],
                "failed_proposals": state.failed,
                "final_model": state.current.label(&design.grid),
            });
            (scores, diag)
        }
    };
    let failures: Vec<Value> = cache
        .failures()
        .into_iter()
        .map(|(m, e)| json!({ "model": m.label(&design.grid), "error": e }))
        .collect();
    diag["cache_size"] = json!(cache.len());
    diag["failures"] = json!(failures);
    diag["models_reported"] = json!(scores.len());
    diag["design_warnings"] = json!(design.warnings);
    Ok(Selection { scores, diagnostics: diag })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output).map_err(|e| Error::Config(format!("{}: {e}", cfg.output.display())))
}

fn meta_rows(metas: &[MetaModel<f64>], names: &[String], grid: &DofGrid<f64>, median: Option<&[bool]>) -> Vec<Vec<String>> {
    metas
        .iter()
        .enumerate()
        .map(|(r, m)| {
            let mut row = vec![(r + 1).to_string()];
            row.extend(m.pattern.iter().map(u8::to_string));
            row.push(m.label(names));
            row.push(format_float(m.post_prob));
            row.push(m.member_weights.len().to_string());
            row.push(m.member_weights[0].0.label(grid));
            if let Some(med) = median {
                let same = m.pattern.iter().zip(med).all(|(&k, &inc)| (k > 0) == inc);
                row.push(same.to_string());
            }
            row
        })
        .collect()
}

fn write_selection(cfg: &RunConfig, design: &AdditiveDesign<f64>, sel: &Selection) -> Result<()> {
    let names = design.names();
    let grid = &design.grid;
    let out = &cfg.output;

    let mut header: Vec<String> = vec!["rank".into(), "model".into()];
    header.extend(names.iter().map(|n| format!("d_{n}")));
    header.extend(["log_marglik", "log_prior", "post_prob", "freq_prob", "visit_count"].map(String::from));
    let rows: Vec<Vec<String>> = sel
        .scores
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let mut row = vec![(r + 1).to_string(), s.model.label(grid)];
            row.extend(s.model.dofs(grid).iter().map(|d| d.to_string()));
            row.extend([format_float(s.log_marglik), format_float(s.log_prior), format_float(s.post_prob), format_float(s.freq_prob)]);
            row.push(s.visit_count.to_string());
            row
        })
        .collect();
    write_rows(&out.join("models.csv"), &header, &rows)?;

    let inc = inclusion_summary(&sel.scores, false);
    let mut header = vec!["state".to_string()];
    header.extend(names.iter().cloned());
    let labels = ["not included", "linear", "smooth"];
    let rows: Vec<Vec<String>> = (0..3)
        .map(|k| {
            let mut row = vec![labels[k].to_string()];
            row.extend(inc.iter().map(|r| format_float(r[k])));
            row
        })
        .collect();
    write_rows(&out.join("inclusion.csv"), &header, &rows)?;

    let median = median_probability_meta(&inc);
    let mut header = vec!["rank".to_string()];
    header.extend(names.iter().cloned());
    header.extend(["covariates", "post_prob", "members", "top_member", "median_probability"].map(String::from));
    let metas = aggregate_meta(&sel.scores, MetaKey::Inclusion);
    write_rows(&out.join("meta_models.csv"), &header, &meta_rows(&metas, &names, grid, Some(&median)))?;
    header.pop();
    let shapes = aggregate_meta(&sel.scores, MetaKey::Shape);
    write_rows(&out.join("shape_models.csv"), &header, &meta_rows(&shapes, &names, grid, None))
}

fn run_json(cfg: &RunConfig, command: &str, diagnostics: Value, started: Instant) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.raw,
        "diagnostics": diagnostics,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    })
}

pub fn cmd_select(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let backend = load_backend(cfg)?;
    let sel = run_selection(cfg, &backend)?;
    prepare_output(cfg)?;
    write_selection(cfg, backend.design(), &sel)?;
    write_json(&cfg.output.join("run.json"), &run_json(cfg, "select", sel.diagnostics, started))
}

enum Target {
    Single(ModelIndex),
    Meta(MetaModel<f64>),
}

fn resolve_target(cfg: &RunConfig, backend: &Backend) -> Result<(Target, Value)> {
    let design = backend.design();
    match cfg.model.as_str() {
        "map" | "meta" => {
            let sel = run_selection(cfg, backend)?;
            let top = sel.scores.first().ok_or_else(|| Error::NumericalFailure("no model was scored".into()))?;
            if !top.log_marglik.is_finite() {
                return Err(Error::NumericalFailure("every scored model failed".into()));
            }
            if cfg.model == "map" {
                Ok((Target::Single(top.model.clone()), sel.diagnostics))
            } else {
                let metas = aggregate_meta(&sel.scores, MetaKey::Inclusion);
                Ok((Target::Meta(metas.into_iter().next().expect("non-empty scores")), sel.diagnostics))
            }
        }
        spec => Ok((Target::Single(parse_model(spec, &design.grid, design.p())?), json!({}))),
    }
}

fn curve_samples(backend: &Backend, cfg: &RunConfig, m: &ModelIndex, count: usize, seed: u64) -> Result<(CurveSamples<f64>, PosteriorDraws<f64>)> {
    let design = backend.design();
    let opts = GlmSamplerOptions { samples: count, ..cfg.sampler };
    let draws = backend.sample(m, opts, seed)?;
    let grids = (0..design.p())
        .map(|j| design.grid_block(j, &equispaced_grid(&design.covariates[j], cfg.grid_points)))
        .collect::<Result<Vec<_>>>()?;
    Ok((curves(&draws, &grids)?, draws))
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let backend = load_backend(cfg)?;
    let design = backend.design();
    let (target, sel_diag) = resolve_target(cfg, &backend)?;
    let (cs, included, mut diag) = match &target {
        Target::Single(m) => {
            let (cs, draws) = curve_samples(&backend, cfg, m, cfg.sampler.samples, model_seed(cfg.seed, m))?;
            let diag = json!({
                "model": m.label(&design.grid),
                "samples": draws.len(),
                "acceptance_rate": draws.acceptance_rate,
                "g_acceptance_rate": draws.g_acceptance_rate,
                "failed_proposals": draws.failed_proposals,
            });
            let inc: Vec<bool> = m.indices().iter().map(|&i| i > 0).collect();
            (cs, inc, diag)
        }
        Target::Meta(meta) => {
            let cs = model_averaged_curves(meta, cfg.sampler.samples, cfg.seed, |m, count, seed| {
                curve_samples(&backend, cfg, m, count, seed).map(|r| r.0)
            })?;
            let diag = json!({
                "meta_model": meta.label(&design.names()),
                "meta_post_prob": meta.post_prob,
                "members": meta.member_weights.len(),
            });
            let inc: Vec<bool> = meta.pattern.iter().map(|&k| k > 0).collect();
            (cs, inc, diag)
        }
    };
    prepare_output(cfg)?;
    let names = design.names();
    let header: Vec<String> = ["grid", "mean", "ptwise_lo", "ptwise_hi", "simul_lo", "simul_hi"].map(String::from).to_vec();
    let mut files = Vec::new();
    for c in &cs.curves {
        if !included[c.covariate] {
            continue;
        }
        let b = credible_bands(&c.samples, cfg.level)?;
        let rows: Vec<Vec<String>> = (0..c.grid.len())
            .map(|k| {
                [c.grid[k], b.mean[k], b.pointwise_lo[k], b.pointwise_hi[k], b.simultaneous_lo[k], b.simultaneous_hi[k]]
                    .iter()
                    .map(|&v| format_float(v))
                    .collect()
            })
            .collect();
        let file = format!("curves_{}.csv", names[c.covariate]);
        write_rows(&cfg.output.join(&file), &header, &rows)?;
        files.push(file);
    }
    diag["curve_files"] = json!(files);
    diag["selection"] = sel_diag;
    write_json(&cfg.output.join("run.json"), &run_json(cfg, "fit", diag, started))
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let backend = load_backend(cfg)?;
    let design = backend.design();
    let (target, sel_diag) = resolve_target(cfg, &backend)?;
    let Target::Single(m) = target else {
        return Err(Error::Config("`optimize` needs `model` = map or explicit degrees of freedom".into()));
    };
    let opt = optimize_dof(backend.ml(), &m)?;
    prepare_output(cfg)?;
    let start = m.dofs(&design.grid);
    let rows: Vec<Vec<String>> = design
        .names()
        .into_iter()
        .enumerate()
        .map(|(j, n)| vec![n, start[j].to_string(), format_float(opt.dofs[j])])
        .collect();
    write_rows(&cfg.output.join("optimize.csv"), &["covariate", "start_dof", "optimized_dof"].map(String::from), &rows)?;
    let diag = json!({
        "model": m.label(&design.grid),
        "start_log_marglik": opt.start_log_marglik,
        "optimized_log_marglik": opt.log_marglik,
        "cycles": opt.cycles,
        "evaluations": opt.evaluations,
        "selection": sel_diag,
    });
    write_json(&cfg.output.join("run.json"), &run_json(cfg, "optimize", diag, started))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let sc = Scenario { kind: cfg.scenario, n: cfg.n, seed: cfg.seed, sigma: cfg.sigma, null_covariates: cfg.p };
    let sim = generate(&sc)?;
    prepare_output(cfg)?;
    sim.data.write_csv(&cfg.output.join("data.csv"))?;
    let rows: Vec<Vec<String>> = sim
        .truth
        .iter()
        .enumerate()
        .map(|(j, t)| vec![sim.data.names[j].clone(), t.label().to_string()])
        .collect();
    write_rows(&cfg.output.join("truth.csv"), &["covariate", "role"].map(String::from), &rows)?;
    let diag = json!({ "n": sc.n, "p": sc.p(), "scenario": sc.kind.to_string() });
    write_json(&cfg.output.join("run.json"), &run_json(cfg, "simulate", diag, started))
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(f) => cmd_select(&RunConfig::from_flags(&f)?),
        Command::Fit(f) => cmd_fit(&RunConfig::from_flags(&f)?),
        Command::Optimize(f) => cmd_optimize(&RunConfig::from_flags(&f)?),
        Command::Simulate(f) => cmd_simulate(&RunConfig::from_flags(&f)?),
    }
}

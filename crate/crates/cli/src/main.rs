//! `sgmoe` command-line tool.
//!
//! Every subcommand writes its artifacts into `--out` (default: the current directory)
//! together with a `manifest.json` recording the arguments, the resolved
//! configuration and digests of all inputs and outputs. `sgmoe replay` reruns a
//! manifest into a scratch directory and checks that every output is byte-identical.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 numerical failure.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use sgmoe::datagen::{sample, truth_by_name, GenConfig};
use sgmoe::dendrogram::build_path;
use sgmoe::estimation::{fit_with_config, FitConfig};
use sgmoe::experiments::presets::{preset, Preset};
use sgmoe::experiments::{run_rate_study, run_selection_study, RateStudyConfig, RunOptions, SelectionStudyConfig};
use sgmoe::io::{self, ResponseColumn, RunManifest, MANIFEST_FILE};
use sgmoe::metrics::{loss, LossKind};
use sgmoe::selection::{criterion_sweep, dsc_select, EpsilonRule, Method, SelectionReport};
use sgmoe::{Data, Error, Fit, Model, Result};

#[derive(Parser, Debug)]
#[command(name = "sgmoe", version, about = "Softmax-gated Gaussian mixture of experts: fitting, dendrograms and order selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset from a ground-truth model.
    Simulate(SimulateArgs),
    /// Fit a mixture of experts to a CSV dataset by EM.
    Fit(FitArgs),
    /// Build the merge dendrogram of a fitted model.
    Dendrogram(DendrogramArgs),
    /// Choose the number of experts with DSC and/or AIC, BIC, ICL.
    Select(SelectArgs),
    /// Voronoi losses between a model and a reference.
    Metrics(MetricsArgs),
    /// Loss-versus-sample-size study.
    RateStudy(StudyArgs),
    /// Order-selection frequency study.
    SelectStudy(StudyArgs),
    /// Rerun a manifest and check that its outputs are reproduced byte for byte.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Registry name (g0_2, g0_3) or path to a model JSON file.
    #[arg(long, default_value = "g0_2")]
    truth: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    x_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    x_hi: f64,
    /// Laplace(0, 1) contamination probability.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Default)]
struct EmArgs {
    /// JSON file with EM settings; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// kmeans, perturbed or random.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    newton_max_iter: Option<usize>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    sigma_floor: Option<f64>,
    #[arg(long)]
    perturb_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl EmArgs {
    fn resolve(&self, k: Option<usize>) -> Result<FitConfig> {
        let mut cfg: FitConfig = match &self.config {
            Some(p) => io::load_json(p, "fit-config")?,
            None => FitConfig::default(),
        };
        if let Some(k) = k {
            cfg.k = k;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(tol, max_iter, newton_max_iter, newton_tol, ridge, sigma_floor, perturb_scale, seed);
        if let Some(s) = &self.init {
            cfg.init = s.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Response column name; default `y` if present, else the last column.
    #[arg(long)]
    response: Option<String>,
}

impl DataArgs {
    fn load(&self, inputs: &mut Inputs) -> Result<Data> {
        let col = self.response.clone().map_or(ResponseColumn::Auto, ResponseColumn::Named);
        inputs.add(&self.data)?;
        io::load_dataset_csv(&self.data, &col)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of experts.
    #[arg(long)]
    k: Option<usize>,
    /// Reference model for `--init perturbed`: registry name or model JSON.
    #[arg(long)]
    truth: Option<String>,
    #[command(flatten)]
    em: EmArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct DendrogramArgs {
    /// Model or fit JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Optional dataset for the average log-likelihood column.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Over-fitted model (or fit) JSON for DSC; fitted from the data at `--kmax` if absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// dsc, aic, bic, icl or all.
    #[arg(long, default_value = "all")]
    method: String,
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    /// `logn` or a positive number.
    #[arg(long, default_value = "logn")]
    epsilon: String,
    #[command(flatten)]
    em: EmArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Model or fit JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Reference model: registry name or model JSON file.
    #[arg(long)]
    truth: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Named configuration (fig3a, fig3b, fig3c, fig4, fig5 and their -desk variants).
    #[arg(long)]
    preset: Option<String>,
    /// Study configuration JSON; applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (`SGMOE_THREADS` overrides).
    #[arg(long)]
    threads: Option<usize>,
    /// Replication log; an interrupted study resumes from it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Manifest written by an earlier run.
    manifest: PathBuf,
    /// Where to write the rerun's outputs (default: a fresh temporary directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Input files of a run and their digests.
#[derive(Default)]
struct Inputs(BTreeMap<String, String>);

impl Inputs {
    fn add(&mut self, path: &Path) -> Result<()> {
        let digest = io::file_digest(path).map_err(|e| match e {
            Error::Io(io) => Error::InvalidInput(format!("cannot read {}: {io}", path.display())),
            other => other,
        })?;
        self.0.insert(path.display().to_string(), digest);
        Ok(())
    }
}

/// What a subcommand produced.
struct Outcome {
    config: Value,
    seed: Option<u64>,
    outputs: Vec<String>,
}

struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn json<P: Serialize>(&mut self, name: &str, format: &str, payload: &P) -> Result<()> {
        let p = self.path(name);
        io::save_json(&p, format, payload)
    }
}

fn resolve_truth(spec: &str, inputs: &mut Inputs) -> Result<Model> {
    let path = Path::new(spec);
    if path.exists() {
        inputs.add(path)?;
        return load_model(path);
    }
    truth_by_name(spec)
}

/// Loads a model document, or the model inside a fit document.
fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    if value.get("model").is_some() {
        let fit: Fit = io::from_stamped_json(&text, "fit")?;
        Ok(fit.model)
    } else {
        io::from_stamped_json(&text, "model")
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn simulate(a: &SimulateArgs, inputs: &mut Inputs) -> Result<Outcome> {
    let truth = resolve_truth(&a.truth, inputs)?;
    let cfg = GenConfig {
        n: a.n,
        x_lo: a.x_lo,
        x_hi: a.x_hi,
        contamination_eps: a.eps,
        seed: a.seed,
    };
    let data = sample(&truth, &cfg)?;
    let mut out = OutDir::new(&a.out.out)?;
    let csv = out.path("data.csv");
    io::write_dataset_csv(&csv, &data)?;
    let sidecar = json!({ "truth": truth, "generator": cfg });
    out.json("data.json", "simulation", &sidecar)?;
    Ok(Outcome {
        config: sidecar,
        seed: Some(a.seed),
        outputs: out.written,
    })
}

fn fit(a: &FitArgs, inputs: &mut Inputs) -> Result<Outcome> {
    let data = a.data.load(inputs)?;
    let cfg = a.em.resolve(a.k)?;
    let truth = a.truth.as_deref().map(|t| resolve_truth(t, inputs)).transpose()?;
    let result = fit_with_config(&data, &cfg, truth.as_ref())?;
    let mut out = OutDir::new(&a.out.out)?;
    out.json("fit.json", "fit", &result)?;
    println!(
        "fitted {} experts: avg log-likelihood {:.6}, {} iterations, converged {}",
        cfg.k,
        result.loglik_trace.last().copied().unwrap_or(f64::NAN),
        result.iterations,
        result.converged
    );
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        outputs: out.written,
    })
}

fn dendrogram(a: &DendrogramArgs, inputs: &mut Inputs) -> Result<Outcome> {
    inputs.add(&a.model)?;
    let model = load_model(&a.model)?;
    let data = match &a.data {
        Some(p) => Some(
            DataArgs {
                data: p.clone(),
                response: a.response.clone(),
            }
            .load(inputs)?,
        ),
        None => None,
    };
    let tree = build_path(&model);
    let mut out = OutDir::new(&a.out.out)?;
    out.json("dendrogram.json", "dendrogram", &tree)?;
    let mut table = String::from("level,height,avg_loglik\n");
    for kappa in (1..=tree.top()).rev() {
        let h = tree.height(kappa).map(|h| h.to_string()).unwrap_or_default();
        let ll = match &data {
            Some(d) => tree.level(kappa).expect("level").avg_log_likelihood(d)?.to_string(),
            None => String::new(),
        };
        table.push_str(&format!("{kappa},{h},{ll}\n"));
    }
    std::fs::write(out.path("dendrogram.csv"), table)?;
    Ok(Outcome {
        config: json!({ "atoms": model.len(), "with_data": data.is_some() }),
        seed: None,
        outputs: out.written,
    })
}

fn select(a: &SelectArgs, inputs: &mut Inputs) -> Result<Outcome> {
    let data = a.data.load(inputs)?;
    let methods: Vec<Method> = if a.method.eq_ignore_ascii_case("all") {
        Method::ALL.to_vec()
    } else {
        vec![a.method.parse()?]
    };
    let epsilon: EpsilonRule = a.epsilon.parse()?;
    let cfg = a.em.resolve(Some(a.kmax))?;
    let mut reports: Vec<SelectionReport> = Vec::new();
    for &m in &methods {
        let report = if m == Method::Dsc {
            let model = match &a.model {
                Some(p) => {
                    inputs.add(p)?;
                    load_model(p)?
                }
                None => fit_with_config(&data, &cfg, None)?.model,
            };
            dsc_select(&build_path(&model), &data, epsilon.resolve(data.len())?)?
        } else {
            criterion_sweep(&data, a.kmax, &cfg, m)?
        };
        reports.push(report);
    }
    let mut out = OutDir::new(&a.out.out)?;
    out.json("selection.json", "selection", &json!({ "reports": reports }))?;
    print_selection_table(&reports);
    Ok(Outcome {
        config: json!({ "methods": methods, "kmax": a.kmax, "epsilon": epsilon, "em": cfg }),
        seed: Some(cfg.seed),
        outputs: out.written,
    })
}

fn print_selection_table(reports: &[SelectionReport]) {
    let levels: Vec<usize> = {
        let mut v: Vec<usize> = reports.iter().flat_map(|r| r.per_level.keys().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    print!("{:<6}", "method");
    for k in &levels {
        print!(" {:>14}", format!("K={k}"));
    }
    println!(" {:>7}", "chosen");
    for r in reports {
        print!("{:<6}", r.method.name());
        for k in &levels {
            match r.per_level.get(k) {
                Some(v) => print!(" {v:>14.4}"),
                None => print!(" {:>14}", "-"),
            }
        }
        println!(" {:>7}", r.chosen);
    }
}

fn metrics(a: &MetricsArgs, inputs: &mut Inputs) -> Result<Outcome> {
    inputs.add(&a.model)?;
    let model = load_model(&a.model)?;
    let truth = resolve_truth(&a.truth, inputs)?;
    let mut values = serde_json::Map::new();
    let mut t0 = serde_json::Map::new();
    let mut t1 = serde_json::Map::new();
    let mut cells = Value::Null;
    for kind in [LossKind::Vde, LossKind::Vdo, LossKind::Vdfra] {
        let r = loss(kind, &model, &truth)?;
        values.insert(kind.name().into(), json!(r.value));
        t0.insert(kind.name().into(), json!(r.t0));
        t1.insert(kind.name().into(), json!(r.t1));
        cells = serde_json::to_value(&r.cells)?;
    }
    let mut report = values;
    report.insert("cells".into(), cells);
    report.insert("t0".into(), Value::Object(t0));
    report.insert("t1".into(), Value::Object(t1));
    let report = Value::Object(report);
    // A closed pipe (e.g. `| head`) is not an error worth aborting over.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&report)?);
    let mut out = OutDir::new(&a.out.out)?;
    out.json("metrics.json", "metrics", &report)?;
    Ok(Outcome {
        config: json!({ "truth": truth }),
        seed: None,
        outputs: out.written,
    })
}

/// Starts from the preset (or the defaults) and overlays the top-level fields of `--config`.
fn study_config<C: serde::de::DeserializeOwned + Serialize + Default>(
    a: &StudyArgs,
    inputs: &mut Inputs,
    from_preset: impl Fn(Preset) -> Option<C>,
    format: &str,
) -> Result<C> {
    let cfg = match &a.preset {
        Some(name) => from_preset(preset(name)?)
            .ok_or_else(|| Error::InvalidInput(format!("preset {name:?} is for the other study")))?,
        None => C::default(),
    };
    let Some(p) = &a.config else { return Ok(cfg) };
    inputs.add(p)?;
    let overlay: Value = io::load_json(p, format)?;
    let Value::Object(fields) = overlay else {
        return Err(Error::InvalidInput(format!("{} must hold a JSON object", p.display())));
    };
    let mut base = serde_json::to_value(&cfg)?;
    if let Value::Object(map) = &mut base {
        map.extend(fields);
    }
    Ok(serde_json::from_value(base)?)
}

fn rate_study(a: &StudyArgs, inputs: &mut Inputs) -> Result<Outcome> {
    let mut cfg: RateStudyConfig = study_config(
        a,
        inputs,
        |p| match p {
            Preset::Rate(c) => Some(c),
            _ => None,
        },
        "rate-study-config",
    )?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    let result = run_rate_study(&cfg, &run_options(a))?;
    let mut out = OutDir::new(&a.out.out)?;
    out.json("rate_study.json", "rate-study", &result)?;
    io::write_rate_csv(&out.path("rate_study.csv"), &result)?;
    for c in &result.curves {
        io::write_curve_dat(&out.path(&format!("curve_{}.dat", c.name)), c)?;
        match c.slope {
            Some(s) => println!("{:<14} slope {s:.4}", c.name),
            None => println!("{:<14} slope n/a", c.name),
        }
    }
    println!("{} of {} replications failed", result.skipped, result.total);
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        outputs: out.written,
    })
}

fn select_study(a: &StudyArgs, inputs: &mut Inputs) -> Result<Outcome> {
    let mut cfg: SelectionStudyConfig = study_config(
        a,
        inputs,
        |p| match p {
            Preset::Selection(c) => Some(c),
            _ => None,
        },
        "selection-study-config",
    )?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    let result = run_selection_study(&cfg, &run_options(a))?;
    let mut out = OutDir::new(&a.out.out)?;
    out.json("selection_study.json", "selection-study", &result)?;
    io::write_selection_csv(&out.path("selection_study.csv"), &result)?;
    println!("{:>8} {:<6} {:>9} {:>11}", "N", "method", "correct", "mean K");
    for r in &result.rows {
        println!("{:>8} {:<6} {:>9.3} {:>11.3}", r.n, r.method.name(), r.proportion_correct, r.mean_chosen);
    }
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        seed: Some(cfg.seed),
        outputs: out.written,
    })
}

fn run_options(a: &StudyArgs) -> RunOptions {
    RunOptions {
        threads: a.threads,
        checkpoint: a.checkpoint.clone(),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Dendrogram(_) => "dendrogram",
        Command::Select(_) => "select",
        Command::Metrics(_) => "metrics",
        Command::RateStudy(_) => "rate-study",
        Command::SelectStudy(_) => "select-study",
        Command::Replay(_) => "replay",
    }
}

fn out_dir(c: &Command) -> Option<&Path> {
    match c {
        Command::Simulate(a) => Some(&a.out.out),
        Command::Fit(a) => Some(&a.out.out),
        Command::Dendrogram(a) => Some(&a.out.out),
        Command::Select(a) => Some(&a.out.out),
        Command::Metrics(a) => Some(&a.out.out),
        Command::RateStudy(a) | Command::SelectStudy(a) => Some(&a.out.out),
        Command::Replay(_) => None,
    }
}

/// Runs a workflow subcommand and writes its manifest.
fn execute(command: &Command, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let mut inputs = Inputs::default();
    let outcome = match command {
        Command::Simulate(a) => simulate(a, &mut inputs)?,
        Command::Fit(a) => fit(a, &mut inputs)?,
        Command::Dendrogram(a) => dendrogram(a, &mut inputs)?,
        Command::Select(a) => select(a, &mut inputs)?,
        Command::Metrics(a) => metrics(a, &mut inputs)?,
        Command::RateStudy(a) => rate_study(a, &mut inputs)?,
        Command::SelectStudy(a) => select_study(a, &mut inputs)?,
        Command::Replay(a) => return replay(a),
    };
    let dir = out_dir(command).expect("workflow has an output directory");
    let mut outputs = BTreeMap::new();
    for name in outcome.outputs {
        outputs.insert(name.clone(), io::file_digest(&dir.join(&name))?);
    }
    let manifest = RunManifest {
        command: command_name(command).into(),
        argv: argv.to_vec(),
        config: outcome.config,
        seed: outcome.seed,
        tool_version: format!("v{}", env!("CARGO_PKG_VERSION")),
        started,
        finished: unix_now(),
        inputs: inputs.0,
        outputs,
    };
    io::save_json(&dir.join(MANIFEST_FILE), "manifest", &manifest)
}

/// Replaces the value of `--out` (or appends one) in a recorded argument list.
fn redirect_out(argv: &[String], dir: &Path) -> Vec<String> {
    let target = dir.display().to_string();
    let mut out = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--out" {
            out.push(a.clone());
            out.push(target.clone());
            replaced = true;
            i += 2;
            continue;
        }
        if a.starts_with("--out=") {
            out.push(format!("--out={target}"));
            replaced = true;
        } else {
            out.push(a.clone());
        }
        i += 1;
    }
    if !replaced {
        out.push("--out".into());
        out.push(target);
    }
    out
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let manifest: RunManifest = io::load_json(&a.manifest, "manifest")?;
    for (path, digest) in &manifest.inputs {
        let now = io::file_digest(Path::new(path))?;
        if &now != digest {
            return Err(Error::InvalidInput(format!("input {path} changed since the recorded run")));
        }
    }
    let (dir, scratch) = match &a.out {
        Some(d) => (d.clone(), false),
        None => {
            let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
            (std::env::temp_dir().join(format!("sgmoe-replay-{}-{nanos}", std::process::id())), true)
        }
    };
    let argv = redirect_out(&manifest.argv, &dir);
    let cli = Cli::try_parse_from(std::iter::once("sgmoe".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Error::InvalidInput(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::InvalidInput("cannot replay a replay".into()));
    }
    execute(&cli.command, &argv)?;
    let mut mismatched = Vec::new();
    for (name, digest) in &manifest.outputs {
        let now = io::file_digest(&dir.join(name))?;
        let same = &now == digest;
        println!("{} {name} {now}", if same { "ok      " } else { "MISMATCH" });
        if !same {
            mismatched.push(name.clone());
        }
    }
    if scratch {
        let _ = std::fs::remove_dir_all(&dir);
    }
    if mismatched.is_empty() {
        println!("all {} outputs reproduced", manifest.outputs.len());
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("outputs differ: {}", mismatched.join(", "))))
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

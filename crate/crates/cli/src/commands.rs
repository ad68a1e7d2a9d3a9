use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use pdecast_core::math::SeededRng;
use pdecast_core::network::{load_checkpoint, save_checkpoint, ForecastNet};
use pdecast_core::pde::{build_dataset, load_dataset, save_dataset, DatasetSpec, Equation};
use pdecast_core::stability::{curve_csv, error_curve, ForecastMode};
use pdecast_core::train::{self, RunConfig, TrainHistory};
use pdecast_core::verify::{Suite, SuiteReport};
use pdecast_core::{write_atomic, Error};

use crate::manifest::{beside, Manifest};
use crate::Failure;

type CmdResult = Result<(), Failure>;

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Args)]
pub struct GenDataArgs {
    #[arg(long)]
    equation: Equation,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    /// Burgers viscosity.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    forecast: Option<usize>,
    /// Burgers integrator steps per dt.
    #[arg(long)]
    substeps: Option<usize>,
    /// Highest Fourier mode in the initial conditions.
    #[arg(long)]
    max_mode: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn gen_data(a: GenDataArgs) -> CmdResult {
    let mut spec = DatasetSpec::for_equation(a.equation);
    spec.dt = a.dt.unwrap_or(spec.dt);
    spec.grid_size = a.grid.unwrap_or(spec.grid_size);
    spec.viscosity = a.nu.unwrap_or(spec.viscosity);
    spec.n_train = a.train.unwrap_or(spec.n_train);
    spec.n_val = a.val.unwrap_or(spec.n_val);
    spec.n_forecast = a.forecast.unwrap_or(spec.n_forecast);
    spec.substeps = a.substeps.unwrap_or(spec.substeps);
    spec.initial.max_mode = a.max_mode.unwrap_or(spec.initial.max_mode);

    let splits = build_dataset(&spec, &SeededRng::new(a.seed))?;
    create_dir(&a.out)?;
    let mut m = Manifest::new("gen-data");
    m.set("equation", spec.equation.as_str());
    m.set("dt", spec.dt);
    m.set("grid_size", spec.grid_size);
    if spec.equation == Equation::Burgers {
        m.set("viscosity", spec.viscosity);
        m.set("substeps", spec.substeps);
    }
    m.set("train", spec.n_train);
    m.set("val", spec.n_val);
    m.set("forecast", spec.n_forecast);
    m.set("max_mode", spec.initial.max_mode);
    m.set("rng", SeededRng::ALGORITHM);
    m.seed(a.seed);
    for d in &splits {
        let path = a.out.join(format!("{}.txt", d.split));
        save_dataset(d, &path)?;
        m.output(&path);
    }
    m.write(&a.out.join("gen-data.manifest.json"), "ok")?;
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// `key = value` run file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for model.ckpt and history.csv.
    #[arg(long)]
    out: PathBuf,
}

pub fn train(a: TrainArgs) -> CmdResult {
    let rc = RunConfig::load(&a.config)?;
    let train_set = load_dataset(&rc.train_data)?;
    let val_set = load_dataset(&rc.val_data)?;
    if train_set.equation != val_set.equation || train_set.grid_size != val_set.grid_size {
        return Err(Failure::Usage("train and val datasets disagree on equation or grid".into()));
    }
    let (cfg, net_cfg) = rc.resolve(train_set.equation, train_set.grid_size)?;
    let mut net = ForecastNet::init(&net_cfg)?;

    let mut m = Manifest::new("train");
    m.input(&a.config);
    m.input(&rc.train_data);
    m.input(&rc.val_data);
    m.seed(cfg.seed);
    m.set("kind", net_cfg.kind.as_str());
    m.set("equation", train_set.equation.as_str());
    m.set("grid_size", net_cfg.grid_size);
    m.set("latent_dim", net_cfg.latent_dim);
    m.set("blocks", net_cfg.blocks);
    m.set("epochs", cfg.epochs);
    m.set("initial_lr", cfg.initial_lr);
    m.set("decay", cfg.decay);
    m.set("step_size", cfg.step_size);
    m.set("batch_size", cfg.batch_size);
    m.set("xavier_gain", cfg.xavier_gain);
    m.set("delta", cfg.delta);
    m.set("optimizer", cfg.optimizer.as_str());
    m.set("params", net.param_count());

    let mut history = TrainHistory::default();
    let outcome = train::train_into(&mut net, &train_set, &val_set, &cfg, &mut history);
    create_dir(&a.out)?;
    let hist_path = a.out.join("history.csv");
    write_atomic(&hist_path, history.to_csv().as_bytes())?;
    m.output(&hist_path);
    if let Some(best) = history.best_epoch {
        m.set("best_epoch", best);
        m.set("best_val_mse", history.records[best].val_mse);
    }
    let manifest_path = a.out.join("train.manifest.json");
    if let Err(e) = outcome {
        m.write(&manifest_path, "diverged")?;
        return Err(e.into());
    }
    let ckpt = a.out.join("model.ckpt");
    save_checkpoint(&net, &ckpt)?;
    m.output(&ckpt);
    let (mse, rel) = train::evaluate(&net, &val_set)?;
    m.set("val_mse", mse);
    m.set("val_relative_error_pct", rel);
    m.write(&manifest_path, "ok")?;
    Ok(())
}

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    model: PathBuf,
    /// Forecast split written by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: usize,
    /// latent or autoregressive; defaults to latent for implicit models.
    #[arg(long)]
    mode: Option<ForecastMode>,
    /// Burgers reference integrator steps per dt.
    #[arg(long, default_value_t = 16)]
    substeps: usize,
    /// CSV destination.
    #[arg(long)]
    out: PathBuf,
}

pub fn forecast(a: ForecastArgs) -> CmdResult {
    let net = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    if data.grid_size != net.grid_size() {
        return Err(Failure::Usage(format!(
            "model expects {} grid points, data has {}",
            net.grid_size(),
            data.grid_size
        )));
    }
    let mode = a.mode.unwrap_or_else(|| ForecastMode::default_for(&net));
    let oracle = DatasetSpec::matching(&data, a.substeps);
    let curve = error_curve(&net, &data, a.steps, &oracle, mode)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(&a.out, curve_csv(&curve, net.kind().as_str()).as_bytes())?;

    let mut m = Manifest::new("forecast");
    m.input(&a.model);
    m.input(&a.data);
    m.output(&a.out);
    m.set("steps", a.steps);
    m.set("mode", mode.as_str());
    m.set("kind", net.kind().as_str());
    m.set("substeps", a.substeps);
    m.seed(net.seed());
    if let Some(first) = curve.iter().find(|p| !p.mse.is_finite()) {
        m.set("first_diverged_step", first.step);
    }
    m.write(&beside(&a.out), "ok")?;
    Ok(())
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let net = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    let (mse, rel) = train::evaluate(&net, &data)?;
    println!("mse={mse:e} relative_error_pct={rel:e} samples={}", data.len());
    Ok(())
}

#[derive(Args)]
pub struct VerifyArgs {
    /// theorem, witness, lemma, sandwich, gradcheck, solvers or all.
    #[arg(long)]
    suite: String,
    /// Case count; each suite has its own default.
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report file; one line per suite.
    #[arg(long, default_value = "verify-report.txt")]
    report: PathBuf,
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![a.suite.parse::<Suite>().map_err(|e: Error| Failure::Usage(e.to_string()))?]
    };
    let reports: Vec<SuiteReport> = suites
        .iter()
        .map(|s| s.run(a.cases.unwrap_or_else(|| s.default_cases()), a.seed))
        .collect::<Result<_, _>>()?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.line());
        text.push('\n');
    }
    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_atomic(&a.report, text.as_bytes())?;
    print!("{text}");

    let mut m = Manifest::new("verify");
    m.set("suite", a.suite.as_str());
    if let Some(c) = a.cases {
        m.set("cases", c);
    }
    m.seed(a.seed);
    m.output(&a.report);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.as_str()).collect();
    m.write(&beside(&a.report), if failed.is_empty() { "pass" } else { "fail" })?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("failing suites: {}", failed.join(", "))))
    }
}

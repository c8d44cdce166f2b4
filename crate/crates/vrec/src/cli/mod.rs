//! Command-line entry points: gen, train, eval, recommend, assign, and
//! the line-delimited serve loop. Every command records its resolved
//! configuration next to its outputs.

pub mod io;

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::assignment::{
    brute_force_assign, build_cost_matrix, greedy_assign, kuhn_munkres, render_table as render_assignment,
    AssignMode, Assignment, CostMatrix,
};
use crate::domain::{RouteTrip, VehicleSpec};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::model::checkpoint::FORMAT_VERSION;
use crate::model::{
    load_checkpoint, predict_dataset, predict_trip, save_checkpoint, train, ModelConfig,
    ModelParams, TrainConfig,
};
use crate::recommender::{recommend_one, render_table as render_recommendation, RankedCandidate};
use crate::synthgen::{generate_dataset, SynthConfig};
use crate::tco::CostConfig;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vrec", about = "Vehicle-route energy recommendation engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    Gen(GenArgs),
    /// Train the energy model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Rank candidate vehicles for one trip.
    Recommend(RecommendArgs),
    /// Optimally assign vehicles to trips.
    Assign(AssignArgs),
    /// Serve line-delimited requests against a fixed checkpoint.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub trips: usize,
    #[arg(long, default_value_t = 400)]
    pub links: usize,
    #[arg(long, default_value_t = 6)]
    pub vehicles_per_powertrain: usize,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TOML file with a full training configuration;
    /// command-line flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimizer: sgd or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// LSTM hidden width override.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Embedding dimension override.
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON file holding one route trip.
    #[arg(long)]
    pub trip: PathBuf,
    /// CSV vehicle catalog of candidates.
    #[arg(long)]
    pub vehicles: PathBuf,
    /// Cost table TOML; bundled defaults when omitted.
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    /// Raw cost matrix JSON ({n_vehicles, n_trips, data}); mutually
    /// exclusive with --trips/--vehicles.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, requires = "vehicles")]
    pub trips: Option<PathBuf>,
    #[arg(long, requires = "trips")]
    pub vehicles: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// per-mile or per-trip cost entries.
    #[arg(long, default_value = "per-mile")]
    pub mode: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub cost: Option<PathBuf>,
    /// Optional TCP listen address (e.g. 127.0.0.1:7878); standard
    /// streams when omitted.
    #[arg(long)]
    pub listen: Option<String>,
}

fn load_cost(path: &Option<PathBuf>) -> Result<CostConfig> {
    match path {
        Some(p) => CostConfig::from_toml_file(p),
        None => Ok(CostConfig::bundled_default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = std::io::BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_links: args.links,
        n_vehicles_per_powertrain: args.vehicles_per_powertrain,
        trip_count: args.trips,
        ..SynthConfig::default()
    };
    let dataset = generate_dataset(&cfg)?;
    io::write_dataset(&args.out, &dataset)?;
    io::write_resolved_config(&args.out, &cfg)?;
    println!("{}", dataset_summary(&dataset));
    Ok(())
}

/// Per-powertrain dataset summary table.
pub fn dataset_summary(dataset: &crate::synthgen::Dataset) -> String {
    use crate::domain::Powertrain;
    let mut out = String::from(
        "powertrain  trips    mean_links  mean_fuel_g  mean_electric_wh\n",
    );
    for p in Powertrain::ALL {
        let subset: Vec<_> =
            dataset.trips.iter().filter(|t| t.vehicle.powertrain == p).collect();
        if subset.is_empty() {
            continue;
        }
        let n = subset.len() as f64;
        let links = subset.iter().map(|t| t.route.len() as f64).sum::<f64>() / n;
        let fuel = subset.iter().map(|t| t.trip_total().fuel_g).sum::<f64>() / n;
        let elec = subset.iter().map(|t| t.trip_total().electric_wh).sum::<f64>() / n;
        out.push_str(&format!(
            "{:<11} {:<8} {:<11.1} {:<12.1} {:.1}\n",
            p.name(),
            subset.len(),
            links,
            fuel,
            elec
        ));
    }
    out
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    dataset: &'a Path,
    train: &'a TrainConfig,
    model: &'a ModelConfig,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let data = io::read_dataset(&args.dataset)?;
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str::<TrainConfig>(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(opt) = &args.optimizer {
        cfg.optimizer = match opt.as_str() {
            "sgd" => crate::model::Optimizer::Sgd { momentum: 0.9 },
            "adam" => crate::model::Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            other => {
                return Err(Error::Config(format!(
                    "unknown optimizer '{other}' (expected sgd or adam)"
                )))
            }
        };
    }
    let mut model_cfg = ModelConfig {
        n_vehicles: data.vehicles.len(),
        n_links: data.network.links.len(),
        ..ModelConfig::default()
    };
    if let Some(h) = args.hidden {
        model_cfg.hidden = h;
    }
    if let Some(e) = args.embed_dim {
        model_cfg.embed_dim = e;
    }
    std::fs::create_dir_all(&args.out)?;
    io::write_resolved_config(
        &args.out,
        &ResolvedTrain { dataset: &args.dataset, train: &cfg, model: &model_cfg },
    )?;
    let (params, history) = train(&data.trips, &cfg, &model_cfg)?;
    save_checkpoint(&params, &args.out.join("model.ckpt"))?;
    let hist_file = File::create(args.out.join("history.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(hist_file), &history)?;
    for h in &history {
        println!(
            "epoch {:>3}  train_loss {:.6}  val_loss {:.6}  val_maape {:.4}",
            h.epoch, h.train_loss, h.val_loss, h.val_maape
        );
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let data = io::read_dataset(&args.dataset)?;
    let params = load_checkpoint(&args.checkpoint)?;
    let preds = predict_dataset(&params, &data.trips);
    let report = evaluate(&data.trips, &preds)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_resolved_config(&args.out, &serde_json::json!({
        "dataset": args.dataset,
        "checkpoint": args.checkpoint,
    }))?;
    std::fs::write(args.out.join("report.txt"), report.render_text())?;
    let json_file = File::create(args.out.join("report.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(json_file), &report)?;
    std::fs::write(args.out.join("curves.csv"), report.curves_csv())?;
    println!("{}", report.render_text());
    Ok(())
}

pub fn cmd_recommend(args: &RecommendArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let route: RouteTrip = read_json(&args.trip)?;
    let candidates = io::read_vehicles(&args.vehicles)?;
    let cost_cfg = load_cost(&args.cost)?;
    let k = if args.k > candidates.len() {
        eprintln!(
            "warning: k = {} exceeds candidate count {}, clamping",
            args.k,
            candidates.len()
        );
        candidates.len()
    } else {
        args.k
    };
    let rows = recommend_one(&route, &candidates, &params, &cost_cfg, k)?;
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        io::write_resolved_config(out, &serde_json::json!({
            "checkpoint": args.checkpoint,
            "trip": args.trip,
            "vehicles": args.vehicles,
            "k": k,
        }))?;
        let mut f = BufWriter::new(File::create(out.join("recommendation.jsonl"))?);
        for row in &rows {
            serde_json::to_writer(&mut f, row)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
    }
    println!("{}", render_recommendation(&rows));
    Ok(())
}

#[derive(Serialize)]
struct AssignmentReport<'a> {
    assignment: &'a Assignment,
    brute_force_agrees: Option<bool>,
    greedy_total: f64,
}

pub fn cmd_assign(args: &AssignArgs) -> Result<()> {
    let matrix: CostMatrix = match (&args.matrix, &args.trips) {
        (Some(path), _) => {
            let raw: serde_json::Value = read_json(path)?;
            let n = raw["n_vehicles"].as_u64().ok_or_else(|| {
                Error::Data("matrix file needs integer n_vehicles".into())
            })? as usize;
            let m = raw["n_trips"]
                .as_u64()
                .ok_or_else(|| Error::Data("matrix file needs integer n_trips".into()))?
                as usize;
            let data: Vec<f64> = serde_json::from_value(raw["data"].clone())?;
            CostMatrix::new(n, m, data)?
        }
        (None, Some(trips_path)) => {
            let trips: Vec<RouteTrip> = read_json(trips_path)?;
            let vehicles =
                io::read_vehicles(args.vehicles.as_ref().expect("clap enforces pairing"))?;
            let ckpt = args.checkpoint.as_ref().ok_or_else(|| {
                Error::Config("--checkpoint required when building the matrix from trips".into())
            })?;
            let params = load_checkpoint(ckpt)?;
            let cost_cfg = load_cost(&args.cost)?;
            let mode = match args.mode.as_str() {
                "per-mile" => AssignMode::PerMile,
                "per-trip" => AssignMode::PerTrip,
                other => {
                    return Err(Error::Config(format!(
                        "unknown mode '{other}' (expected per-mile or per-trip)"
                    )))
                }
            };
            build_cost_matrix(&trips, &vehicles, &params, &cost_cfg, mode)?
        }
        (None, None) => {
            return Err(Error::Config(
                "assign needs either --matrix or --trips/--vehicles".into(),
            ))
        }
    };
    let assignment = kuhn_munkres(&matrix)?;
    let brute_force_agrees = if matrix.n_trips <= 7 {
        Some(brute_force_assign(&matrix)?.total_cost == assignment.total_cost)
    } else {
        None
    };
    let greedy = greedy_assign(&matrix);
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let f = File::create(out.join("assignment.json"))?;
        serde_json::to_writer_pretty(
            BufWriter::new(f),
            &AssignmentReport {
                assignment: &assignment,
                brute_force_agrees,
                greedy_total: greedy.total_cost,
            },
        )?;
    }
    println!("{}", render_assignment(&matrix, &assignment));
    if let Some(agrees) = brute_force_agrees {
        println!("brute_force_agrees: {agrees}");
    }
    println!("greedy_total: {:.6}", greedy.total_cost);
    Ok(())
}

/// One request line of the serve protocol.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServeRequest {
    Predict { route: RouteTrip, vehicle: VehicleSpec },
    Recommend { route: RouteTrip, candidates: Vec<VehicleSpec>, k: usize },
    Assign { n_vehicles: usize, n_trips: usize, data: Vec<f64> },
}

/// One response line; `checkpoint_version` is always present so clients
/// can pin what they talked to.
#[derive(Debug, Serialize, Deserialize)]
pub struct ServeResponse {
    pub ok: bool,
    pub checkpoint_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predict: Option<crate::domain::EnergyVector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommend: Option<Vec<RankedCandidate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assign: Option<Assignment>,
}

fn error_response(msg: String) -> ServeResponse {
    ServeResponse {
        ok: false,
        checkpoint_version: FORMAT_VERSION,
        error: Some(msg),
        predict: None,
        recommend: None,
        assign: None,
    }
}

/// Handles one request line. Pure function of (checkpoint, request);
/// malformed input yields an error response, never a crash.
pub fn handle_request(params: &ModelParams, cost_cfg: &CostConfig, line: &str) -> ServeResponse {
    let request: ServeRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return error_response(format!("malformed request: {e}")),
    };
    let mut resp = ServeResponse {
        ok: true,
        checkpoint_version: FORMAT_VERSION,
        error: None,
        predict: None,
        recommend: None,
        assign: None,
    };
    let outcome: Result<()> = (|| {
        match request {
            ServeRequest::Predict { route, vehicle } => {
                resp.predict = Some(predict_trip(&route, &vehicle, params));
            }
            ServeRequest::Recommend { route, candidates, k } => {
                let k = k.min(candidates.len()).max(1);
                resp.recommend = Some(recommend_one(&route, &candidates, params, cost_cfg, k)?);
            }
            ServeRequest::Assign { n_vehicles, n_trips, data } => {
                let matrix = CostMatrix::new(n_vehicles, n_trips, data)?;
                resp.assign = Some(kuhn_munkres(&matrix)?);
            }
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => resp,
        Err(e) => error_response(e.to_string()),
    }
}

/// Sequential request loop over any line-delimited transport.
pub fn serve_loop(
    params: &ModelParams,
    cost_cfg: &CostConfig,
    input: impl BufRead,
    mut output: impl Write,
) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_request(params, cost_cfg, &line);
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let params = load_checkpoint(&args.checkpoint)?;
    let cost_cfg = load_cost(&args.cost)?;
    match &args.listen {
        None => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_loop(&params, &cost_cfg, stdin.lock(), stdout.lock())
        }
        Some(addr) => {
            let listener = std::net::TcpListener::bind(addr)?;
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = std::io::BufReader::new(stream.try_clone()?);
                serve_loop(&params, &cost_cfg, reader, stream)?;
            }
            Ok(())
        }
    }
}

/// Dispatches a parsed command; the binary maps the error to an exit
/// code via [`exit_code_for`].
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::Assign(args) => cmd_assign(args),
        Command::Serve(args) => cmd_serve(args),
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Diverged(_) => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

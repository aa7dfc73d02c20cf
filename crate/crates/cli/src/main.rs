use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratdeconv::baselines::{iht_solve, l1_solve};
use ratdeconv::datagen::{generate_instance, FilterMode, InstanceFile};
use ratdeconv::harness::{read_aggregate, run_experiment, write_outputs, ExperimentConfig};
use ratdeconv::problem::{eval_j, Regime};
use ratdeconv::relaxation::{solve_relaxation, RelaxationMode};
use ratdeconv::Error;
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "ratdeconv", version, about = "Sparse deconvolution with saturation: moment relaxations and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one realization and write it as JSON.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Solve the sparse (or dense) relaxation of one instance.
    Relax {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        dense: bool,
    },
    /// Run IHT on one instance.
    Iht {
        #[command(flatten)]
        source: Source,
        /// Starting point: zero, d, truth or l1.
        #[arg(long, default_value = "zero")]
        init: String,
    },
    /// Run the linearized ℓ1 baseline on one instance.
    L1 {
        #[command(flatten)]
        source: Source,
    },
    /// Run a Monte-Carlo experiment and write its reports.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Number of realizations.
        #[arg(short = 'n', long)]
        realizations: Option<usize>,
    },
    /// Summarize the aggregate of a finished experiment.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relaxation order; repeat for several.
    #[arg(long)]
    order: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    regime: Option<String>,
    /// a, b, c or random.
    #[arg(long)]
    filter: Option<String>,
    /// Signal length.
    #[arg(short = 't', long = "length")]
    length: Option<usize>,
}

#[derive(Args)]
struct Source {
    /// Instance written by `generate`; otherwise one is drawn from the config.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[command(flatten)]
    common: Common,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::InvalidRegime(_)
            | Error::OrderTooSmall { .. }
            | Error::SizeCapExceeded { .. }
            | Error::LengthMismatch { .. }
            | Error::StepTooLarge { .. }
            | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn config_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(msg.to_string())
}

impl Common {
    fn experiment_config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.gen.rng_seed = s;
        }
        if !self.order.is_empty() {
            cfg.orders.clone_from(&self.order);
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        if let Some(r) = &self.regime {
            cfg.gen.regime = r.parse::<Regime>()?;
        }
        if let Some(f) = &self.filter {
            cfg.gen.filter = FilterMode::from_name(f)?;
        }
        if let Some(t) = self.length {
            cfg.gen.t = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Source {
    fn load(&self) -> Result<(ExperimentConfig, InstanceFile), Failure> {
        let cfg = self.common.experiment_config()?;
        let inst = match &self.instance {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                let inst: InstanceFile =
                    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                inst.spec.validate()?;
                inst
            }
            None => {
                let (spec, signal) = generate_instance(&cfg.gen, self.index)?;
                InstanceFile { index: self.index, spec, signal }
            }
        };
        Ok((cfg, inst))
    }
}

fn emit(value: &serde_json::Value, out: Option<&Path>, name: &str) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Run(e.to_string()))?;
            fs::write(dir.join(name), text + "\n").map_err(|e| Failure::Run(e.to_string()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { common, index } => {
            let cfg = common.experiment_config()?;
            let (spec, signal) = generate_instance(&cfg.gen, index)?;
            let inst = InstanceFile { index, spec, signal };
            emit(&serde_json::to_value(&inst).map_err(Error::from)?, common.out.as_deref(), "instance.json")
        }
        Command::Relax { source, dense } => {
            let (cfg, inst) = source.load()?;
            let mode = if dense { RelaxationMode::Dense } else { RelaxationMode::Sparse };
            let out_dir = source.common.out.as_deref();
            let mut results = Vec::new();
            for &k in &cfg.orders {
                let out = solve_relaxation(&inst.spec, &inst.signal.d, k, mode, &cfg.solver, None)?;
                let j = eval_j(&out.x_hat, &inst.spec, &inst.signal.d)?;
                if let Some(dir) = out_dir {
                    fs::create_dir_all(dir).map_err(|e| Failure::Run(e.to_string()))?;
                    let f = fs::File::create(dir.join(format!("trace_k{k}.csv"))).map_err(|e| Failure::Run(e.to_string()))?;
                    out.trace.write_csv(std::io::BufWriter::new(f))?;
                }
                results.push(json!({
                    "order": k,
                    "bound": out.bound,
                    "objective": j,
                    "gap": (j - out.bound) / (1.0 + out.bound.abs()),
                    "status": out.solution.status,
                    "trusted": out.trusted(),
                    "n_moments": out.size.n_moments,
                    "max_block": out.size.max_block(),
                    "iterations": out.trace.iterations(),
                    "solve_secs": out.solve_secs,
                    "x_hat": out.x_hat,
                }));
            }
            emit(&json!({ "index": inst.index, "relaxations": results }), out_dir, "relax.json")
        }
        Command::Iht { source, init } => {
            let (cfg, inst) = source.load()?;
            let (spec, s) = (&inst.spec, &inst.signal);
            let x0 = match init.as_str() {
                "zero" => vec![0.0; spec.t],
                "d" => s.d.clone(),
                "truth" => s.x_true.clone(),
                "l1" => l1_solve(spec, &s.d, &cfg.l1)?.x,
                other => return Err(config_err(format!("unknown init `{other}`"))),
            };
            let run = iht_solve(&x0, spec, &s.d, &cfg.iht)?;
            let j = eval_j(&run.x, spec, &s.d)?;
            let value = json!({
                "init": init,
                "objective": j,
                "iterations": run.iterations,
                "converged": run.converged,
                "x": run.x,
            });
            emit(&value, source.common.out.as_deref(), "iht.json")
        }
        Command::L1 { source } => {
            let (cfg, inst) = source.load()?;
            let run = l1_solve(&inst.spec, &inst.signal.d, &cfg.l1)?;
            let j = eval_j(&run.x, &inst.spec, &inst.signal.d)?;
            let value = json!({ "objective": j, "iterations": run.iterations, "x": run.x });
            emit(&value, source.common.out.as_deref(), "l1.json")
        }
        Command::Experiment { common, realizations } => {
            let mut cfg = common.experiment_config()?;
            if let Some(n) = realizations {
                cfg.n_realizations = n;
            }
            let dir = cfg.out_dir.clone().ok_or_else(|| config_err("experiment needs --out or out_dir"))?;
            let rep = run_experiment(&cfg)?;
            write_outputs(&rep, &dir)?;
            let failed = rep.failures();
            eprintln!("{} realizations, {failed} failed; reports in {}", rep.realizations.len(), dir.display());
            if failed > 0 {
                for r in rep.realizations.iter().filter(|r| r.error.is_some()) {
                    eprintln!("realization {}: {}", r.index, r.error.as_deref().unwrap_or_default());
                }
                return Err(Failure::Run(format!("{failed} realization(s) failed")));
            }
            Ok(())
        }
        Command::Report { out } => {
            let agg = read_aggregate(&out.join("aggregate.json")).map_err(|e| config_err(format!("{}: {e}", out.display())))?;
            println!("realizations: {} ({} failed)", agg.n_realizations, agg.n_failed);
            println!("{:<16} {:>12} {:>12} {:>6}", "method", "mean J", "mean MSE", "wins");
            for (m, j) in &agg.mean_objective {
                let wins = agg.win_counts.get(m).map_or("-".to_string(), |w| w.to_string());
                println!("{m:<16} {j:>12.5} {:>12.4e} {wins:>6}", agg.mean_mse[m]);
            }
            for o in &agg.orders {
                println!(
                    "order {}: {}/{} trusted, {} certified, mean bound {:.5}, mean gap {:.3e}",
                    o.order, o.trusted, o.solved, o.certified, o.mean_bound, o.mean_gap
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

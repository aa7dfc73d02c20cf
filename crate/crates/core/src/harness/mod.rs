//! Monte-Carlo experiments: relaxations, baselines and their metrics.

mod metrics;
mod output;

pub use metrics::{
    mse, relative_gap, roc_counts, roc_detection_at, roc_majorizes, roc_points, threshold_grid, win_counts,
    RocCounts, WIN_TOL,
};
pub use output::{read_aggregate, write_outputs};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{iht_solve, l1_solve, IhtConfig, L1Config};
use crate::datagen::{generate_instance, GenConfig};
use crate::error::{Error, Result};
use crate::problem::{eval_j, ModelSpec, SignalInstance};
use crate::relaxation::{solve_relaxation, RelaxationMode};
use crate::sdp::{SolveStatus, SolveTrace, SolverConfig};

/// Relative gap at or below which a relaxation certifies global optimality.
pub const CERTIFIED_GAP: f64 = 1e-3;
pub const ROC_THRESHOLDS: usize = 200;

/// IHT initializations, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Relax,
    L1,
    Data,
    Zero,
    Truth,
}

impl Init {
    pub const ALL: [Init; 5] = [Init::Relax, Init::L1, Init::Data, Init::Zero, Init::Truth];
    /// Initializations available without the ground truth; win counts use these.
    pub const PRACTICAL: [Init; 4] = [Init::Relax, Init::L1, Init::Data, Init::Zero];

    pub fn method_name(self) -> &'static str {
        match self {
            Init::Relax => "iht_init_relax",
            Init::L1 => "iht_init_l1",
            Init::Data => "iht_init_d",
            Init::Zero => "iht_init_zero",
            Init::Truth => "iht_init_truth",
        }
    }
}

pub fn relax_method_name(order: u32) -> String {
    format!("relax_k{order}")
}

pub const L1_METHOD: &str = "l1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub gen: GenConfig,
    pub orders: Vec<u32>,
    pub iht: IhtConfig,
    pub l1: L1Config,
    pub solver: SolverConfig,
    pub n_realizations: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            orders: vec![2, 3],
            iht: IhtConfig::default(),
            l1: L1Config::default(),
            solver: SolverConfig::default(),
            n_realizations: 100,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.solver.validate()?;
        if self.orders.contains(&0) {
            return Err(Error::InvalidSpec("relaxation orders must be at least 1".into()));
        }
        if !(self.iht.lambda0 > 0.0) || !(self.l1.lambda1 > 0.0) {
            return Err(Error::InvalidSpec("lambda0 and lambda1 must be positive".into()));
        }
        Ok(())
    }

    /// Order whose estimate seeds IHT: 3 when requested, else the highest.
    pub fn init_order(&self) -> Option<u32> {
        if self.orders.contains(&3) {
            Some(3)
        } else {
            self.orders.iter().copied().max()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxRecord {
    pub order: u32,
    pub bound: f64,
    pub objective: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub assemble_secs: f64,
    pub solve_secs: f64,
    #[serde(skip)]
    pub trace: SolveTrace,
}

impl RelaxRecord {
    /// The bound is trusted only from a converged solve.
    pub fn trusted(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn certified(&self) -> bool {
        self.trusted() && self.gap <= CERTIFIED_GAP
    }
}

/// One estimate produced for a realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub x: Vec<f64>,
    pub objective: f64,
    pub mse: f64,
    pub secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: u64,
    pub spec: ModelSpec,
    pub signal: SignalInstance,
    pub relax: Vec<RelaxRecord>,
    pub methods: Vec<MethodRecord>,
    pub error: Option<String>,
}

impl RealizationRecord {
    pub fn method(&self, name: &str) -> Option<&MethodRecord> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn relax_order(&self, order: u32) -> Option<&RelaxRecord> {
        self.relax.iter().find(|r| r.order == order)
    }

    pub fn iht(&self, init: Init) -> Option<&MethodRecord> {
        self.method(init.method_name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub method: String,
    pub thresholds: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub order: u32,
    pub solved: usize,
    pub trusted: usize,
    pub certified: usize,
    pub mean_bound: f64,
    pub mean_gap: f64,
    pub mean_solve_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_realizations: usize,
    pub n_failed: usize,
    pub mean_objective: BTreeMap<String, f64>,
    pub mean_mse: BTreeMap<String, f64>,
    pub mean_secs: BTreeMap<String, f64>,
    /// Over the initializations that do not use the ground truth.
    pub win_counts: BTreeMap<String, usize>,
    pub orders: Vec<OrderSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub realizations: Vec<RealizationRecord>,
    pub aggregate: Aggregate,
    pub roc: Vec<RocCurve>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.realizations.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Runs every realization, in parallel, and aggregates the results.
/// Failures are recorded per realization and never abort the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let realizations: Vec<RealizationRecord> = (0..cfg.n_realizations as u64)
        .into_par_iter()
        .map(|i| run_realization(cfg, i))
        .collect::<Result<_>>()?;
    Ok(summarize(cfg.clone(), realizations))
}

/// Builds the aggregate and ROC curves from completed realizations.
pub fn summarize(config: ExperimentConfig, realizations: Vec<RealizationRecord>) -> ExperimentReport {
    let aggregate = aggregate(&config, &realizations);
    let roc = roc_curves(&realizations);
    ExperimentReport { config, realizations, aggregate, roc }
}

fn run_realization(cfg: &ExperimentConfig, index: u64) -> Result<RealizationRecord> {
    // Generation errors are configuration errors and abort the run.
    let (spec, signal) = generate_instance(&cfg.gen, index)?;
    let mut rec = RealizationRecord {
        index,
        spec,
        signal,
        relax: Vec::new(),
        methods: Vec::new(),
        error: None,
    };
    if let Err(e) = solve_all(cfg, &mut rec) {
        rec.error = Some(e.to_string());
    }
    Ok(rec)
}

fn solve_all(cfg: &ExperimentConfig, rec: &mut RealizationRecord) -> Result<()> {
    let spec = rec.spec.clone();
    let d = rec.signal.d.clone();
    let truth = rec.signal.x_true.clone();
    let record = |rec: &mut RealizationRecord, method: String, x: Vec<f64>, secs: f64| -> Result<()> {
        let objective = eval_j(&x, &spec, &d)?;
        let m = mse(&x, &truth)?;
        rec.methods.push(MethodRecord { method, x, objective, mse: m, secs });
        Ok(())
    };

    let mut relax_x = None;
    for &k in &cfg.orders {
        let out = solve_relaxation(&spec, &d, k, RelaxationMode::Sparse, &cfg.solver, None)?;
        let objective = eval_j(&out.x_hat, &spec, &d)?;
        rec.relax.push(RelaxRecord {
            order: k,
            bound: out.bound,
            objective,
            gap: relative_gap(objective, out.bound),
            status: out.solution.status,
            iterations: out.trace.iterations(),
            assemble_secs: out.assemble_secs,
            solve_secs: out.solve_secs,
            trace: out.trace,
        });
        if Some(k) == cfg.init_order() {
            relax_x = Some(out.x_hat.clone());
        }
        record(rec, relax_method_name(k), out.x_hat, out.assemble_secs + out.solve_secs)?;
    }

    let clock = Instant::now();
    let l1 = l1_solve(&spec, &d, &cfg.l1)?;
    record(rec, L1_METHOD.to_string(), l1.x.clone(), clock.elapsed().as_secs_f64())?;

    for init in Init::ALL {
        let x0 = match init {
            Init::Relax => match &relax_x {
                Some(x) => x.clone(),
                None => continue,
            },
            Init::L1 => l1.x.clone(),
            Init::Data => d.clone(),
            Init::Zero => vec![0.0; spec.t],
            Init::Truth => truth.clone(),
        };
        let clock = Instant::now();
        let run = iht_solve(&x0, &spec, &d, &cfg.iht)?;
        record(rec, init.method_name().to_string(), run.x, clock.elapsed().as_secs_f64())?;
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn aggregate(cfg: &ExperimentConfig, recs: &[RealizationRecord]) -> Aggregate {
    let ok: Vec<&RealizationRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
    let mut agg = Aggregate { n_realizations: recs.len(), n_failed: recs.len() - ok.len(), ..Default::default() };

    let mut names: Vec<String> = cfg.orders.iter().map(|&k| relax_method_name(k)).collect();
    names.push(L1_METHOD.into());
    names.extend(Init::ALL.iter().map(|i| i.method_name().to_string()));
    for name in names {
        let ms: Vec<&MethodRecord> = ok.iter().filter_map(|r| r.method(&name)).collect();
        if ms.is_empty() {
            continue;
        }
        agg.mean_objective.insert(name.clone(), mean(ms.iter().map(|m| m.objective)));
        agg.mean_mse.insert(name.clone(), mean(ms.iter().map(|m| m.mse)));
        agg.mean_secs.insert(name, mean(ms.iter().map(|m| m.secs)));
    }

    let rows: Vec<Vec<f64>> = ok
        .iter()
        .map(|r| Init::PRACTICAL.iter().map(|&i| r.iht(i).map_or(f64::NAN, |m| m.objective)).collect())
        .collect();
    for (init, w) in Init::PRACTICAL.iter().zip(win_counts(&rows)) {
        if ok.iter().any(|r| r.iht(*init).is_some()) {
            agg.win_counts.insert(init.method_name().into(), w);
        }
    }

    for &k in &cfg.orders {
        let rs: Vec<&RelaxRecord> = ok.iter().filter_map(|r| r.relax_order(k)).collect();
        agg.orders.push(OrderSummary {
            order: k,
            solved: rs.len(),
            trusted: rs.iter().filter(|r| r.trusted()).count(),
            certified: rs.iter().filter(|r| r.certified()).count(),
            mean_bound: mean(rs.iter().map(|r| r.bound)),
            mean_gap: mean(rs.iter().map(|r| r.gap)),
            mean_solve_secs: mean(rs.iter().map(|r| r.solve_secs)),
        });
    }
    agg
}

/// Pooled ROC curve per method over all realizations with a nondegenerate
/// ground truth, on a geometric grid up to the method's largest amplitude.
pub fn roc_curves(recs: &[RealizationRecord]) -> Vec<RocCurve> {
    let ok: Vec<&RealizationRecord> = recs
        .iter()
        .filter(|r| r.error.is_none())
        .filter(|r| {
            let nz = r.signal.x_true.iter().filter(|v| **v != 0.0).count();
            nz > 0 && nz < r.signal.x_true.len()
        })
        .collect();
    let mut names: Vec<String> = Vec::new();
    for r in &ok {
        for m in &r.methods {
            if !names.contains(&m.method) {
                names.push(m.method.clone());
            }
        }
    }
    names
        .into_iter()
        .map(|method| {
            let pairs: Vec<(&[f64], &[f64])> = ok
                .iter()
                .filter_map(|r| r.method(&method).map(|m| (m.x.as_slice(), r.signal.x_true.as_slice())))
                .collect();
            let top = pairs.iter().flat_map(|(x, _)| x.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
            let thresholds = threshold_grid(top, ROC_THRESHOLDS);
            let points = thresholds
                .iter()
                .map(|&tau| {
                    let mut c = RocCounts::default();
                    for (x, t) in &pairs {
                        c.add(&roc_counts(x, t, tau));
                    }
                    c.rates().unwrap_or((f64::NAN, f64::NAN))
                })
                .collect();
            RocCurve { method, thresholds, points }
        })
        .collect()
}

//! Command-line front end for the experiment harness.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use v2g_core::bench::{run_baseline, run_experiment, run_sample, ExperimentConfig, ExperimentReport, Method};
use v2g_core::bnb::BnbConfig;
use v2g_core::scenario::{generate_sample, Sample, ScenarioSpec};
use v2g_core::v2g::assemble_primal;

#[derive(Parser)]
#[command(name = "v2g-bench", version, about = "V2G scheduling solvers and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one sample with one method.
    Solve {
        #[arg(long, value_enum, default_value = "two-stage")]
        method: MethodArg,
        #[command(flatten)]
        one: OneArgs,
    },
    /// Exact branch-and-bound on one sample.
    Baseline(OneArgs),
    /// Stage 1 only (penalized path-following relaxation).
    DcOnly(OneArgs),
    /// Stage 1 followed by the trust-region sub-problem.
    TwoStage(OneArgs),
    /// Runs methods over a batch of seeded samples.
    Experiment {
        #[command(flatten)]
        batch: BatchArgs,
        /// Comma-separated methods.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "baseline,two-stage")]
        methods: Vec<MethodArg>,
    },
    /// Baseline plus two-stage at several radii, escalation off.
    SweepDelta {
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        deltas: Vec<usize>,
    },
    /// Writes sample archives `sample_000/`, `sample_001/`, ...
    GenSamples {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value = "samples")]
        out_dir: PathBuf,
    },
    /// Recomputes aggregates from an output directory's `records.csv`.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Baseline,
    DcOnly,
    TwoStage,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Baseline => Method::Baseline,
            MethodArg::DcOnly => Method::DcOnly,
            MethodArg::TwoStage => Method::TwoStage,
        }
    }
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario spec JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Bundled case name or case JSON path.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    periods: Option<usize>,
    /// Arrivals per slot as `lo,hi`.
    #[arg(long, value_delimiter = ',')]
    arrivals: Option<Vec<usize>>,
}

impl ScenarioArgs {
    fn spec(&self) -> Result<ScenarioSpec> {
        let mut spec = match &self.spec {
            Some(p) => {
                serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("{}", p.display()))?
            }
            None => ScenarioSpec::default(),
        };
        if let Some(c) = &self.case {
            spec.case = c.clone();
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(t) = self.periods {
            spec.periods = t;
        }
        if let Some(a) = &self.arrivals {
            let [lo, hi] = a[..] else {
                bail!("--arrivals takes lo,hi");
            };
            spec.arrivals_per_slot = (lo, hi);
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Trust-region radius.
    #[arg(long, default_value_t = 2)]
    delta: usize,
    /// Disables radius escalation after an infeasible sub-problem.
    #[arg(long)]
    no_escalation: bool,
    /// DC penalty weight; defaults to an instance-scaled value.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Per branch-and-bound solve, seconds.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 1_000_000)]
    node_limit: usize,
}

impl SolverArgs {
    fn config(&self, spec: ScenarioSpec) -> ExperimentConfig {
        ExperimentConfig {
            spec,
            deltas: vec![self.delta],
            lambda: self.lambda,
            max_iters: self.max_iters,
            escalation: !self.no_escalation,
            bnb: BnbConfig {
                time_limit: Some(self.time_limit),
                node_limit: self.node_limit,
                ..BnbConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }
}

#[derive(Args, Clone)]
struct OneArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sample archive to solve instead of generating one.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Writes the baseline's per-node log as CSV.
    #[arg(long)]
    node_log: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BatchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn solve_one(method: Method, a: &OneArgs) -> Result<()> {
    let spec = a.scenario.spec()?;
    let sample = match &a.sample {
        Some(dir) => Sample::read_dir(dir)?,
        None => generate_sample(&spec, spec.seed)?,
    };
    let mut cfg = a.solver.config(spec);
    cfg.methods = vec![method];
    let record = if method == Method::Baseline {
        let model = assemble_primal(&sample.case, &sample.sessions, &sample.prices)?;
        cfg.bnb.log_nodes = a.node_log.is_some();
        let (r, res) = run_baseline(&cfg, &model, 0, sample.seed);
        if let (Some(path), Some(res)) = (&a.node_log, res) {
            res.write_node_log(std::fs::File::create(path)?)?;
        }
        r
    } else {
        if a.node_log.is_some() {
            bail!("--node-log applies to the baseline only");
        }
        run_sample(&cfg, 0, &sample).remove(0)
    };
    let mut v = serde_json::to_value(&record)?;
    v["solve_time_s"] = record.solve_time_s.into();
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn batch(b: &BatchArgs, methods: Vec<Method>, deltas: Vec<usize>, escalation: bool) -> Result<()> {
    let mut cfg = b.solver.config(b.scenario.spec()?);
    cfg.samples = b.samples;
    cfg.jobs = b.jobs;
    cfg.methods = methods;
    cfg.deltas = deltas;
    cfg.escalation &= escalation;
    let report = run_experiment(&cfg)?;
    report.write(&b.out_dir)?;
    summarize(&report, &b.out_dir);
    Ok(())
}

fn summarize(report: &ExperimentReport, dir: &Path) {
    println!(
        "{} samples, {} unproved baselines",
        report.samples, report.baseline_unproved
    );
    println!(
        "{:<10} {:>5} {:>8} {:>14} {:>10} {:>10}",
        "method", "delta", "feas %", "mean obj", "gap %", "median s"
    );
    for g in &report.groups {
        println!(
            "{:<10} {:>5} {:>8.1} {:>14.4} {:>10.5} {:>10.3}",
            g.method.to_string(),
            g.delta.map_or("-".into(), |d| d.to_string()),
            g.feasibility_ratio,
            g.mean_objective.unwrap_or(f64::NAN),
            g.mean_gap_pct.unwrap_or(f64::NAN),
            g.median_time_s,
        );
    }
    for (k, s) in &report.speedup {
        println!("speedup {k}: {s:.2}x");
    }
    println!("written to {}", dir.display());
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Solve { method, one } => solve_one(method.into(), &one),
        Cmd::Baseline(a) => solve_one(Method::Baseline, &a),
        Cmd::DcOnly(a) => solve_one(Method::DcOnly, &a),
        Cmd::TwoStage(a) => solve_one(Method::TwoStage, &a),
        Cmd::Experiment { batch: b, methods } => {
            let deltas = vec![b.solver.delta];
            batch(&b, methods.into_iter().map(Method::from).collect(), deltas, true)
        }
        Cmd::SweepDelta { batch: b, deltas } => batch(&b, vec![Method::Baseline, Method::TwoStage], deltas, false),
        Cmd::GenSamples {
            scenario,
            samples,
            out_dir,
        } => {
            let spec = scenario.spec()?;
            for i in 0..samples {
                let s = generate_sample(&spec, spec.seed.wrapping_add(i as u64))?;
                s.write_dir(&out_dir.join(format!("sample_{i:03}")), Some(&spec))?;
            }
            println!("{samples} samples written to {}", out_dir.display());
            Ok(())
        }
        Cmd::Report { out_dir } => {
            let report = ExperimentReport::read(&out_dir)?;
            report.write(&out_dir)?;
            summarize(&report, &out_dir);
            Ok(())
        }
    }
}

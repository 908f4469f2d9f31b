//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{write_csv, MetricsRow};
use crate::harness::run::{
    collect_offline, dataset_loss, derive_rng, realtime_budget, run_planners, CollectPolicy, PredictorInit,
};
use crate::neural::{Learner, ParamLayout, PredictorParams, ReplayBuffer};
use crate::planner::{Budget, Mode};

#[derive(Debug, Parser)]
#[command(name = "sisplan", version, about = "Online POMDP planning with self-improving simulators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled configuration: gac, gac-small, gtc, gtc-small, tiny-gac.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Self-improving simulator with a fixed number of simulations per step;
    /// one CSV per lambda.
    SisFixed {
        #[command(flatten)]
        common: Common,
        /// Also write every run's replay buffer into this directory.
        #[arg(long)]
        export_buffer: Option<PathBuf>,
    },
    /// Self-improving simulator with a wall-clock budget per step.
    SisRealtime {
        #[command(flatten)]
        common: Common,
        /// Seconds per decision (defaults to 1/64 for GAC, 1/16 for GTC).
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// POMCP with the global simulator only.
    BaselineGs {
        #[command(flatten)]
        common: Common,
    },
    /// Collect real trajectories into a buffer file; `--episodes` sets how
    /// many.
    CollectOffline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: CollectPolicy,
        /// Destination file (defaults to `<out>/offline-<policy>-<n>.jsonl`).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Train a predictor on a buffer file, writing checkpoints.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Use only the first N sequences.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Plan with the IALS only, using a frozen predictor.
    EvalTwoPhase {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta: PathBuf,
    },
    /// Mean loss of each predictor on each dataset.
    EvalTestloss {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        theta: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        test: Vec<PathBuf>,
    },
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => ExperimentConfig::load(p)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 2 for usage or configuration
/// errors, 1 for runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn lambda_tag(l: f64) -> String {
    format!("lambda-{l}")
}

fn write_rows(path: &Path, rows: &[MetricsRow], timed: bool) -> Result<()> {
    if timed {
        write_csv(path, rows)
    } else {
        // wall time is not reproducible: keep it in a sidecar file
        let plain: Vec<MetricsRow> = rows.iter().map(MetricsRow::without_timing).collect();
        write_csv(path, &plain)?;
        write_csv(&path.with_extension("timed.csv"), rows)
    }
}

fn summarize(rows: &[MetricsRow]) -> String {
    let n = rows.len().max(1) as f64;
    let ret = rows.iter().map(|r| r.total_return).sum::<f64>() / n;
    let failed = rows.iter().filter(|r| r.failed).count();
    format!("{} episodes, mean return {ret:.3}, {failed} failed", rows.len())
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::SisFixed { common, export_buffer } => {
            let cfg = common.resolve()?;
            if !matches!(cfg.budget, Budget::Sims(_)) {
                return Err(Error::Config("sis-fixed needs planner.budget = { sims = N }".into()));
            }
            let mut lines = Vec::new();
            for &l in &cfg.lambdas {
                let mut pcfg = cfg.planner_config(l);
                pcfg.mode = Mode::Sis;
                let runs = run_planners(&cfg, &pcfg, &PredictorInit::Fresh, export_buffer.is_some())?;
                if let Some(dir) = &export_buffer {
                    for r in &runs {
                        if let Some(b) = &r.buffer {
                            b.save(&dir.join(format!("buffer-{}-run{}.jsonl", lambda_tag(l), r.run_id)))?;
                        }
                    }
                }
                let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows()).collect();
                let path = cfg.output_dir.join(format!("sis-fixed-{}.csv", lambda_tag(l)));
                write_rows(&path, &rows, false)?;
                lines.push(format!("{}: {}", path.display(), summarize(&rows)));
            }
            Ok(lines.join("\n"))
        }
        Command::SisRealtime { common, seconds } => {
            let cfg = common.resolve()?;
            let budget = match seconds {
                Some(s) => Budget::Seconds(s),
                None => realtime_budget(&cfg),
            };
            let mut lines = Vec::new();
            for &l in &cfg.lambdas {
                let mut pcfg = cfg.planner_config(l);
                pcfg.mode = Mode::Sis;
                pcfg.budget = budget;
                let runs = run_planners(&cfg, &pcfg, &PredictorInit::Fresh, false)?;
                let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows()).collect();
                let path = cfg.output_dir.join(format!("sis-realtime-{}.csv", lambda_tag(l)));
                write_rows(&path, &rows, true)?;
                lines.push(format!("{}: {}", path.display(), summarize(&rows)));
            }
            Ok(lines.join("\n"))
        }
        Command::BaselineGs { common } => {
            let cfg = common.resolve()?;
            let mut pcfg = cfg.planner_config(cfg.selector.lambda);
            pcfg.mode = Mode::GsOnly;
            let runs = run_planners(&cfg, &pcfg, &PredictorInit::Fresh, false)?;
            let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows()).collect();
            let path = cfg.output_dir.join("baseline-gs.csv");
            write_rows(&path, &rows, matches!(cfg.budget, Budget::Seconds(_)))?;
            Ok(format!("{}: {}", path.display(), summarize(&rows)))
        }
        Command::CollectOffline { common, policy, file } => {
            let cfg = common.resolve()?;
            let count = cfg.episodes;
            let buf = collect_offline(&cfg, count, policy)?;
            let tag = match policy {
                CollectPolicy::Uniform => "uniform",
                CollectPolicy::PomcpGs => "pomcp-gs",
            };
            let path = file.unwrap_or_else(|| cfg.output_dir.join(format!("offline-{tag}-{count}.jsonl")));
            buf.save(&path)?;
            Ok(format!("{}: {} sequences", path.display(), buf.len()))
        }
        Command::TrainOffline {
            common,
            data,
            limit,
            steps,
            checkpoint_every,
        } => {
            let cfg = common.resolve()?;
            let mut buf = ReplayBuffer::load(&data)?;
            if let Some(n) = limit {
                let kept = buf.sequences()[..n.min(buf.len())].to_vec();
                buf = ReplayBuffer::new();
                buf.extend(kept);
            }
            if buf.is_empty() {
                return Err(Error::Config(format!("{} holds no sequences", data.display())));
            }
            let domain = cfg.domain.build()?;
            let mut rng = derive_rng(cfg.seed, 0);
            let layout = ParamLayout::for_domain(domain.as_ref(), cfg.train.hidden);
            let params = PredictorParams::init(layout, cfg.train.init_scale, &mut rng);
            let mut learner = Learner::new(params, cfg.train.clone());
            let every = checkpoint_every.unwrap_or(steps.max(1));
            let mut done = 0;
            if checkpoint_every.is_some() {
                learner.params.save(&cfg.output_dir.join("theta-step0.json"))?;
            }
            while done < steps {
                let n = every.min(steps - done);
                learner.train_steps(&buf, n, &mut rng);
                done += n;
                if checkpoint_every.is_some() {
                    learner.params.save(&cfg.output_dir.join(format!("theta-step{done}.json")))?;
                }
            }
            let path = cfg.output_dir.join("theta-final.json");
            learner.params.save(&path)?;
            Ok(format!(
                "{}: {steps} steps, training-set loss {:.4}",
                path.display(),
                dataset_loss(&learner.params, &buf)
            ))
        }
        Command::EvalTwoPhase { common, theta } => {
            let cfg = common.resolve()?;
            let params = PredictorParams::load(&theta)?;
            let mut pcfg = cfg.planner_config(cfg.selector.lambda);
            pcfg.mode = Mode::IalsOnly;
            let runs = run_planners(&cfg, &pcfg, &PredictorInit::Fixed(Arc::new(params)), false)?;
            let rows: Vec<MetricsRow> = runs.iter().flat_map(|r| r.rows()).collect();
            let path = cfg.output_dir.join("two-phase.csv");
            write_rows(&path, &rows, matches!(cfg.budget, Budget::Seconds(_)))?;
            Ok(format!("{}: {}", path.display(), summarize(&rows)))
        }
        Command::EvalTestloss { common, theta, test } => {
            let cfg = common.resolve()?;
            let sets = test
                .iter()
                .map(|p| ReplayBuffer::load(p).map(|b| (p, b)))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Vec::new();
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["theta", "test_set", "loss"])?;
            for t in &theta {
                let params = PredictorParams::load(t)?;
                for (p, b) in &sets {
                    let loss = dataset_loss(&params, b);
                    w.write_record([t.display().to_string(), p.display().to_string(), loss.to_string()])?;
                }
            }
            drop(w);
            let path = cfg.output_dir.join("testloss.csv");
            crate::harness::io::write_atomic(&path, &out)?;
            Ok(format!("{}: {} predictors x {} sets", path.display(), theta.len(), sets.len()))
        }
    }
}

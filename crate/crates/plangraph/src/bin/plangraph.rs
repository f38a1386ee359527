use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plangraph::canonical::{load_samples, save_samples};
use plangraph::checkpoint::{checkpoint_load, checkpoint_save, Checkpoint};
use plangraph::config::RunConfig;
use plangraph::record::{
    ablation_json, ablation_table, epoch_json, metric_json, metric_table, run_record_jsonl, whatif_jsonl,
    whatif_table,
};
use plangraph::render::render_scene;
use plangraph::table::{load_trajectory_table, TableFormat};
use plangraph::{default_threads, dump_graphs, evaluate_parallel, prepare_all, prepare_samples, wall_clock, Error, Result};
use plangraph_core::ablation::run_ablation;
use plangraph_core::scene::EgoSelection;
use plangraph_core::train::{RunRecord, Trainer};
use plangraph_core::whatif::{what_if, WhatIfScenario};
use plangraph_core::{Model, PreparedSample, Vec2};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "plangraph", version, about = "Plan-conditioned multi-graph trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Apollo,
    Ngsim,
}

#[derive(Subcommand)]
enum Command {
    /// Print a default run configuration
    Config {
        #[arg(long, value_enum, default_value = "apollo")]
        preset: Preset,
    },
    /// Convert trajectory tables into a canonical sample file
    Prepare {
        #[arg(long)]
        config: PathBuf,
        /// Output sample file
        #[arg(long, short)]
        out: PathBuf,
        /// Ego agent id; every fully observed agent when omitted
        #[arg(long)]
        ego: Option<i64>,
        /// Override the table format from the config
        #[arg(long, value_enum)]
        format: Option<TableFormat>,
        /// Also write adjacency matrices of every sample into this directory
        #[arg(long)]
        dump_graphs: Option<PathBuf>,
        #[arg(required = true)]
        tables: Vec<PathBuf>,
    },
    /// Train from scratch or resume from a checkpoint
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoint.bin and run.jsonl
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Total number of epochs (overrides the config)
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on a sample file
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Print only the machine-readable record
        #[arg(long)]
        json: bool,
    },
    /// Train and score the six cumulative component configurations
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluation samples; the training data when omitted
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Write ablation.jsonl here
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Predict one sample under alternative ego plans
    WhatIf {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Sample index (0-based line in the data file)
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// JSON lines `{"name": .., "plan": [[x, y], ..]}` in the sample's coordinates
        #[arg(long)]
        plans: PathBuf,
        /// Write whatif.jsonl and one SVG per plan here
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Draw a sample (and optionally predictions) as SVG
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Path) -> Result<Model> {
    let ck = checkpoint_load(path)?;
    let mut params = plangraph_core::model::parameter_layout(&ck.model)?;
    params.load_from(&ck.state.params)?;
    Ok(Model::with_params(ck.model, params)?)
}

fn load_prepared(config: &RunConfig, data: &Path) -> Result<Vec<PreparedSample>> {
    prepare_all(&load_samples(data)?, &config.data)
}

fn pick<T>(items: Vec<T>, index: usize) -> Result<T> {
    let n = items.len();
    items
        .into_iter()
        .nth(index)
        .ok_or_else(|| Error::Usage(format!("sample index {index} out of range ({n} samples)")))
}

#[derive(Deserialize)]
struct PlanLine {
    name: String,
    plan: Vec<[f64; 2]>,
}

fn read_plans(path: &Path) -> Result<Vec<(String, Vec<Vec2>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PlanLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push((p.name, p.plan.into_iter().map(|q| Vec2::new(q[0], q[1])).collect()));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Config { preset } => {
            let cfg = match preset {
                Preset::Apollo => RunConfig::apollo(),
                Preset::Ngsim => RunConfig::ngsim(),
            };
            print!("{}", cfg.to_toml());
        }
        Command::Prepare {
            config,
            out,
            ego,
            format,
            dump_graphs: dump_dir,
            tables,
        } => {
            let cfg = RunConfig::load(&config)?;
            let format = format.unwrap_or(cfg.format);
            let recordings = tables
                .iter()
                .map(|t| load_trajectory_table(t, format))
                .collect::<Result<Vec<_>>>()?;
            let selection = ego.map_or(EgoSelection::EveryCompleteAgent, EgoSelection::GivenId);
            let samples = prepare_samples(&recordings, &cfg.data, selection)?;
            save_samples(&samples, &out)?;
            if let Some(dir) = dump_dir {
                ensure_dir(&dir)?;
                for (i, prep) in prepare_all(&samples, &cfg.data)?.iter().enumerate() {
                    write(&dir.join(format!("sample_{i:06}.txt")), &dump_graphs(prep))?;
                }
            }
            println!("{} samples from {} tables -> {}", samples.len(), tables.len(), out.display());
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            epochs,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            let prepared = load_prepared(&cfg, &data)?;
            let mut trainer = match resume {
                Some(path) => {
                    let ck = checkpoint_load(&path)?;
                    if ck.model != cfg.model {
                        return Err(Error::Usage("checkpoint model differs from the config".into()));
                    }
                    Trainer::restore(ck.model, cfg.train.clone(), ck.state)?
                }
                None => Trainer::new(cfg.model.clone(), cfg.train.clone())?,
            };
            ensure_dir(&out)?;
            let mut clock = wall_clock();
            let mut record = RunRecord::default();
            while trainer.epoch < cfg.train.max_epochs {
                let t0 = clock();
                let mut e = trainer.run_epoch(&prepared)?;
                e.seconds = clock() - t0;
                println!("{}", epoch_json(&e));
                record.epochs.push(e);
            }
            write(&out.join("run.jsonl"), &run_record_jsonl(&record))?;
            let ck = Checkpoint {
                model: trainer.model.config.clone(),
                state: trainer.state(),
            };
            checkpoint_save(&ck, &out.join("checkpoint.bin"))?;
        }
        Command::Eval {
            checkpoint,
            config,
            data,
            threads,
            json,
        } => {
            let cfg = RunConfig::load(&config)?;
            let model = load_model(&checkpoint)?;
            let prepared = load_prepared(&cfg, &data)?;
            let report = evaluate_parallel(&model, &prepared, threads.unwrap_or_else(default_threads))?;
            if !json {
                print!("{}", metric_table(&report));
            }
            println!("{}", metric_json(&report));
        }
        Command::Ablate {
            config,
            data,
            eval_data,
            seed,
            epochs,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
            }
            let train_set = load_prepared(&cfg, &data)?;
            let eval_set = match eval_data {
                Some(p) => load_prepared(&cfg, &p)?,
                None => train_set.clone(),
            };
            let mut clock = wall_clock();
            let rows = run_ablation(&train_set, &eval_set, &cfg.model, &cfg.train, &mut clock);
            print!("{}", ablation_table(&rows));
            let jsonl: String = rows.iter().map(|r| ablation_json(r).to_string() + "\n").collect();
            print!("{jsonl}");
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write(&dir.join("ablation.jsonl"), &jsonl)?;
            }
        }
        Command::WhatIf {
            checkpoint,
            config,
            data,
            index,
            plans,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let model = load_model(&checkpoint)?;
            let sample = pick(load_samples(&data)?, index)?;
            let scenario = WhatIfScenario {
                sample,
                plans: read_plans(&plans)?,
            };
            let report = what_if(&scenario, &model, cfg.data.distance_threshold, cfg.data.beta_degrees)?;
            print!("{}", whatif_table(&report));
            let jsonl = whatif_jsonl(&report);
            print!("{jsonl}");
            if let Some(dir) = out {
                ensure_dir(&dir)?;
                write(&dir.join("whatif.jsonl"), &jsonl)?;
                for (i, o) in std::iter::once(&report.base).chain(&report.alternatives).enumerate() {
                    let mut s = scenario.sample.clone();
                    if i > 0 {
                        s.ego_plan = scenario.plans[i - 1].1.clone();
                    }
                    render_scene(&s, Some(&o.predictions), &dir.join(format!("whatif_{i:02}.svg")))?;
                }
            }
        }
        Command::Render {
            config,
            data,
            index,
            checkpoint,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let prep = pick(load_prepared(&cfg, &data)?, index)?;
            let predictions = match checkpoint {
                Some(path) => Some(load_model(&path)?.predict(&prep)?),
                None => None,
            };
            render_scene(&prep.sample, predictions.as_ref(), &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratsf::model::{parse_kv, Checkpoint};
use ratsf::pipeline::{
    self, checkpoint, checkpoint_settings, forecast_next, gen_synthetic, ingest_csv,
    sweep_ablations, sweep_deployment, test_metrics, Dataset, Metrics, MotifSpec, RunConfig,
    SweepReport,
};
use ratsf::training;
use ratsf::{Error, Execution};

#[derive(Parser, Debug)]
#[command(
    name = "ratsf",
    version,
    about = "Retrieval-augmented time-series forecasting"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for initialisation, shuffling, and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Disable worker threads.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Slice the train split into a knowledge-base snapshot.
    BuildKb {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Index embeddings with this checkpoint's encoder.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint and per-epoch history.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the checkpoint path with a `.history.csv` suffix.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Forecast the days after the last observation.
    Forecast {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Write metrics as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Choose content and key lengths, then retrain at the chosen pair.
    SweepDeploy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Key length, retrieval count, and cold-start epoch sweeps.
    SweepAblate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a synthetic motif series as `date,value` CSV.
    GenSynth {
        #[arg(long, default_value_t = 1200)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
        /// Disable motifs and noise.
        #[arg(long)]
        periodic: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::State(_) | Error::Dimension { .. } => 1,
        Error::Ingest { .. }
        | Error::Gap(_)
        | Error::DuplicateDate(_)
        | Error::Format { .. }
        | Error::Io(_) => 2,
        Error::Training(_) | Error::Evaluation(_) => 3,
    }
}

fn load_config(g: &Global) -> ratsf::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply(&parse_kv(&text)?)?;
    }
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = g.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(path: &Path, cfg: &RunConfig) -> ratsf::Result<Dataset> {
    Dataset::prepare(ingest_csv(path)?, cfg.train_fraction, cfg.eval_fraction)
}

fn metrics_table(rows: &[(&str, Metrics)]) -> String {
    let mut s = format!("{:<8} {:>14} {:>14}\n", "split", "mse", "mae");
    for (name, m) in rows {
        s.push_str(&format!("{name:<8} {:>14.6} {:>14.6}\n", m.mse, m.mae));
    }
    s
}

fn write_report(dir: &Path, file: &str, report: &SweepReport) -> ratsf::Result<()> {
    fs::write(dir.join(file), report.to_csv())?;
    println!("{file}\n{}", report.to_table());
    Ok(())
}

fn run(cli: Cli) -> ratsf::Result<()> {
    let cfg = load_config(&cli.global)?;
    let exec = if cli.global.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::GenSynth {
            length,
            out,
            periodic,
        } => {
            let spec = if periodic {
                MotifSpec::periodic()
            } else {
                MotifSpec::default()
            };
            gen_synthetic(cfg.train.seed, length, &spec)?.write_csv(&out)?;
            println!("wrote {length} points to {}", out.display());
        }
        Command::BuildKb { data, out, model } => {
            let data = load_data(&data, &cfg)?;
            let mut kb = data.train_kb(&cfg.model, cfg.kb_stride)?;
            if let Some(path) = model {
                let ck = Checkpoint::load(&path)?;
                let (_, _, stride) = checkpoint_settings(&ck)?;
                kb = data.train_kb(ck.model.config(), stride)?;
                training::reindex(&ck.model, &data.context(), &mut kb, exec)?;
            }
            kb.write_snapshot(std::io::BufWriter::new(fs::File::create(&out)?))?;
            println!(
                "{} entries (L_v={}, L_r={}, stride={}) written to {}",
                kb.len(),
                kb.l_v(),
                kb.l_r(),
                kb.stride(),
                out.display()
            );
        }
        Command::Train { data, out, history } => {
            let data = load_data(&data, &cfg)?;
            let outcome = pipeline::train_run(&data, &cfg, exec, |r| {
                eprintln!(
                    "epoch {:>2} [{}] lr {:.3e} train {:.6} eval mse {:.6} mae {:.6}",
                    r.epoch,
                    r.mode.as_str(),
                    r.lr,
                    r.train_loss,
                    r.eval_mse,
                    r.eval_mae
                );
            })?;
            checkpoint(&outcome, &data.stats, cfg.kb_stride).save(&out)?;
            let history = history.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".history.csv");
                p.into()
            });
            fs::write(&history, outcome.history.to_csv())?;
            let best = outcome.best_record();
            println!(
                "best epoch {} ({}): eval mse {:.6} mae {:.6}; checkpoint {}",
                best.epoch,
                best.mode.as_str(),
                best.eval_mse,
                best.eval_mae,
                out.display()
            );
        }
        Command::Forecast { data, model, out } => {
            let ck = Checkpoint::load(&model)?;
            let (stats, mode, stride) = checkpoint_settings(&ck)?;
            let series = ingest_csv(&data)?;
            let fc = forecast_next(&ck.model, &series, &stats, mode, stride, exec)?;
            let mut csv = String::from("date,value\n");
            for (d, v) in &fc {
                csv.push_str(&format!("{d},{v}\n"));
            }
            match out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Evaluate { data, model, csv } => {
            let ck = Checkpoint::load(&model)?;
            let (stats, mode, stride) = checkpoint_settings(&ck)?;
            let data = load_data(&data, &cfg)?.with_stats(stats);
            let m = test_metrics(&data, &ck.model, mode, stride, exec)?;
            print!("{}", metrics_table(&[("test", m)]));
            if let Some(p) = csv {
                fs::write(p, format!("split,mse,mae\ntest,{:?},{:?}\n", m.mse, m.mae))?;
            }
        }
        Command::SweepDeploy { data, out_dir } => {
            let data = load_data(&data, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            let rep = sweep_deployment(&data, &cfg, exec)?;
            write_report(&out_dir, "content_length.csv", &rep.content_length)?;
            write_report(&out_dir, "key_length.csv", &rep.key_length)?;
            let fin = &rep.final_run;
            checkpoint(&fin.trained, &data.stats, rep.final_config.kb_stride)
                .save(&out_dir.join("final.ckpt"))?;
            fs::write(out_dir.join("final.conf"), rep.final_config.to_kv_text())?;
            println!(
                "final L_v={} L_r={}\n{}",
                rep.final_config.model.l_v,
                rep.final_config.model.l_r,
                metrics_table(&[("eval", fin.eval), ("test", fin.test)])
            );
        }
        Command::SweepAblate { data, out_dir } => {
            let data = load_data(&data, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            let rep = sweep_ablations(&data, &cfg, exec)?;
            write_report(&out_dir, "key_length.csv", &rep.key_length)?;
            write_report(&out_dir, "retrieval_count.csv", &rep.retrieval_count)?;
            write_report(&out_dir, "cold_start.csv", &rep.cold_start)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

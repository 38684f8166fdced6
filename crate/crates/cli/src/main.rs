use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvalign_core::harness::{
    cmd_bench, cmd_eval, cmd_eval_identity, cmd_oracle, cmd_render, cmd_train, DepthSource, ExperimentConfig,
    HarnessError, Variant,
};

#[derive(Parser)]
#[command(name = "mvalign", version, about = "Multi-view pixel alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides a config field, e.g. `--set epochs=3` or `--set n_p=[7,7,2]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render the training dataset (PPM color, PFM depth, manifest).
    Render {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant on a rendered dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained weights on held-out scenes.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Training output directory holding `weights/`.
        #[arg(long, required_unless_present = "gt_identity")]
        run: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// gt, gt_plus_structured or gt_plus_independent; defaults to the config.
        #[arg(long)]
        depth_source: Option<DepthSource>,
        /// Score ground-truth renders against themselves instead.
        #[arg(long)]
        gt_identity: bool,
    },
    /// Analytic cost table and measured attention timings.
    Bench {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-check fast paths against brute-force references.
    Oracle {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    table.insert(key.to_string(), value);
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, HarnessError> {
    let base = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut table: toml::Table = toml::from_str(&base.to_toml()).expect("config serializes to a table");
    for spec in &args.overrides {
        apply_override(&mut table, spec)?;
    }
    let mut cfg = ExperimentConfig::from_toml(&toml::to_string(&table).expect("table serializes"))?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    Ok(cfg)
}

fn save_effective(cfg: &ExperimentConfig, out: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out).map_err(|source| HarnessError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    cfg.save(&out.join("config.toml"))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Config { cfg } => print!("{}", load_config(&cfg)?.to_toml()),
        Command::Render { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let manifest = cmd_render(&cfg, &out)?;
            println!(
                "rendered {} scenes x {} views at {}px into {}",
                manifest.scenes.len(),
                manifest.scenes.first().map_or(0, |s| s.views.len()),
                manifest.resolution,
                out.display()
            );
        }
        Command::Train { cfg, data, out } => {
            let cfg = load_config(&cfg)?;
            save_effective(&cfg, &out)?;
            let record = cmd_train(&cfg, &data, &out)?;
            for e in &record.epochs {
                println!("epoch {:>3}  train {:.6}  val {:.6}", e.epoch, e.train_loss, e.val_loss);
            }
            println!("{} trained in {:.1}s -> {}", cfg.variant, record.wall_clock_s, out.display());
        }
        Command::Eval {
            cfg,
            run,
            out,
            depth_source,
            gt_identity,
        } => {
            let cfg = load_config(&cfg)?;
            let report = if gt_identity {
                cmd_eval_identity(&cfg, &out)?
            } else {
                let run = run.expect("clap enforces --run");
                cmd_eval(&cfg, &run, depth_source.unwrap_or(cfg.eval_depth_source), &out)?
            };
            println!(
                "{}: psnr {:.3}  ssim {:.4}  corr {:.2}  kv/view {}",
                report.variant, report.mean_psnr, report.mean_ssim, report.mean_corr_count, report.kv_floats_per_view
            );
        }
        Command::Bench { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let report = cmd_bench(&cfg, &out)?;
            for r in &report.costs {
                println!(
                    "{:<9} {:>4}px  kv_floats {:>14}  {}",
                    format!("{:?}", r.mode).to_lowercase(),
                    r.resolution,
                    r.kv_floats,
                    if r.feasible { "feasible" } else { "infeasible" }
                );
            }
            println!("truncated time vs pixels R^2 = {:.4}", report.truncated_time_r2);
        }
        Command::Oracle { seeds } => {
            let checks = cmd_oracle(seeds)?;
            let mut ok = true;
            for c in &checks {
                println!(
                    "{} {:<42} worst {:.3e} (tol {:.0e}, {} cases)",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.tolerance,
                    c.cases
                );
                ok &= c.pass;
            }
            if !ok {
                return Err(HarnessError::Config("oracle cross-checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tofdepth::dataset::{self, decode_depth_png, decode_gray_png, encode_depth_png, DatasetConfig};
use tofdepth::flow::GridSpec;
use tofdepth::infill::infill;
use tofdepth::pipeline::{
    metrics_csv_row, run_sequence_with, sweep_threshold, trajectory_line, write_sweep_csv,
    PipelineConfig, METRICS_HEADER,
};
use tofdepth::power::{reduction_vs_tof, system_power, PowerParams};
use tofdepth::ransac::RansacParams;
use tofdepth::synth::table2_experiment;

/// Depth map prediction from monocular images with an adaptively fired depth sensor.
#[derive(Parser)]
#[command(name = "tofdepth", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the controller over a sequence and write per-frame metrics.
    Run(RunArgs),
    /// Run once per threshold and write the duty cycle / error trade-off.
    Sweep(SweepArgs),
    /// Print system power and savings for a duty cycle.
    Power(PowerArgs),
    /// Robust vs. plain pose error on synthetic corrupted flow.
    Table2(Table2Args),
    /// Fill missing pixels of a depth map from a reference frame.
    Infill(InfillArgs),
}

#[derive(Args)]
struct SequenceArgs {
    /// Directory with rgb.txt, depth.txt and the images they list.
    #[arg(long)]
    dataset: PathBuf,
    /// Camera config (key = value).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    limit: usize,
    /// Median infill kernel for predicted maps (odd, >= 3).
    #[arg(long, value_name = "K")]
    median_fill: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    seq: SequenceArgs,
    #[arg(long, default_value_t = 4.0, value_parser = positive)]
    threshold: f64,
    /// Write every output depth map as a 16-bit PNG under <out>/depth.
    #[arg(long)]
    emit_depth: bool,
    /// Write <out>/trajectory.txt.
    #[arg(long)]
    emit_trajectory: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    seq: SequenceArgs,
    /// Comma-separated inlier thresholds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16", value_parser = positive)]
    thresholds: Vec<f64>,
}

#[derive(Args)]
struct PowerArgs {
    /// Duty cycle in percent.
    #[arg(long, default_value_t = 15.0)]
    dc: f64,
    #[arg(long, default_value_t = 1.0)]
    p_tof_min: f64,
    #[arg(long, default_value_t = 5.0)]
    p_tof_max: f64,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    p_tof_step: f64,
}

#[derive(Args)]
struct Table2Args {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

#[derive(Args)]
struct InfillArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    ref_image: PathBuf,
    #[arg(long)]
    ref_depth: PathBuf,
    #[arg(long)]
    cur_image: PathBuf,
    #[arg(long)]
    cur_depth: PathBuf,
    /// Filled depth PNG to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4.0, value_parser = positive)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn load(seq: &SequenceArgs) -> Result<(DatasetConfig, Vec<dataset::AssociatedFrame>)> {
    if !seq.dataset.is_dir() {
        bail!("dataset directory {} does not exist", seq.dataset.display());
    }
    let cfg = dataset::read_config(&seq.config)?;
    let frames =
        dataset::load_sequence(&seq.dataset, &cfg.intrinsics, cfg.max_time_diff, seq.limit)
            .with_context(|| format!("loading {}", seq.dataset.display()))?;
    Ok((cfg, frames))
}

fn pipeline_config(seq: &SequenceArgs, threshold: f64) -> PipelineConfig {
    PipelineConfig {
        grid: GridSpec::default(),
        ransac: RansacParams {
            threshold,
            seed: seq.seed,
            ..RansacParams::default()
        },
        median_fill: seq.median_fill,
        limit: seq.limit,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map(|x| format!("{x:.3}{unit}"))
        .unwrap_or_else(|| "n/a".into())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (cfg, frames) = load(&args.seq)?;
    let out = &args.seq.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let depth_dir = out.join("depth");
    if args.emit_depth {
        fs::create_dir_all(&depth_dir)
            .with_context(|| format!("creating {}", depth_dir.display()))?;
    }
    let mut metrics = create(&out.join("metrics.csv"))?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    let mut trajectory = if args.emit_trajectory {
        let mut t = create(&out.join("trajectory.txt"))?;
        writeln!(t, "# timestamp tx ty tz qx qy qz qw")?;
        Some(t)
    } else {
        None
    };
    let k = cfg.intrinsics;
    let report = run_sequence_with(
        &frames,
        &k,
        &pipeline_config(&args.seq, args.threshold),
        |d| {
            writeln!(metrics, "{}", metrics_csv_row(&d.into()))?;
            if let Some(t) = trajectory.as_mut() {
                writeln!(t, "{}", trajectory_line(d.timestamp, &d.pose_cumulative))?;
            }
            if args.emit_depth {
                let p = depth_dir.join(format!("{:05}.png", d.frame_index));
                fs::write(&p, encode_depth_png(&d.depth_out, k.depth_scale))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            anyhow::Ok(())
        },
    )??;
    metrics.flush()?;
    if let Some(mut t) = trajectory {
        t.flush()?;
    }
    println!(
        "frames {}  tof {}  DC {:.2}%  MRE {}  MAE {}  RMSE {}",
        report.rows.len(),
        report.tof_frames,
        report.duty_cycle_percent,
        fmt_opt(report.mre_percent, "%"),
        fmt_opt(report.mae_cm, " cm"),
        fmt_opt(report.rmse_cm, " cm"),
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.thresholds.is_empty() {
        bail!("--thresholds must list at least one value");
    }
    let (cfg, frames) = load(&args.seq)?;
    fs::create_dir_all(&args.seq.out)
        .with_context(|| format!("creating {}", args.seq.out.display()))?;
    let rows = sweep_threshold(
        &frames,
        &cfg.intrinsics,
        &pipeline_config(&args.seq, 1.0),
        &args.thresholds,
    )?;
    let mut f = create(&args.seq.out.join("tradeoff.csv"))?;
    write_sweep_csv(&rows, &mut f)?;
    f.flush()?;
    write_sweep_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}

fn cmd_power(args: &PowerArgs) -> Result<()> {
    if args.p_tof_max < args.p_tof_min {
        bail!("--p-tof-max must not be below --p-tof-min");
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "p_tof,dc,system_power_w,reduction_percent")?;
    let steps = ((args.p_tof_max - args.p_tof_min) / args.p_tof_step + 1e-9).floor() as usize;
    for i in 0..=steps {
        let p = PowerParams::with_tof(args.p_tof_min + i as f64 * args.p_tof_step);
        let s = system_power(args.dc, &p)?;
        let r = reduction_vs_tof(args.dc, &p)?;
        writeln!(out, "{},{},{s:.4},{r:.2}", p.p_tof, args.dc)?;
    }
    Ok(())
}

fn cmd_table2(args: &Table2Args) -> Result<()> {
    let report = table2_experiment(args.seed, args.trials)?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "regime,error_without_mm,error_with_mm,reduction_percent"
    )?;
    for (name, r) in [
        ("depth", report.depth),
        ("flow", report.flow),
        ("both", report.both),
    ] {
        writeln!(
            out,
            "{name},{:.4},{:.4},{:.1}",
            1e3 * r.error_without,
            1e3 * r.error_with,
            r.reduction_percent()
        )?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_infill(args: &InfillArgs) -> Result<()> {
    let cfg = dataset::read_config(&args.config)?;
    let k = cfg.intrinsics;
    let gray = |p: &Path| decode_gray_png(&read(p)?).with_context(|| p.display().to_string());
    let depth = |p: &Path| {
        decode_depth_png(&read(p)?, k.depth_scale).with_context(|| p.display().to_string())
    };
    let ransac = RansacParams {
        threshold: args.threshold,
        seed: args.seed,
        ..RansacParams::default()
    };
    let r = infill(
        &gray(&args.ref_image)?,
        &depth(&args.ref_depth)?,
        &gray(&args.cur_image)?,
        &depth(&args.cur_depth)?,
        &k,
        &GridSpec::default(),
        &ransac,
    )?;
    fs::write(&args.out, encode_depth_png(&r.depth_filled, k.depth_scale))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "filled {} pixels  overlap MRE {}",
        r.filled_pixel_count,
        fmt_opt(r.overlap_mre_percent, "%")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Power(a) => cmd_power(a),
        Command::Table2(a) => cmd_table2(a),
        Command::Infill(a) => cmd_infill(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line frontend. The binary is a thin wrapper around [`run`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::geom::{load_scene_file, Point3, Scene};
use crate::harness::{
    interaction_density, read_records_csv, run_scenario, summarize, write_density_csv,
    write_records_csv, write_summary_csv, RunRecord, ScenarioConfig, SummaryStats,
};
use crate::measure::{MeasureConfig, MIN_MEASUREMENTS};
use crate::neighborhood::{build_table, NeighborhoodTable};
use crate::raytrace::{enumerate_paths, RayConfig};
use crate::select::parse_strategies;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DENSITY_FILE: &str = "density.csv";

#[derive(Debug, Parser)]
#[command(
    name = "toasel",
    version,
    about = "Ray-traced ToA measurement selection and positioning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the AP neighborhood look-up table for a scene.
    BuildTable {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = RayConfig::default().max_order)]
        max_order: usize,
        #[command(flatten)]
        threads: ThreadArgs,
    },
    /// Run a Monte Carlo scenario and write records, summary and density CSVs.
    Simulate(SimulateArgs),
    /// Print every propagation path between two points.
    Trace {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        tx: Point3,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rx: Point3,
        #[arg(long, default_value_t = RayConfig::default().max_order)]
        max_order: usize,
    },
    /// Summarize an existing records CSV.
    Stats {
        records: PathBuf,
        /// Also write summary and density CSVs into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "TOASEL_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated, e.g. `all,union,fixed:4`.
    #[arg(long)]
    pub strategies: Option<String>,
    #[arg(long)]
    pub ue_count: Option<usize>,
    #[arg(long)]
    pub max_order: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

fn parse_point(s: &str) -> Result<Point3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("expected x,y,z: {e}"))?;
    match parts.as_slice() {
        &[x, y, z] if x.is_finite() && y.is_finite() && z.is_finite() => Ok(Point3::new(x, y, z)),
        _ => Err(format!("expected three finite numbers x,y,z, got `{s}`")),
    }
}

/// Failure with its process exit code: 1 for user/config errors, 2 for
/// internal invariant violations.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn user(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::user(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn out_err(e: std::io::Error) -> CliError {
    CliError::user(format!("cannot write output: {e}"))
}

fn with_pool<T: Send>(threads: &ThreadArgs, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads.threads {
        if n == 0 {
            return Err(CliError::user("--threads must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::BuildTable {
            scene,
            out: path,
            max_order,
            threads,
        } => cmd_build_table(&scene, &path, max_order, &threads, out),
        Command::Simulate(args) => cmd_simulate(&args, out),
        Command::Trace {
            scene,
            tx,
            rx,
            max_order,
        } => cmd_trace(&scene, tx, rx, max_order, out),
        Command::Stats { records, out: dir } => cmd_stats(&records, dir.as_deref(), out),
    }
}

pub fn cmd_build_table(
    scene_path: &Path,
    out_path: &Path,
    max_order: usize,
    threads: &ThreadArgs,
    out: &mut dyn Write,
) -> CliResult {
    let scene = load_scene_file(scene_path)?;
    let cfg = MeasureConfig {
        ray: RayConfig::new(max_order)?,
        ..Default::default()
    };
    let table = with_pool(threads, || build_table(&scene, &cfg))??;
    fs::write(out_path, table.save()).map_err(|e| Error::io(out_path, e))?;
    for row in table.rows() {
        let hood: Vec<String> = row.neighbors_sorted[..row.k]
            .iter()
            .map(|id| id.to_string())
            .collect();
        writeln!(out, "AP {}: k={} N=[{}]", row.id, row.k, hood.join(", ")).map_err(out_err)?;
    }
    writeln!(out, "wrote {}", out_path.display()).map_err(out_err)?;
    Ok(())
}

fn resolve_scenario(args: &SimulateArgs) -> CliResult<(ScenarioConfig, Scene, NeighborhoodTable)> {
    let mut cfg = ScenarioConfig::load_file(&args.config)?;
    if let Some(p) = &args.scene {
        cfg.scene = p.clone();
    }
    if let Some(p) = &args.table {
        cfg.table = Some(p.clone());
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(list) = &args.strategies {
        cfg.strategies = parse_strategies(list)?;
    }
    if let Some(n) = args.ue_count {
        cfg.ue_count = n;
    }
    if let Some(m) = args.max_order {
        cfg.measure.ray = RayConfig::new(m)?;
    }
    if let Some(sigma) = args.noise_sigma {
        cfg.measure.noise_sigma_s = sigma;
    }
    let scene = load_scene_file(&cfg.scene)?;
    cfg.validate(&scene)?;
    let table = match &cfg.table {
        Some(p) => NeighborhoodTable::load_file(p)?,
        None => build_table(&scene, &cfg.measure)?,
    };
    if table.ap_count() != scene.ap_count() {
        return Err(CliError::user(format!(
            "table covers {} APs but the scene has {}",
            table.ap_count(),
            scene.ap_count()
        )));
    }
    Ok((cfg, scene, table))
}

fn check_records(cfg: &ScenarioConfig, records: &[RunRecord]) -> CliResult {
    if records.len() != cfg.ue_count * cfg.strategies.len() {
        return Err(CliError::internal(format!(
            "expected {} records, got {}",
            cfg.ue_count * cfg.strategies.len(),
            records.len()
        )));
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.is_success() && r.selected.len() < MIN_MEASUREMENTS)
    {
        return Err(CliError::internal(format!(
            "UE {} / {}: solved with only {} measurements",
            r.ue_idx,
            r.strategy,
            r.selected.len()
        )));
    }
    Ok(())
}

/// Records, summary and density CSV bytes plus the summary they encode.
type Rendered = (Vec<u8>, Vec<u8>, Vec<u8>, Vec<SummaryStats>);

fn render_outputs(records: &[RunRecord]) -> CliResult<Rendered> {
    let mut rec = Vec::new();
    write_records_csv(&mut rec, records)?;
    let summary = summarize(records);
    let mut sum = Vec::new();
    write_summary_csv(&mut sum, &summary)?;
    // fewer than two UEs with interaction counts leaves the density empty
    let series = interaction_density(records).unwrap_or_default();
    let mut den = Vec::new();
    write_density_csv(&mut den, &series)?;
    Ok((rec, sum, den, summary))
}

/// Writes every file or none: files are staged under temporary names and
/// renamed once all writes succeed.
fn write_all_or_nothing(dir: &Path, files: &[(&str, &[u8])]) -> CliResult {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (dir.join(format!(".{name}.partial")), dir.join(name)))
        .collect();
    let cleanup = |upto: usize| {
        for (tmp, _) in &staged[..upto] {
            let _ = fs::remove_file(tmp);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    };
    for (i, ((tmp, _), (_, bytes))) in staged.iter().zip(files).enumerate() {
        if let Err(e) = fs::write(tmp, bytes) {
            cleanup(i + 1);
            return Err(Error::io(tmp, e).into());
        }
    }
    for (i, (tmp, dst)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, dst) {
            for (_, done) in &staged[..i] {
                let _ = fs::remove_file(done);
            }
            cleanup(staged.len());
            return Err(Error::io(dst, e).into());
        }
    }
    Ok(())
}

fn print_summary(out: &mut dyn Write, summary: &[SummaryStats]) -> CliResult {
    writeln!(
        out,
        "{:<14} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10}",
        "strategy", "count", "failed", "median_m", "mean_m", "p90_m", "iqr_m"
    )
    .map_err(out_err)?;
    for s in summary {
        match s.stats {
            Some(p) => writeln!(
                out,
                "{:<14} {:>6} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                s.strategy.to_string(),
                s.count,
                s.failed,
                p.median,
                p.mean,
                p.p90,
                p.iqr
            ),
            None => writeln!(
                out,
                "{:<14} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10}",
                s.strategy.to_string(),
                s.count,
                s.failed,
                "-",
                "-",
                "-",
                "-"
            ),
        }
        .map_err(out_err)?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> CliResult {
    let (cfg, scene, table) = resolve_scenario(args)?;
    let records = with_pool(&args.threads, || run_scenario(&cfg, &scene, &table))??;
    check_records(&cfg, &records)?;
    let (rec, sum, den, summary) = render_outputs(&records)?;
    write_all_or_nothing(
        &args.out,
        &[
            (RECORDS_FILE, &rec),
            (SUMMARY_FILE, &sum),
            (DENSITY_FILE, &den),
        ],
    )?;
    print_summary(out, &summary)?;
    writeln!(
        out,
        "wrote {} records to {}",
        records.len(),
        args.out.display()
    )
    .map_err(out_err)?;
    Ok(())
}

pub fn cmd_trace(
    scene_path: &Path,
    tx: Point3,
    rx: Point3,
    max_order: usize,
    out: &mut dyn Write,
) -> CliResult {
    let scene = load_scene_file(scene_path)?;
    let cfg = RayConfig::new(max_order)?;
    for (name, p) in [("tx", tx), ("rx", rx)] {
        if !scene.bounds().contains(p.xy()) {
            return Err(CliError::user(format!(
                "{name} {p} is outside the scene bounds"
            )));
        }
    }
    if tx == rx {
        return Err(CliError::user("tx and rx coincide"));
    }
    let paths = enumerate_paths(tx, rx, &scene, &cfg);
    let best = paths
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.preference(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| CliError::user(format!("no path within max order {max_order}")))?;
    for (i, p) in paths.iter().enumerate() {
        let verts: Vec<String> = p.vertices.iter().map(|v| v.to_string()).collect();
        writeln!(
            out,
            "{} interactions={} delay_s={:e} length_m={} vertices={}",
            if i == best { "*" } else { " " },
            p.interactions,
            p.delay_s,
            p.length_m,
            verts.join(" -> ")
        )
        .map_err(out_err)?;
    }
    writeln!(out, "{} path(s); * marks the minimum delay", paths.len()).map_err(out_err)?;
    Ok(())
}

pub fn cmd_stats(records_path: &Path, dir: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let file = fs::File::open(records_path).map_err(|e| Error::io(records_path, e))?;
    let records = read_records_csv(file)?;
    let (_, sum, den, summary) = render_outputs(&records)?;
    print_summary(out, &summary)?;
    if let Some(dir) = dir {
        write_all_or_nothing(dir, &[(SUMMARY_FILE, &sum), (DENSITY_FILE, &den)])?;
    }
    Ok(())
}

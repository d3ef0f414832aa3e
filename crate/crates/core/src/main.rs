use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use doubletopt::io::config::RunConfig;
use doubletopt::io::field::{read_field, write_field};
use doubletopt::io::geometry::{read_geometry, write_geometry};
use doubletopt::io::results::{self, BlockRecord};
use doubletopt::model::{build_milp, BlockProblem, ScenarioConfig};
use doubletopt::scenario::{solve_prepared, Prepared};
use doubletopt::synthetic::{synthetic_city, SynthConfig};
use doubletopt::units::Rate;

#[derive(Parser)]
#[command(
    name = "doubletopt",
    version,
    about = "Optimal groundwater well doublets per urban block"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lay out candidate wells only.
    Prep(PrepArgs),
    /// Prepare, solve and audit every block under each scenario.
    Solve(SolveArgs),
    /// Re-check written solutions against the inputs.
    Audit(AuditArgs),
    /// Recompute scenario reports from the per-block tables.
    Report(ReportArgs),
    /// Write a synthetic city and groundwater field.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Inputs {
    /// Block and building polygons (GeoJSON).
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Groundwater samples (CSV).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// `q_min,r_delta` with q_min in l/s; repeatable. Defaults to the
    /// config's scenarios or the six-scenario matrix.
    #[arg(long = "scenario", value_parser = parse_scenario)]
    scenarios: Vec<(f64, f64)>,
    /// Time limit per block solve, s.
    #[arg(long)]
    budget_time: Option<f64>,
    /// Node limit per block solve.
    #[arg(long)]
    budget_nodes: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record solve times in the block tables (output is then not reproducible).
    #[arg(long)]
    timings: bool,
    /// Also write the program of every block as text.
    #[arg(long)]
    dump_instances: bool,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Directory written by `solve`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `solve`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    blocks: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> Result<(f64, f64), String> {
    let (q, r) = s.split_once(',').ok_or("expected q_min,r_delta")?;
    let q: f64 = q.trim().parse().map_err(|_| format!("bad q_min {q:?}"))?;
    let r: f64 = r.trim().parse().map_err(|_| format!("bad r_delta {r:?}"))?;
    Ok((q, r))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prep(a) => prep(a),
        Command::Solve(a) => solve(a),
        Command::Audit(a) => audit(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}

struct Loaded {
    cfg: RunConfig,
    prepared: Prepared,
    workers: usize,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn pick(flag: Option<PathBuf>, cfg: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| cfg.clone())
        .with_context(|| format!("no {what} given; pass --{what} or set paths.{what} in the config"))
}

/// Read inputs and prepare the candidates of every block.
fn load(inputs: Inputs, cfg: RunConfig) -> Result<Loaded> {
    let geometry = pick(inputs.geometry, &cfg.paths.geometry, "geometry")?;
    let field_path = pick(inputs.field, &cfg.paths.field, "field")?;
    let workers = match inputs.workers {
        Some(w) => w,
        None => cfg.workers().map_err(anyhow::Error::msg)?,
    };
    let set = read_geometry(&geometry)?;
    let field = read_field(&field_path)?.with_max_distance(cfg.field.max_lookup_distance_m);
    let prepared = set.prepare(&field, &cfg.prep_config(), workers)?;
    Ok(Loaded {
        cfg,
        prepared,
        workers,
    })
}

fn prep(a: PrepArgs) -> Result<ExitCode> {
    let cfg = load_config(a.inputs.config.as_deref())?;
    let out = pick(a.out, &cfg.paths.out, "out")?;
    let l = load(a.inputs, cfg)?;
    results::write_prep(&out, &l.prepared)?;
    let failed = l.prepared.iter().filter(|p| p.is_err()).count();
    let wells: usize = l.prepared.iter().flatten().map(|c| c.well_count()).sum();
    println!(
        "prepared {} blocks ({failed} failed), {wells} candidate wells -> {}",
        l.prepared.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    let mut cfg = load_config(a.inputs.config.as_deref())?;
    if let Some(t) = a.budget_time {
        cfg.solver.max_time_s = t;
    }
    if let Some(n) = a.budget_nodes {
        cfg.solver.max_nodes = n;
    }
    cfg.validate().map_err(anyhow::Error::msg)?;
    let scenarios = if a.scenarios.is_empty() {
        cfg.scenario_configs().map_err(anyhow::Error::msg)?
    } else {
        a.scenarios
            .iter()
            .map(|&(q, r)| ScenarioConfig::new(Rate::from_l_per_s(q), r, cfg.model.delta_min_m))
            .collect::<Result<_, _>>()?
    };
    let out = pick(a.out, &cfg.paths.out, "out")?;
    let timings = a.timings || cfg.run.timings;
    let l = load(a.inputs, cfg)?;
    if a.dump_instances {
        dump_instances(&out, &l.prepared, &scenarios)?;
    }
    let runs = solve_prepared(&l.prepared, &scenarios, &l.cfg.budget(), l.workers)?;
    results::write_results(&out, &l.prepared, &runs, timings)?;
    for run in &runs {
        let r = &run.report;
        println!(
            "{}: {} doublets in {} blocks ({} without), total {}",
            run.scenario.tag(),
            r.total_doublets,
            r.blocks_with,
            r.blocks_without,
            r.total_rate
        );
        let failed: Vec<_> = run.failures().collect();
        if !failed.is_empty() {
            println!("  {} failed blocks:", failed.len());
            for f in failed {
                println!("    {f}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn dump_instances(out: &Path, prepared: &Prepared, scenarios: &[ScenarioConfig]) -> Result<()> {
    for s in scenarios {
        let dir = out.join("instances").join(s.tag());
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for c in prepared.iter().flatten().filter(|c| !c.lines.is_empty()) {
            let p = BlockProblem::new(c.block_id.clone(), c.lines.clone(), *s)?;
            let path = dir.join(format!("{}.txt", c.block_id));
            std::fs::write(&path, build_milp(&p).dump())
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn audit(a: AuditArgs) -> Result<ExitCode> {
    let cfg = load_config(a.inputs.config.as_deref())?;
    let out = pick(a.out, &cfg.paths.out, "out")?;
    let manifest = results::read_manifest(&out)?;
    let scenarios = manifest.scenario_configs().map_err(anyhow::Error::msg)?;
    let l = load(a.inputs, cfg)?;
    let mut problems = 0;
    for (s, entry) in scenarios.iter().zip(&manifest.scenarios) {
        let tag = &entry.tag;
        let found = results::audit_files(
            &l.prepared,
            s,
            &results::read_wells(&out, tag)?,
            &results::read_doublets(&out, tag)?,
            &results::read_blocks(&out, tag)?,
        );
        for p in &found {
            eprintln!("{tag}: {p}");
        }
        problems += found.len();
        println!("{tag}: {}", if found.is_empty() { "ok" } else { "FAILED" });
    }
    Ok(if problems == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let written = results::read_report(&a.out)?;
    let manifest = results::read_manifest(&a.out)?;
    if written.len() != manifest.scenarios.len() {
        bail!(
            "report has {} rows but the manifest lists {} scenarios",
            written.len(),
            manifest.scenarios.len()
        );
    }
    let mut problems = 0;
    for (row, entry) in written.iter().zip(&manifest.scenarios) {
        let blocks: Vec<BlockRecord> = results::read_blocks(&a.out, &entry.tag)?;
        let found = results::compare_reports(row, &blocks);
        for p in &found {
            eprintln!("{}: {p}", entry.tag);
        }
        problems += found.len();
        let analysed = blocks
            .iter()
            .filter(|b| matches!(b, BlockRecord::Solved(_)))
            .count();
        println!(
            "{}: {} blocks analysed, {} with doublets, {} without: {}",
            entry.tag,
            analysed,
            row.blocks_with,
            row.blocks_without,
            if found.is_empty() { "ok" } else { "MISMATCH" }
        );
    }
    Ok(if problems == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let city = synthetic_city(&SynthConfig {
        blocks: a.blocks,
        seed: a.seed,
        ..Default::default()
    });
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let geometry = a.out.join("city.geojson");
    std::fs::write(&geometry, write_geometry(&city.blocks))
        .with_context(|| format!("writing {}", geometry.display()))?;
    let field = a.out.join("field.csv");
    let file = std::fs::File::create(&field).with_context(|| format!("creating {}", field.display()))?;
    write_field(std::io::BufWriter::new(file), &city.field)
        .with_context(|| format!("writing {}", field.display()))?;
    println!(
        "{} blocks -> {}, {}",
        city.blocks.len(),
        geometry.display(),
        field.display()
    );
    Ok(ExitCode::SUCCESS)
}

//! `opima` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opima::report::{self, Artifact};
use opima::validation::run_suite;
use opima::{Error, RunConfig, WorkloadCatalog};

#[derive(Parser)]
#[command(name = "opima", version, about = "Optical processing-in-memory simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in model name or network JSON path.
    #[arg(long, global = true)]
    workload: Option<String>,
    #[arg(long, global = true, value_parser = ["4", "8"])]
    bits: Option<String>,
    /// Run the bit-exact functional simulation and compare with the reference.
    #[arg(long, global = true)]
    exact_mode: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Map and account one workload; write per-layer and summary artifacts.
    Simulate,
    /// Sweep the subarray group count.
    Dse,
    /// Run the built-in self-checks.
    Validate {
        /// Validate the networks in this directory instead of the built-ins.
        #[arg(long)]
        catalog_dir: Option<PathBuf>,
    },
    /// Every built-in model at 4 and 8 bits, plus the power and catalog tables.
    Report,
}

/// Exit codes, one per error category.
mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const MAPPING: u8 = 3;
    pub const CONFLICT: u8 = 4;
    pub const VALIDATION: u8 = 5;
    pub const IO: u8 = 6;
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::UnknownLayerKind(_) | Error::Shape { .. } => exit::CONFIG,
        Error::Mapping(_) => exit::MAPPING,
        Error::Conflict { .. } | Error::Interference(_) => exit::CONFLICT,
        Error::Validation(_) => exit::VALIDATION,
        Error::Io { .. } => exit::IO,
        Error::Domain(_) => exit::OTHER,
    }
}

fn load_config(c: &Common) -> opima::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = &c.workload {
        cfg.workload = w.clone();
    }
    if let Some(b) = &c.bits {
        cfg.operand_bits = b.parse().expect("clap restricts --bits");
    }
    cfg.exact_mode |= c.exact_mode;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(cfg: &RunConfig, artifacts: &[Artifact]) -> opima::Result<()> {
    for p in report::write_artifacts(&cfg.out, artifacts)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn simulate(cfg: &RunConfig) -> opima::Result<()> {
    let r = report::simulate(cfg)?;
    let s = &r.summary;
    println!("{} ({}-bit): {} layers, {} MACs", s.workload, s.operand_bits, s.layers, s.mac_count);
    println!("processing {:.3} ns, writeback {:.3} ns", s.processing_latency_ns, s.writeback_latency_ns);
    println!("energy {:.3} pJ, EPB {:.4e} J/bit, {:.2} FPS, {:.4} FPS/W", s.energy_pj, s.epb_j_per_bit, s.fps, s.fps_per_watt);
    write(cfg, &r.artifacts())?;
    if let Some(f) = &r.functional {
        print!("{}", f.render());
        if !f.passed() {
            return Err(Error::Validation(format!("functional mismatch in {}", f.mismatched.join(", "))));
        }
    }
    Ok(())
}

fn dse(cfg: &RunConfig) -> opima::Result<()> {
    let d = report::dse(cfg)?;
    print!("{}", d.csv());
    println!("best group count: G={}", d.best);
    write(cfg, &d.artifacts())
}

fn validate(cfg: &RunConfig, catalog_dir: Option<&PathBuf>) -> opima::Result<()> {
    let catalog = match catalog_dir {
        Some(d) => WorkloadCatalog::from_dir(d),
        None => WorkloadCatalog::builtin(),
    };
    let checks = run_suite(catalog, &cfg.device.loss);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("failed: {}", failed.join(", "))))
    }
}

fn full_report(cfg: &RunConfig) -> opima::Result<()> {
    let rows = report::model_report(cfg)?;
    let models = report::models_csv(&rows);
    print!("{models}");
    let power = opima::perf::power_breakdown(&cfg.geometry, &cfg.power, opima::perf::PowerMode::Both);
    let catalog = WorkloadCatalog::builtin()?;
    write(
        cfg,
        &[
            ("models.csv".into(), models),
            ("power_breakdown.csv".into(), report::power_csv(&power)),
            ("catalog.csv".into(), report::catalog_csv(&catalog)),
        ],
    )
}

fn run(cli: &Cli) -> opima::Result<()> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Dse => dse(&cfg),
        Command::Validate { catalog_dir } => validate(&cfg, catalog_dir.as_ref()),
        Command::Report => full_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(exit::OTHER);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsii_core::phantom::{CylinderParams, FusiformParams, PhantomSpec, SphereParams};
use rsii_core::pipeline::{read_report_json, run_pipeline, DirLock, InputSpec, PipelineConfig, Stage};
use rsii_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

/// Relative structural integrity maps of pressurized vessel walls.
#[derive(Parser)]
#[command(name = "rsii", version)]
struct Cli {
    /// -v for info, -vv for debug logging.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic image pair and label map into the output directory.
    Phantom {
        #[command(flatten)]
        common: Common,
        /// Replace the configured input with a default phantom of this shape.
        #[arg(long, value_enum)]
        shape: Option<Shape>,
        /// Override the phantom inflation (fractional, e.g. 0.03).
        #[arg(long)]
        inflation: Option<f64>,
    },
    /// Extract the wall surface, frames and curvature from labels.mhd.
    Surface(Common),
    /// Register moving.mhd onto fixed.mhd.
    Register(Common),
    /// Solve the wall problem and recover tension on surface.vtk.
    Tension(Common),
    /// Strain, SII, RSII and the percentile report.
    Indices(Common),
    /// Run every stage, or resume from one.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_stage)]
        from: Option<Stage>,
    },
    /// Print the effective configuration as JSON.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output (artifact) directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pressure_kpa: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    thickness_mm: Option<f64>,
    /// Element layers through the wall.
    #[arg(long)]
    layers: Option<usize>,
    /// Seed for the curvature fits and the registration record.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Cylinder,
    Sphere,
    Fusiform,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(o) = &self.output {
            c.output_dir = o.clone();
        }
        if let Some(p) = self.pressure_kpa {
            c.pressure_kpa = p;
        }
        if let Some(t) = self.thickness_mm {
            c.wall_thickness_mm = t;
        }
        if let Some(l) = self.layers {
            c.layers = l;
        }
        if let Some(s) = self.seed {
            c.geometry.mlesac.seed = s;
            c.registration.seed = s;
        }
        Ok(c)
    }
}

fn phantom_config(mut c: PipelineConfig, shape: Option<Shape>, inflation: Option<f64>) -> Result<PipelineConfig, Error> {
    if let Some(shape) = shape {
        c.input = InputSpec::Phantom(match shape {
            Shape::Cylinder => PhantomSpec::Cylinder(CylinderParams::default()),
            Shape::Sphere => PhantomSpec::Sphere(SphereParams::default()),
            Shape::Fusiform => PhantomSpec::Fusiform(FusiformParams::default()),
        });
    }
    let InputSpec::Phantom(spec) = &mut c.input else {
        return Err(Error::Config("the phantom command needs a phantom input; pass --shape or a phantom config".into()));
    };
    if let Some(a) = inflation {
        match spec {
            PhantomSpec::Cylinder(p) => p.inflation = a,
            PhantomSpec::Sphere(p) => p.inflation = a,
            PhantomSpec::Fusiform(p) => p.inflation = a,
        }
    }
    Ok(c)
}

fn single_stage(config: &PipelineConfig, stage: Stage) -> Result<(), Error> {
    config.validate(stage == Stage::Input)?;
    let _lock = DirLock::acquire(&config.output_dir)?;
    stage.run(config, &config.output_dir)?;
    for name in stage.artifacts() {
        let p = config.output_dir.join(name);
        if p.is_file() {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Phantom { common, shape, inflation } => single_stage(&phantom_config(common.config()?, shape, inflation)?, Stage::Input),
        Command::Surface(c) => single_stage(&c.config()?, Stage::Surface),
        Command::Register(c) => single_stage(&c.config()?, Stage::Register),
        Command::Tension(c) => single_stage(&c.config()?, Stage::Tension),
        Command::Indices(c) => {
            let config = c.config()?;
            single_stage(&config, Stage::Indices)?;
            let report = read_report_json(&config.output_dir.join("report.json"))?;
            print_summary(&report);
            Ok(())
        }
        Command::Run { common, from } => {
            let report = run_pipeline(&common.config()?, from)?;
            print_summary(&report);
            Ok(())
        }
        Command::Config(c) => {
            let config = c.config()?;
            config.validate(false)?;
            println!("{}", config.to_json());
            Ok(())
        }
    }
}

fn print_summary(r: &rsii_core::pipeline::Report) {
    println!("t_o    {:.4} {}", r.tension.p99, r.tension.units);
    println!("eps_o  {:.4} {}", r.strain.p99, r.strain.units);
    println!("SII_o  {:.4} {}", r.sii.p99, r.sii.units);
    println!("RSII_o {:.4}", r.rsii.p99);
    println!("vertices {} used, {} masked", r.vertices.used, r.vertices.masked.total);
    if r.rsii_degenerate {
        println!("degenerate RSII: mean |SII| is zero");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                _ => EXIT_STAGE,
            })
        }
    }
}

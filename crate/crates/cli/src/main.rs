use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gate_cli::pipeline::{default_model, wagon_id_document, write_json};
use gate_cli::service::{serve, ServeOptions};
use gate_cli::{evaluate, run_pipeline, CliError, GateConfig, Stage};
use gate_core::imgcore::pnm;
use gate_core::pantograph::{detect_pantograph, FeatureModel};
use gate_core::session::{build_pyramid_from_pgm, build_pyramid_into, DiskSink};
use gate_core::synth::roof::pantograph_template;
use gate_core::synth::scenario::{write_passage, ScenarioSpec};
use gate_core::thermal::{colorize_default, default_range, lut, lut_indices, read_tmap, scan};

#[derive(Parser)]
#[command(name = "gate", version, about = "Train inspection gate: analysis pipelines, session store and acquisition manager")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic passage with ground truth.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// TOML scenario description; the seed flag overrides its seed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Wagon identifier (12 characters).
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        no_pantograph: bool,
        /// Render only the left thermal chain.
        #[arg(long)]
        single_chain: bool,
    },
    /// Locate the wagon identifier on a side mosaic.
    SegmentId {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Block statistics, alarms and chain cross-check of thermal mosaics.
    ThermalScan {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a false-colour PPM of the left chain.
        #[arg(long)]
        preview: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Find the pantograph on a roof mosaic.
    DetectPantograph {
        /// Roof-view mosaic.
        #[arg(long, visible_alias = "scene")]
        input: PathBuf,
        /// Feature model file; the built-in template otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Extract a feature model from a template image.
    BuildModel {
        /// Template PGM; the built-in template otherwise.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Analyse raw passages into session bundles.
    Run {
        #[arg(long, required = true, num_args = 1..)]
        raw: Vec<PathBuf>,
        /// Sessions root.
        #[arg(long)]
        out: PathBuf,
        /// Session id (single passage only); the raw directory name otherwise.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Cut a PGM (or a .tmap as false colour) into a tile pyramid.
    Tile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score sessions against the ground truth of their raw passages.
    Evaluate {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        raw: Vec<PathBuf>,
        /// Text report destination; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the acquisition manager and the session service.
    Serve {
        #[arg(long)]
        sessions: PathBuf,
        #[arg(long, env = "GATE_BIND_ADDR", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Run the five simulated portal sensors against the manager.
        #[arg(long)]
        simulate: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(out: Option<&Path>, value: &impl serde::Serialize) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, value).map_err(|e| CliError::Runtime(e.to_string())),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn load_spec(path: Option<&Path>) -> Result<ScenarioSpec, CliError> {
    let Some(p) = path else { return Ok(ScenarioSpec::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}

fn load_model(path: Option<&Path>, cfg: &GateConfig) -> Result<FeatureModel, CliError> {
    match path {
        Some(p) => FeatureModel::load(p).map_err(CliError::invalid),
        None => default_model(cfg),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Synth {
            seed,
            out,
            config,
            id,
            no_pantograph,
            single_chain,
        } => {
            let mut spec = load_spec(config.as_deref())?;
            spec.seed = seed;
            if let Some(id) = id {
                spec.wagon.id = id;
            }
            spec.pantograph.present &= !no_pantograph;
            spec.thermal_right &= !single_chain;
            spec.validate().map_err(CliError::invalid)?;
            write_passage(&spec, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
            eprintln!("wrote {}", out.display());
        }
        Cmd::SegmentId { input, seed, out, common } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            let img = pnm::read_pgm(&input).map_err(CliError::invalid)?;
            emit(out.as_deref(), &wagon_id_document(&img, &cfg, seed)?)?;
        }
        Cmd::ThermalScan {
            left,
            right,
            out,
            preview,
            common,
        } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            let l = read_tmap(&left).map_err(CliError::invalid)?;
            let r = right.map(read_tmap).transpose().map_err(CliError::invalid)?;
            let report = scan(&l, r.as_ref(), &cfg.thermal).map_err(CliError::at(Stage::Thermal))?;
            if let Some(p) = preview {
                pnm::write_ppm(p, &colorize_default(&l)).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            emit(out.as_deref(), &report)?;
        }
        Cmd::DetectPantograph {
            input,
            model,
            seed,
            out,
            common,
        } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            let model = load_model(model.as_deref(), &cfg)?;
            let img = pnm::read_pgm(&input).map_err(CliError::invalid)?;
            let det = detect_pantograph(&img, &model, &cfg.pantograph, seed).map_err(CliError::at(Stage::Pantograph))?;
            emit(out.as_deref(), &det)?;
        }
        Cmd::BuildModel { template, out, common } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            let img = match template {
                Some(p) => pnm::read_pgm(p).map_err(CliError::invalid)?,
                None => pantograph_template(0),
            };
            let model = FeatureModel::build(&img, &cfg.pantograph.sift).map_err(CliError::at(Stage::Pantograph))?;
            model.save(&out).map_err(|e| CliError::Runtime(e.to_string()))?;
            eprintln!("{} keypoints -> {}", model.keypoints.len(), out.display());
        }
        Cmd::Run {
            raw,
            out,
            id,
            model,
            common,
        } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            if id.is_some() && raw.len() > 1 {
                return Err(CliError::Validation("--id needs exactly one --raw directory".into()));
            }
            let model = load_model(model.as_deref(), &cfg)?;
            for dir in &raw {
                let m = run_pipeline(dir, &out, &cfg, Some(&model), id.as_deref())?;
                eprintln!("session {} -> {}", m.id, out.join(&m.id).display());
            }
        }
        Cmd::Tile { input, out } => {
            let info = if input.extension().is_some_and(|e| e == "tmap") {
                let m = read_tmap(&input).map_err(CliError::invalid)?;
                let (lo, hi) = default_range(&m);
                let idx = lut_indices(&m, lo, hi).map_err(CliError::invalid)?;
                build_pyramid_into(&idx, &mut DiskSink::colored(&out, lut()))
            } else {
                build_pyramid_from_pgm(&input, &mut DiskSink::gray(&out))
            }
            .map_err(CliError::at(Stage::Tiling))?;
            write_json(&out.join("pyramid.json"), &info).map_err(|e| CliError::Runtime(e.to_string()))?;
            eprintln!("{} levels -> {}", info.levels.len(), out.display());
        }
        Cmd::Evaluate { sessions, raw, out, json } => {
            let report = evaluate(&sessions, &raw)?;
            let text = report.render();
            match out {
                Some(p) => std::fs::write(&p, &text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
            if let Some(p) = json {
                write_json(&p, &report).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
        }
        Cmd::Serve {
            sessions,
            bind,
            simulate,
            common,
        } => {
            let cfg = GateConfig::load(common.config.as_deref())?;
            let manager = cfg.manager.with_env().map_err(CliError::Validation)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            rt.block_on(serve(ServeOptions {
                bind,
                sessions_root: sessions,
                manager,
                simulate,
            }))
            .map_err(|e| CliError::Runtime(format!("serve: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use simd2nn::config::{parse_config, ExperimentConfig};
use simd2nn::data::{
    encode_patches, extract_patches, load_dataset, load_scene, save_dataset, save_scene,
    synthesize_scene, OCEAN,
};
use simd2nn::experiment::{
    self, build_system, format_ablation_table, run_ablation_suite, run_experiment,
};
use simd2nn::metrics::export_class_map;
use simd2nn::network::Params;
use simd2nn::training::{evaluate, format_history, train};
use simd2nn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "simd2nn",
    version,
    about = "Stacked-metasurface diffractive network for raw IQ terrain classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` with optional `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Arbitrary override, repeatable: `--set key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    batch: Option<String>,
    #[arg(long, global = true)]
    lr: Option<String>,
    #[arg(long = "sample-rate", global = true)]
    sample_rate: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// on|off
    #[arg(long = "train-noise", global = true)]
    train_noise: Option<String>,
    #[arg(long, global = true)]
    layers: Option<String>,
    #[arg(long = "tx-power", global = true, value_name = "DBM")]
    tx_power: Option<String>,
    #[arg(long = "link-distance", global = true, value_name = "M")]
    link_distance: Option<String>,
    /// sim|digital
    #[arg(long, global = true)]
    model: Option<String>,
    /// on|off
    #[arg(long = "phase-rotation", global = true)]
    phase_rotation: Option<String>,
    /// Output directory for run artifacts.
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut a scene into labeled patches.
    Patch {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and deploy; writes metrics, history, parameters and class map.
    Train {
        /// Scene file (default: synthetic scene from the config).
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Train on a patch file instead; no class map is written.
        #[arg(long, conflicts_with = "scene")]
        data: Option<PathBuf>,
    },
    /// Classify a scene with stored parameters.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Run the eight-row ablation table.
    Ablate,
    /// Write the layer transmission matrix as `row col re im` lines.
    DumpMatrix {
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    fn overrides(&self) -> std::result::Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        let named = [
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("sample_rate", &self.sample_rate),
            ("seed", &self.seed),
            ("train_noise", &self.train_noise),
            ("layers", &self.layers),
            ("tx_power_dbm", &self.tx_power),
            ("link_distance_m", &self.link_distance),
            ("model", &self.model),
            ("phase_rotation", &self.phase_rotation),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(kv.clone(), "expected --set key=value"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
            None => None,
        };
        parse_config(text.as_deref(), &self.overrides()?)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.common.resolve()?;
    match cli.command {
        Command::Synth { out } => {
            let scene = synthesize_scene(&cfg.synth_config(), cfg.training.exec)?;
            save_scene(&out, &scene)?;
            println!(
                "wrote {}x{} scene to {}",
                scene.height,
                scene.width,
                out.display()
            );
        }
        Command::Patch { input, out } => {
            let scene = load_scene(&input)?;
            let patches = extract_patches(&scene, cfg.encode.side, cfg.encode.stride)?;
            save_dataset(&out, &patches, cfg.encode.side)?;
            println!("wrote {} patches to {}", patches.len(), out.display());
        }
        Command::Train { scene, data: None } => {
            if scene.is_some() {
                cfg.scene_path = scene;
            }
            let a = run_experiment(&cfg)?;
            println!("{}", a.metrics.summary());
        }
        Command::Train {
            data: Some(path), ..
        } => {
            let (side, patches) = load_dataset(&path).map_err(|e| e.in_stage("load"))?;
            if side != cfg.encode.side {
                return Err(Error::config(
                    "patch_side",
                    format!(
                        "dataset has {side}-pixel patches, config expects {}",
                        cfg.encode.side
                    ),
                ));
            }
            let samples = encode_patches(
                &patches,
                &cfg.effective_encode(),
                cfg.geometry.atoms(),
                cfg.training.exec,
            )
            .map_err(|e| e.in_stage("encode"))?;
            let system = build_system(&cfg).map_err(|e| e.in_stage("channel"))?;
            let outcome = train(&samples, &system, &cfg.training, cfg.model)
                .map_err(|e| e.in_stage("train"))?;
            let eval = evaluate(&outcome.params, &samples, &system, &cfg.training)
                .map_err(|e| e.in_stage("evaluate"))?;
            create_dir(&cfg.out_dir)?;
            write(
                &cfg.out_dir.join(experiment::METRICS_FILE),
                &eval.metrics.report(),
            )?;
            write(
                &cfg.out_dir.join(experiment::HISTORY_FILE),
                &format_history(&outcome.history),
            )?;
            outcome
                .params
                .save(&cfg.out_dir.join(experiment::PARAMS_FILE))?;
            println!("{}", eval.metrics.summary());
        }
        Command::Eval { params, scene } => {
            if scene.is_some() {
                cfg.scene_path = scene;
            }
            let params = Params::load(&params).map_err(|e| e.in_stage("load"))?;
            let scene =
                experiment::load_or_synthesize_scene(&cfg).map_err(|e| e.in_stage("scene"))?;
            let encoded = experiment::encode(&cfg, &scene).map_err(|e| e.in_stage("encode"))?;
            let system = build_system(&cfg).map_err(|e| e.in_stage("channel"))?;
            let eval = evaluate(&params, &encoded.samples, &system, &cfg.training)
                .map_err(|e| e.in_stage("evaluate"))?;
            create_dir(&cfg.out_dir)?;
            write(
                &cfg.out_dir.join(experiment::METRICS_FILE),
                &eval.metrics.report(),
            )?;
            export_class_map(
                &encoded.to_grid(&eval.predictions, OCEAN),
                encoded.grid_rows,
                encoded.grid_cols,
                system.num_rx(),
                &cfg.out_dir.join(experiment::CLASS_MAP_FILE),
            )?;
            println!("{}", eval.metrics.summary());
        }
        Command::Ablate => {
            let rows = run_ablation_suite(&cfg)?;
            print!("{}", format_ablation_table(&rows));
        }
        Command::DumpMatrix { out } => {
            let geometry = simd2nn::geometry::build_geometry(&cfg.geometry)?;
            let w =
                simd2nn::propagation::build_transmission_matrix(&geometry, 1, cfg.training.exec)?;
            w.dump_text(&out)?;
            println!("wrote {0}x{0} matrix to {1}", w.size(), out.display());
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    simd2nn::exec::init_thread_pool_from_env();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

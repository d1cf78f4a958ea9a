//! End-to-end runs: scene → patches → channel → training → evaluation → artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::sample_rician;
use crate::config::ExperimentConfig;
use crate::data::{encode_scene, load_scene, synthesize_scene, EncodedScene, IqScene, OCEAN};
use crate::geometry::build_geometry;
use crate::metrics::{export_class_map, sig4, MetricsBundle};
use crate::network::{ModelKind, Params, System};
use crate::propagation::Propagation;
use crate::rng::{stream, Purpose};
use crate::training::{evaluate, format_history, train, EpochStats};
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.txt";
pub const HISTORY_FILE: &str = "history.txt";
pub const PARAMS_FILE: &str = "params.simth1";
pub const CLASS_MAP_FILE: &str = "class_map.pgm";
pub const CONFIG_FILE: &str = "config.txt";
pub const ABLATION_FILE: &str = "ablation.txt";

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub metrics: MetricsBundle,
    pub history: Vec<EpochStats>,
    pub params: Params,
    /// One prediction per encoded patch.
    pub predictions: Vec<usize>,
    /// Row-major patch grid; skipped (degenerate) windows are ocean.
    pub class_grid: Vec<usize>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

/// The configured scene file, or a synthetic scene.
pub fn load_or_synthesize_scene(cfg: &ExperimentConfig) -> Result<IqScene> {
    match &cfg.scene_path {
        Some(path) => load_scene(path),
        None => synthesize_scene(&cfg.synth_config(), cfg.training.exec),
    }
}

/// Geometry, transmission matrices and one block-fading channel draw.
pub fn build_system(cfg: &ExperimentConfig) -> Result<System> {
    let geometry = build_geometry(&cfg.geometry)?;
    let propagation = Propagation::new(&geometry, cfg.training.exec)?;
    let mut rng = stream(cfg.resolved_channel_seed(), Purpose::Channel, 0, 0);
    let channel = sample_rician(&cfg.channel, geometry.atoms_per_layer, &mut rng)?;
    System::new(propagation, channel, cfg.channel.tx_amplitude())
}

pub fn encode(cfg: &ExperimentConfig, scene: &IqScene) -> Result<EncodedScene> {
    encode_scene(
        scene,
        &cfg.effective_encode(),
        cfg.geometry.atoms(),
        cfg.training.exec,
    )
}

/// Runs every stage after the scene exists and writes the artifacts.
pub fn run_on_scene(cfg: &ExperimentConfig, scene: &IqScene) -> Result<RunArtifacts> {
    let encoded = encode(cfg, scene).map_err(|e| e.in_stage("encode"))?;
    run_on_encoded(cfg, &encoded)
}

pub fn run_on_encoded(cfg: &ExperimentConfig, encoded: &EncodedScene) -> Result<RunArtifacts> {
    let system = build_system(cfg).map_err(|e| e.in_stage("channel"))?;
    let outcome = train(&encoded.samples, &system, &cfg.training, cfg.model)
        .map_err(|e| e.in_stage("train"))?;
    let eval = evaluate(&outcome.params, &encoded.samples, &system, &cfg.training)
        .map_err(|e| e.in_stage("evaluate"))?;
    let class_grid = encoded.to_grid(&eval.predictions, OCEAN);
    let artifacts = RunArtifacts {
        out_dir: cfg.out_dir.clone(),
        metrics: eval.metrics,
        history: outcome.history,
        params: outcome.params,
        predictions: eval.predictions,
        class_grid,
        grid_rows: encoded.grid_rows,
        grid_cols: encoded.grid_cols,
    };
    write_artifacts(cfg, &artifacts, system.num_rx()).map_err(|e| e.in_stage("write"))?;
    log::info!(
        "{} model: accuracy {:.4} over {} patches",
        cfg.model.as_str(),
        artifacts.metrics.overall_accuracy,
        artifacts.predictions.len()
    );
    Ok(artifacts)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_artifacts(cfg: &ExperimentConfig, a: &RunArtifacts, num_classes: usize) -> Result<()> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    write_text(&dir.join(METRICS_FILE), &a.metrics.report())?;
    write_text(&dir.join(HISTORY_FILE), &format_history(&a.history))?;
    a.params.save(&dir.join(PARAMS_FILE))?;
    export_class_map(
        &a.class_grid,
        a.grid_rows,
        a.grid_cols,
        num_classes,
        &dir.join(CLASS_MAP_FILE),
    )
}

/// One full experiment. Output depends only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let scene = load_or_synthesize_scene(cfg).map_err(|e| e.in_stage("scene"))?;
    run_on_scene(cfg, &scene)
}

/// The ablation settings, each a single change from `base`.
pub fn ablation_rows(base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let with = |f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let mut rows = vec![
        ("L = 1".to_string(), with(&|c| c.geometry.num_layers = 1)),
        ("L = 6".to_string(), with(&|c| c.geometry.num_layers = 6)),
        (
            "S = 5%".to_string(),
            with(&|c| c.training.sample_rate = 0.05),
        ),
        (
            "S = 20%".to_string(),
            with(&|c| c.training.sample_rate = 0.20),
        ),
        (
            "Pt = 5 dBm".to_string(),
            with(&|c| c.channel.tx_power_dbm = 5.0),
        ),
        (
            "No phase rotation".to_string(),
            with(&|c| c.phase_rotation = false),
        ),
        ("Baseline".to_string(), base.clone()),
        (
            "Digital DNN".to_string(),
            with(&|c| c.model = ModelKind::Digital),
        ),
    ];
    for (i, (_, c)) in rows.iter_mut().enumerate() {
        c.out_dir = base.out_dir.join(format!("row{i}"));
    }
    rows
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: String,
    pub outcome: std::result::Result<MetricsBundle, String>,
}

/// Runs every ablation row on one shared scene. A failing row is recorded and
/// the suite carries on.
pub fn run_ablation_suite(base: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let scene = load_or_synthesize_scene(base).map_err(|e| e.in_stage("scene"))?;
    let shared = encode(base, &scene).map_err(|e| e.in_stage("encode"))?;
    let mut rows = Vec::new();
    for (name, cfg) in ablation_rows(base) {
        log::info!("ablation row `{name}`");
        let result = cfg.validate().and_then(|()| {
            if cfg.effective_encode() == base.effective_encode() {
                run_on_encoded(&cfg, &shared)
            } else {
                run_on_scene(&cfg, &scene)
            }
        });
        let outcome = result.map(|a| a.metrics).map_err(|e| {
            log::error!("ablation row `{name}` failed: {e}");
            e.to_string()
        });
        rows.push(AblationRow { name, outcome });
    }
    fs::create_dir_all(&base.out_dir).map_err(|e| Error::io(&base.out_dir, e))?;
    write_text(
        &base.out_dir.join(ABLATION_FILE),
        &format_ablation_table(&rows),
    )?;
    Ok(rows)
}

/// Fixed-width table of percentages at four significant digits.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| sig4(100.0 * v));
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(7);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "Setting", "Precision", "Recall", "F1", "Accuracy"
    );
    for row in rows {
        match &row.outcome {
            Ok(m) => out.push_str(&format!(
                "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
                row.name,
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                pct(Some(m.overall_accuracy))
            )),
            Err(msg) => out.push_str(&format!("{:<width$}  FAILED: {msg}\n", row.name)),
        }
    }
    out
}

/// Small, fast settings used by tests and the `--quick` CLI flag.
pub fn quick_config(out_dir: impl Into<PathBuf>) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.geometry.num_layers = 2;
    c.geometry.rows = 8;
    c.geometry.cols = 16;
    c.encode.side = 128;
    c.encode.stride = 32;
    c.encode.factor = 16;
    c.synth.height = 512;
    c.synth.width = 512;
    c.training.epochs = 10;
    c.training.batch_size = 16;
    c.training.sample_rate = 0.2;
    c.out_dir = out_dir.into();
    c
}

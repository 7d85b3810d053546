//! Implementations behind the `dascn` subcommands. Each writes its outputs
//! under the run directory and returns an error carrying the exit code.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Axis};
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{Overrides, RunConfig};
use crate::data::{make_synthetic_dataset, write_f32_matrix, write_labels, ClassId, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_gzsl, render_table, reports_to_jsonl, run_ablation, sweep_with_model};
use crate::rng;
use crate::synthesis::{synthesize_features, SynthesisRequest};
use crate::trainer::{train, Variant};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "log.jsonl";
pub const CONFIG_ECHO_FILE: &str = "config.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CURVE_JSON: &str = "curve.json";
pub const VIZ_FEATURES: &str = "viz_features.f32";
pub const VIZ_LABELS: &str = "viz_labels.i32";
pub const VIZ_META: &str = "meta.json";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare(config_path: &Path, overrides: &Overrides) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(config_path)?;
    config.apply(overrides);
    config.validate()?;
    let out = config.output_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write(&out.join(CONFIG_ECHO_FILE), config.to_json()?)?;
    Ok((config, out))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::validation(format!("missing artifact {}", path.display())))
    }
}

/// Train and write `model.ckpt`, `log.jsonl` and the effective config.
pub fn cmd_train(config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let (config, out) = prepare(config_path, overrides)?;
    let bundle = config.bundle()?;
    let (params, log) = train(&bundle, &config.train)?;
    let seconds: f64 = log.iteration_seconds.iter().sum();
    log::info!("trained {} iterations in {seconds:.2}s", log.iterations());
    let ckpt = out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt, &params, &config.train)?;
    write(&out.join(LOG_FILE), log.to_jsonl()?)?;
    Ok(ckpt)
}

/// Evaluate a checkpoint on the configured dataset.
pub fn cmd_evaluate(checkpoint: &Path, config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    require_file(checkpoint)?;
    let (config, out) = prepare(config_path, overrides)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let bundle = config.bundle()?;
    check_dims(&ckpt.params.arch, &bundle)?;
    let mut report = evaluate_gzsl(&ckpt.params, &bundle, &config.eval)?;
    report.variant = Some(ckpt.config.variant);
    write(&out.join(REPORT_JSON), reports_to_jsonl(std::slice::from_ref(&report))?)?;
    let name = ckpt.config.variant.display_name().to_string();
    write(&out.join(REPORT_TXT), render_table(&bundle.name, &[(name, &report)]))?;
    Ok(out.join(REPORT_JSON))
}

fn check_dims(arch: &crate::networks::Architecture, bundle: &crate::data::DatasetBundle) -> Result<()> {
    if arch.feature_dim != bundle.feature_dim() || arch.attribute_dim != bundle.attribute_dim() {
        return Err(Error::validation(format!(
            "checkpoint expects K={} L={}, dataset has K={} L={}",
            arch.feature_dim,
            arch.attribute_dim,
            bundle.feature_dim(),
            bundle.attribute_dim()
        )));
    }
    Ok(())
}

/// Train and evaluate each variant (all five unless the config lists some).
pub fn cmd_ablate(config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let (config, out) = prepare(config_path, overrides)?;
    let bundle = config.bundle()?;
    let variants = config.variants.clone().unwrap_or_else(|| Variant::ALL.to_vec());
    let table = run_ablation(&bundle, &config.train, &variants, &config.eval)?;
    write(&out.join(REPORT_JSON), table.to_jsonl()?)?;
    write(&out.join(REPORT_TXT), table.to_text())?;
    Ok(out.join(REPORT_JSON))
}

/// Train once and sweep the number of synthesized samples per class.
pub fn cmd_sweep(config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let (config, out) = prepare(config_path, overrides)?;
    let bundle = config.bundle()?;
    let (params, _) = train(&bundle, &config.train)?;
    let curve = sweep_with_model(&params, &bundle, &config.eval, &config.eval.counts)?;
    let json = serde_json::to_string_pretty(&curve).map_err(|e| Error::json("curve", e))?;
    write(&out.join(CURVE_JSON), json + "\n")?;
    let mut text = format!("{} ({})\n{:>12} {:>6} {:>6} {:>6}\n", bundle.name, config.train.variant, "n_per_class", "ts", "tr", "H");
    for p in &curve {
        text.push_str(&format!(
            "{:>12} {:>6.1} {:>6.1} {:>6.1}\n",
            p.n_per_class,
            100.0 * p.ts,
            100.0 * p.tr,
            100.0 * p.h
        ));
    }
    write(&out.join(REPORT_TXT), text)?;
    Ok(out.join(CURVE_JSON))
}

/// Write the oracle dataset described by a JSON [`SyntheticSpec`].
pub fn cmd_synth_data(spec_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::json(spec_path.display().to_string(), e))?;
    make_synthetic_dataset(&spec)?.save(out_dir)?;
    Ok(out_dir.to_path_buf())
}

#[derive(Debug, Serialize)]
struct VizMeta {
    rows: usize,
    feature_dim: usize,
    classes: Vec<ClassId>,
    n_real: usize,
    n_synthetic: usize,
    /// Per-row source: 0 = real test feature, 1 = synthesized.
    source: Vec<u8>,
}

/// Export real test rows and synthesized rows of `classes` (default: all
/// unseen classes) for an external 2-D projection.
pub fn cmd_export_viz(
    checkpoint: &Path,
    config_path: &Path,
    classes: Option<Vec<ClassId>>,
    overrides: &Overrides,
) -> Result<PathBuf> {
    require_file(checkpoint)?;
    let (config, out) = prepare(config_path, overrides)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let bundle = config.bundle()?;
    check_dims(&ckpt.params.arch, &bundle)?;
    let classes = classes.unwrap_or_else(|| bundle.unseen_classes.clone());

    let mut real_rows = Vec::new();
    let mut real_split = Vec::new();
    for &c in &classes {
        let (x, y) = if bundle.seen_classes.contains(&c) {
            (&bundle.visual_test_seen, &bundle.labels_test_seen)
        } else if bundle.unseen_classes.contains(&c) {
            (&bundle.visual_test_unseen, &bundle.labels_test_unseen)
        } else {
            return Err(Error::validation(format!("class {c} is not in the dataset")));
        };
        let rows: Vec<usize> = y.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect();
        real_split.push(x.select(Axis(0), &rows));
        real_rows.extend(std::iter::repeat_n(c, rows.len()));
    }
    let request = SynthesisRequest {
        classes: classes.clone(),
        n_per_class: config.eval.n_per_class,
        seed: rng::derive_seed(config.eval.seed, rng::SYNTHESIS),
    };
    let (synth, synth_labels) = synthesize_features(&ckpt.params, &bundle, &request)?;

    let mut parts: Vec<_> = real_split.iter().map(|m| m.view()).collect();
    parts.push(synth.view());
    let features = concatenate(Axis(0), &parts).expect("same width");
    let n_real = real_rows.len();
    let mut labels = real_rows;
    labels.extend_from_slice(&synth_labels);

    write_f32_matrix(&out.join(VIZ_FEATURES), &features)?;
    write_labels(&out.join(VIZ_LABELS), &labels)?;
    let meta = VizMeta {
        rows: labels.len(),
        feature_dim: features.ncols(),
        classes,
        n_real,
        n_synthetic: synth_labels.len(),
        source: std::iter::repeat_n(0, n_real)
            .chain(std::iter::repeat_n(1, synth_labels.len()))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("viz meta", e))?;
    write(&out.join(VIZ_META), json)?;
    Ok(out)
}

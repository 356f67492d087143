use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;

use mkws_core::audio::load_audio;
use mkws_core::fewshot::{check_head_compatibility, FewShotHead};
use mkws_core::model::EmbeddingModel;
use mkws_core::streaming::{
    match_detections, run_detector, threshold_sweep, GroundTruthTimeline, StreamingConfig,
};

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Stream WAV built by build-stream.
    #[arg(long)]
    pub stream: PathBuf,

    /// Sidecar timeline JSON.
    #[arg(long)]
    pub timeline: PathBuf,

    #[arg(long)]
    pub head: PathBuf,

    #[arg(long)]
    pub embedding: PathBuf,

    /// Output directory for report.csv, report.json, detections.json.
    #[arg(long)]
    pub out: PathBuf,

    /// Detection threshold for the single-run detections output
    /// (overrides config).
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    record.add_input(&args.stream);
    record.add_input(&args.timeline);
    record.add_input(&args.head);
    record.add_input(&args.embedding);

    let embedding = EmbeddingModel::load(&args.embedding).context("loading embedding model")?;
    check_head_compatibility(&args.head, &embedding)?;
    let (head, _) = FewShotHead::load(&args.head)?;
    let stream = load_audio(&args.stream).context("loading stream wav")?;
    let timeline = GroundTruthTimeline::load(&args.timeline).context("loading timeline")?;
    timeline.validate()?;

    let stream_cfg = StreamingConfig {
        detection_threshold: args.threshold.unwrap_or(cfg.streaming.config.detection_threshold),
        ..cfg.streaming.config.clone()
    };
    stream_cfg.validate()?;

    // full sweep over the threshold grid, scores computed once
    let grid: Vec<f64> = cfg
        .eval
        .threshold_grid()
        .into_iter()
        .filter(|&t| t > 0.0 && t < 1.0)
        .collect();
    let report = threshold_sweep(&head, &embedding, &stream, &timeline, &grid, &stream_cfg)?;

    // single run at the configured threshold for detection timestamps
    let detections = run_detector(&head, &embedding, &stream, &stream_cfg)?;
    let outcome = match_detections(&detections, &timeline, &stream_cfg);

    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("report.csv");
    let json_path = args.out.join("report.json");
    let det_path = args.out.join("detections.json");
    report.write_csv(&csv_path)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(
        &det_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "threshold": stream_cfg.detection_threshold,
            "detections": detections,
            "tp": outcome.row.true_positives,
            "fa": outcome.row.false_accepts,
            "fr": outcome.row.false_rejects,
            "tpr": outcome.row.tpr,
            "far": outcome.row.far,
            "fa_per_hour": outcome.row.fa_per_hour,
        }))?,
    )?;

    println!(
        "threshold {:.2}: TPR {:.4}, {} FA over {:.1} s ({} detections)",
        stream_cfg.detection_threshold,
        outcome.row.tpr,
        outcome.row.false_accepts,
        timeline.duration_s,
        detections.len()
    );
    println!("report: {}", csv_path.display());

    record.add_outputs(&[csv_path, json_path, det_path]);
    Ok(Some(args.out.clone()))
}

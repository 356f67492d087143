use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;

use mkws_core::dataset::{DatasetManifest, UnknownBank};
use mkws_core::fewshot::{
    aggregate_language_report, build_eval_pools, check_head_compatibility, evaluate_classification,
    write_roc_csv, write_summary_json, EvalSpec, FewShotHead, RocCurve,
};
use mkws_core::model::EmbeddingModel;

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Few-shot head file(s); repeat for multi-keyword reports.
    #[arg(long = "head", required = true)]
    pub heads: Vec<PathBuf>,

    #[arg(long)]
    pub embedding: PathBuf,

    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub bank: PathBuf,

    #[arg(long)]
    pub clips_root: Option<PathBuf>,

    /// Output directory for roc.csv and summary.json.
    #[arg(long)]
    pub out: PathBuf,

    /// Total negatives across the three categories (overrides config).
    #[arg(long)]
    pub negatives: Option<usize>,

    /// Reporting threshold for F1 (overrides config).
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let clips_root = super::resolve_path(args.clips_root.as_deref(), cfg.data_root(), cfg, "clips-root")?;
    record.add_input(&args.embedding);
    record.add_input(&args.manifest);
    record.add_input(&args.bank);

    let embedding = EmbeddingModel::load(&args.embedding).context("loading embedding model")?;
    let manifest = DatasetManifest::load(&args.manifest).context("loading manifest")?;
    let bank = UnknownBank::load(&args.bank).context("loading unknown bank")?;

    let thresholds = cfg.eval.threshold_grid();
    let report_threshold = args.threshold.unwrap_or(cfg.eval.report_threshold);
    let negatives_total = args.negatives.unwrap_or(cfg.eval.negatives_total);

    let mut curves: Vec<RocCurve> = Vec::new();
    for head_path in &args.heads {
        record.add_input(head_path);
        check_head_compatibility(head_path, &embedding)?;
        let (head, header) = FewShotHead::load(head_path)?;
        let exclude: BTreeSet<String> = header
            .shot_paths
            .iter()
            .map(|p| { // shots may be absolute; manifest paths are relative
                let p = std::path::Path::new(p);
                p.strip_prefix(&clips_root)
                    .map(|r| r.to_string_lossy().into_owned())
                    .unwrap_or_else(|_| p.to_string_lossy().into_owned())
            })
            .collect();

        let pools = build_eval_pools(
            &manifest,
            &bank,
            &embedding.classes,
            &head.target_word,
            &exclude,
            negatives_total,
            cfg.eval.max_positives,
            cfg.seed,
        )?;
        let spec = EvalSpec {
            pools,
            thresholds: thresholds.clone(),
            report_threshold,
        };
        let curve = evaluate_classification(&head, &embedding, &spec, &clips_root)
            .with_context(|| format!("evaluating {:?}", head.target_word))?;
        println!(
            "{}: F1@{:.2} = {:.4} ({} positives, {} negatives)",
            curve.keyword, report_threshold, curve.f1_at_report, curve.positives, curve.negatives
        );
        curves.push(curve);
    }

    std::fs::create_dir_all(&args.out)?;
    let roc_path = args.out.join("roc.csv");
    let summary_path = args.out.join("summary.json");
    write_roc_csv(&curves, &roc_path)?;
    write_summary_json(&curves, &summary_path)?;
    let mut outputs = vec![roc_path, summary_path];

    if curves.len() > 1 {
        let report = aggregate_language_report(&curves)?;
        let lang_path = args.out.join("language_report.json");
        std::fs::write(&lang_path, serde_json::to_string_pretty(&report)?)?;
        println!("overall mean F1@{report_threshold:.2} = {:.4}", report.overall_mean_f1);
        outputs.push(lang_path);
    }

    record.add_outputs(&outputs);
    Ok(Some(args.out.clone()))
}

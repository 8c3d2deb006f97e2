//! Run directories: training, re-evaluation and cot export.
//!
//! ```text
//! <out>/<name>/config.json          effective configuration
//! <out>/<name>/metrics.csv          one row per (arm, iteration, split)
//! <out>/<name>/checkpoints/iter_<k>.{gen,val}
//! <out>/<name>/checkpoints/ctr_base.ctr, iter_<k>.ctr
//! <out>/<name>/cots/iter_<k>.jsonl  greedy cot per user
//! <out>/<name>/feedback/iter_<k>.jsonl  optional
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trackrec_core::rec::ctr::PreferenceFeatures;
use trackrec_core::rec::{ctr_predict, ctr_train, evaluate, CtrModelParams, CtrShape, TagEncoder};
use trackrec_core::rng::domain;
use trackrec_core::{
    evaluate_models, make_synthetic, run_trackrec, Dataset, FeedbackRecord, GeneratorParams,
    IterationReport, RecCot, SeedStream, Split, TagVocabulary, ValidatorParams,
};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{load_dataset, write_json};
use crate::error::{CliError, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: [&str; 11] = [
    "run", "arm", "iteration", "split", "auc", "acc", "logloss", "mean_reward", "tag_recall", "sdpo_loss",
    "rectune_loss",
];

/// Arm label of rows scored by the generator/validator pair.
pub const VALIDATOR_ARM: &str = "validator";
pub const BASE_ARM: &str = "base";
pub const TRACKREC_ARM: &str = "trackrec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: String,
    pub arm: String,
    pub iteration: usize,
    pub split: String,
    pub auc: Option<f64>,
    pub acc: Option<f64>,
    pub logloss: Option<f64>,
    pub mean_reward: Option<f64>,
    pub tag_recall: Option<f64>,
    pub sdpo_loss: Option<f64>,
    pub rectune_loss: Option<f64>,
}

impl MetricsRow {
    fn key(&self) -> (&str, usize, &str) {
        (&self.arm, self.iteration, &self.split)
    }

    fn cells(&self) -> [String; 11] {
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        [
            self.run.clone(),
            self.arm.clone(),
            self.iteration.to_string(),
            self.split.clone(),
            f(self.auc),
            f(self.acc),
            f(self.logloss),
            f(self.mean_reward),
            f(self.tag_recall),
            f(self.sdpo_loss),
            f(self.rectune_loss),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotLine {
    pub user_id: u32,
    pub tags: Vec<usize>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeedbackLine {
    user_id: u32,
    item_id: u32,
    label: u8,
    cots: Vec<Vec<usize>>,
    rewards: Vec<f64>,
    positive_index: usize,
}

impl From<&FeedbackRecord> for FeedbackLine {
    fn from(r: &FeedbackRecord) -> Self {
        FeedbackLine {
            user_id: r.user_id,
            item_id: r.item_id,
            label: r.label.is_yes() as u8,
            cots: r.cots.iter().map(|c| c.tags().to_vec()).collect(),
            rewards: r.rewards.clone(),
            positive_index: r.positive_index,
        }
    }
}

pub fn run_dir(out: &Path, cfg: &RunConfig) -> PathBuf {
    out.join(&cfg.name)
}

fn checkpoint_path(dir: &Path, iteration: usize, ext: &str) -> PathBuf {
    dir.join("checkpoints").join(format!("iter_{iteration}.{ext}"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

/// The dataset a config refers to: loaded from `data_dir` or synthesized.
pub fn dataset_for(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data_dir {
        Some(dir) => load_dataset(dir),
        None => Ok(make_synthetic(&cfg.env_config())?),
    }
}

fn row(cfg: &RunConfig, arm: &str, iteration: usize, split: Split) -> MetricsRow {
    MetricsRow {
        run: cfg.name.clone(),
        arm: arm.into(),
        iteration,
        split: split.as_str().into(),
        auc: None,
        acc: None,
        logloss: None,
        mean_reward: None,
        tag_recall: None,
        sdpo_loss: None,
        rectune_loss: None,
    }
}

fn report_row(cfg: &RunConfig, r: &IterationReport) -> MetricsRow {
    MetricsRow {
        auc: r.metrics.auc,
        acc: Some(r.metrics.acc),
        logloss: Some(r.metrics.logloss),
        mean_reward: Some(r.mean_reward),
        tag_recall: r.tag_recall,
        sdpo_loss: r.sdpo_loss,
        rectune_loss: r.rectune_loss,
        ..row(cfg, VALIDATOR_ARM, r.iteration, Split::Valid)
    }
}

/// Greedy cot for every user.
pub fn user_cots(g: &GeneratorParams, data: &Dataset) -> Result<BTreeMap<u32, RecCot>> {
    data.users.iter().map(|u| Ok((u.user_id, g.greedy_cot(&u.features)?))).collect()
}

fn preference_features(enc: &TagEncoder, cots: &BTreeMap<u32, RecCot>) -> Result<PreferenceFeatures> {
    cots.iter().map(|(&u, c)| Ok((u, enc.encode(c)?))).collect()
}

fn encoder(cfg: &RunConfig, data: &Dataset) -> TagEncoder {
    let stream = SeedStream::new(trackrec_core::RngSeed(cfg.seed)).derive(domain::ENCODER);
    TagEncoder::seeded(data.num_tags, TagEncoder::DEFAULT_DIM, &stream)
}

fn ctr_row(cfg: &RunConfig, arm: &str, iteration: usize, split: Split, scores: &[(f64, trackrec_core::Label)]) -> Result<MetricsRow> {
    let m = evaluate(scores)?;
    Ok(MetricsRow { auc: m.auc, acc: Some(m.acc), logloss: Some(m.logloss), ..row(cfg, arm, iteration, split) })
}

fn write_cots(path: &Path, cots: &BTreeMap<u32, RecCot>, vocab: &TagVocabulary) -> Result<()> {
    let mut out = String::new();
    for (&user_id, c) in cots {
        let line = CotLine { user_id, tags: c.tags().to_vec(), text: c.render(vocab)? };
        out.push_str(&serde_json::to_string(&line).expect("cot line serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(path))
}

fn write_feedback(path: &Path, records: &[FeedbackRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&FeedbackLine::from(r)).expect("feedback line serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(path))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| CliError::Parse { path: path.to_path_buf(), line: 0, msg: e.to_string() };
    w.write_record(METRICS_HEADER).map_err(ser)?;
    for r in rows {
        w.write_record(r.cells()).map_err(ser)?;
    }
    let bytes = w.into_inner().expect("in-memory writer");
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::Parse { path: path.to_path_buf(), line: 0, msg: format!("{kind:?}") },
    })?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| CliError::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Summary of a finished training run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

/// Runs distillation, the alternating loop and the CTR arms, writing the
/// run directory.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = dataset_for(cfg)?;
    let dir = run_dir(out, cfg);
    for sub in ["checkpoints", "cots"] {
        create_dir(&dir.join(sub))?;
    }
    fs::write(dir.join(CONFIG_FILE), cfg.to_json()).map_err(CliError::io(&dir.join(CONFIG_FILE)))?;

    let run = run_trackrec(&data, cfg.env.cot_len, &cfg.loop_config())?;
    let vocab = TagVocabulary::numbered(data.num_tags, cfg.env.cot_len)?;
    let mut rows: Vec<MetricsRow> = run.reports.iter().map(|r| report_row(cfg, r)).collect();

    let mut models = vec![(run.initial_generator.clone(), run.initial_validator.clone())];
    models.extend(run.iterations.iter().map(|o| (o.generator.clone(), o.validator.clone())));
    let mut cots_per_iteration = Vec::with_capacity(models.len());
    for (k, (g, v)) in models.iter().enumerate() {
        checkpoint::write_generator(&checkpoint_path(&dir, k, "gen"), g)?;
        checkpoint::write_validator(&checkpoint_path(&dir, k, "val"), v)?;
        let cots = user_cots(g, &data)?;
        write_cots(&dir.join("cots").join(format!("iter_{k}.jsonl")), &cots, &vocab)?;
        cots_per_iteration.push(cots);
    }
    if cfg.save_feedback {
        create_dir(&dir.join("feedback"))?;
        for o in &run.iterations {
            write_feedback(&dir.join("feedback").join(format!("iter_{}.jsonl", o.report.iteration)), &o.feedback)?;
        }
    }

    let train = data.split(Split::Train);
    let test = data.split(Split::Test);
    if cfg.ctr.enabled && !train.is_empty() && !test.is_empty() {
        let root = SeedStream::new(trackrec_core::RngSeed(cfg.seed));
        let enc = encoder(cfg, &data);
        let init = CtrModelParams::init(CtrShape::new(data.users.len(), data.items.len(), data.num_tags), &root.derive(domain::CTR_INIT));
        let shuffle = root.derive(domain::CTR_SHUFFLE);
        let tc = cfg.ctr_config();

        let base = ctr_train(&init, &data, &train, None, &tc, &shuffle)?;
        checkpoint::write_ctr(&dir.join("checkpoints").join("ctr_base.ctr"), &base.params)?;
        let base_scores = ctr_predict(&base.params, &data, &test, None)?;
        for (k, cots) in cots_per_iteration.iter().enumerate() {
            rows.push(ctr_row(cfg, BASE_ARM, k, Split::Test, &base_scores)?);
            let prefs = preference_features(&enc, cots)?;
            let arm = ctr_train(&init, &data, &train, Some(&prefs), &tc, &shuffle)?;
            checkpoint::write_ctr(&checkpoint_path(&dir, k, "ctr"), &arm.params)?;
            let scores = ctr_predict(&arm.params, &data, &test, Some(&prefs))?;
            rows.push(ctr_row(cfg, TRACKREC_ARM, k, Split::Test, &scores)?);
        }
    }

    write_metrics(&dir.join(METRICS_FILE), &rows)?;
    Ok(TrainSummary { dir, rows })
}

/// Number of consecutive `iter_<k>` generator checkpoints from 0.
fn checkpoint_count(dir: &Path) -> usize {
    (0..).take_while(|&k| checkpoint_path(dir, k, "gen").exists()).count()
}

pub fn load_run_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::load(&dir.join(CONFIG_FILE))
}

/// Recomputes metrics for `split` from stored checkpoints. Rows with the same
/// arm, iteration and split are replaced, so repeated calls leave
/// `metrics.csv` unchanged.
pub fn cmd_eval(dir: &Path, split: Split) -> Result<Vec<MetricsRow>> {
    let cfg = load_run_config(dir)?;
    let data = dataset_for(&cfg)?;
    let n = checkpoint_count(dir);
    if n == 0 {
        return Err(CliError::MissingCheckpoint(checkpoint_path(dir, 0, "gen")));
    }
    let interactions = data.split(split);
    let enc = encoder(&cfg, &data);
    let base_path = dir.join("checkpoints").join("ctr_base.ctr");
    let base = if base_path.exists() { Some(checkpoint::read_ctr(&base_path)?) } else { None };

    let mut fresh = Vec::new();
    for k in 0..n {
        let g: GeneratorParams = checkpoint::read_generator(&checkpoint_path(dir, k, "gen"))?;
        let v: ValidatorParams = checkpoint::read_validator(&checkpoint_path(dir, k, "val"))?;
        if interactions.is_empty() {
            continue;
        }
        let e = evaluate_models(&g, &v, &data, &interactions)?;
        fresh.push(MetricsRow {
            auc: e.metrics.auc,
            acc: Some(e.metrics.acc),
            logloss: Some(e.metrics.logloss),
            mean_reward: Some(e.mean_reward),
            tag_recall: e.tag_recall,
            ..row(&cfg, VALIDATOR_ARM, k, split)
        });
        if let Some(base) = &base {
            fresh.push(ctr_row(&cfg, BASE_ARM, k, split, &ctr_predict(base, &data, &interactions, None)?)?);
            let arm = checkpoint::read_ctr(&checkpoint_path(dir, k, "ctr"))?;
            let prefs = preference_features(&enc, &user_cots(&g, &data)?)?;
            fresh.push(ctr_row(&cfg, TRACKREC_ARM, k, split, &ctr_predict(&arm, &data, &interactions, Some(&prefs))?)?);
        }
    }

    let path = dir.join(METRICS_FILE);
    let mut rows = if path.exists() { read_metrics(&path)? } else { Vec::new() };
    for f in &fresh {
        match rows.iter_mut().find(|r| r.key() == f.key()) {
            // Training-time losses are not recomputable; keep them.
            Some(r) => *r = MetricsRow { sdpo_loss: r.sdpo_loss, rectune_loss: r.rectune_loss, ..f.clone() },
            None => rows.push(f.clone()),
        }
    }
    write_metrics(&path, &rows)?;
    Ok(fresh)
}

/// Greedy cots of iteration `iteration` (the last one when `None`) as JSON
/// lines.
pub fn cmd_export_cots(dir: &Path, iteration: Option<usize>, sink: &mut dyn Write) -> Result<usize> {
    let cfg = load_run_config(dir)?;
    let data = dataset_for(&cfg)?;
    let n = checkpoint_count(dir);
    let k = match (iteration, n) {
        (_, 0) => return Err(CliError::MissingCheckpoint(checkpoint_path(dir, 0, "gen"))),
        (Some(k), _) => k,
        (None, n) => n - 1,
    };
    let g = checkpoint::read_generator(&checkpoint_path(dir, k, "gen"))?;
    let vocab = TagVocabulary::numbered(data.num_tags, g.cot_len())?;
    let cots = user_cots(&g, &data)?;
    let stdout_err = |e| CliError::Io { path: PathBuf::from("<output>"), source: e };
    for (&user_id, c) in &cots {
        let line = CotLine { user_id, tags: c.tags().to_vec(), text: c.render(&vocab)? };
        writeln!(sink, "{}", serde_json::to_string(&line).expect("cot line serializes")).map_err(stdout_err)?;
    }
    Ok(k)
}

/// Generates the synthetic dataset for `cfg` into `out`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    let data = make_synthetic(&cfg.env_config())?;
    crate::data::write_dataset(out, &data, cfg.seed)?;
    write_json(&out.join(CONFIG_FILE), cfg)?;
    Ok(data)
}

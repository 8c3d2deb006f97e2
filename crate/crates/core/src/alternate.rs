//! The alternating loop: per iteration, align the generator on validator
//! feedback, then rec-tune the validator on the aligned generator's greedy
//! cots, then evaluate both on the validation split.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::align::{align_generator, DpoConfig};
use crate::cot::RecCot;
use crate::env::{Dataset, Interaction, Split};
use crate::error::{Error, Result};
use crate::feedback::{build_feedback_batch, feedback_reward, FeedbackRecord};
use crate::generator::{GeneratorParams, SamplingParams};
use crate::math::checksum;
use crate::rec::metrics::{evaluate, MetricsReport};
use crate::rectune::{
    build_rectune_dataset, distill_generator, greedy_cots, oracle_recall, rectune_validator,
    DistillConfig, RecTuneConfig,
};
use crate::rng::{domain, RngSeed, SeedStream};
use crate::validator::ValidatorParams;

/// Which generator anchors the softmax-DPO ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    /// Frozen copy of the generator at the start of each iteration.
    #[default]
    PerIteration,
    /// The generator as it was before the first iteration.
    Initial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub iterations: usize,
    pub sampling: SamplingParams,
    pub dpo: DpoConfig,
    pub rectune: RecTuneConfig,
    pub distill: Option<DistillConfig>,
    pub reference_mode: ReferenceMode,
    /// Added at initialization to the validator's yes-head weight on every
    /// preference-times-item feature, so an untrained validator already
    /// favours items that share tags with the cot. 0 disables it.
    pub match_prior: f64,
    /// When false, stage 1 is skipped and the generator never changes.
    pub align: bool,
    /// Standard deviation of the Gaussian initialization of both models.
    pub init_std: f64,
    pub seed: RngSeed,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            iterations: 3,
            sampling: SamplingParams::default(),
            dpo: DpoConfig::default(),
            rectune: RecTuneConfig::default(),
            distill: Some(DistillConfig::default()),
            reference_mode: ReferenceMode::PerIteration,
            match_prior: 0.0,
            align: true,
            init_std: 0.01,
            seed: RngSeed(42),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.dpo.validate()?;
        self.rectune.validate()?;
        if let Some(d) = &self.distill {
            d.validate()?;
        }
        if !self.match_prior.is_finite() {
            return Err(Error::InvalidInput("match_prior must be finite".into()));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::InvalidInput(format!("init_std {} must be >= 0", self.init_std)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// 0 is the baseline before any alternating training.
    pub iteration: usize,
    /// Mean softmax-DPO loss of the last alignment epoch.
    pub sdpo_loss: Option<f64>,
    /// Mean BCE of the last rec-tuning epoch.
    pub rectune_loss: Option<f64>,
    /// Validator metrics on the validation split with greedy cots.
    pub metrics: MetricsReport,
    /// Mean feedback reward of greedy cots on the validation split.
    pub mean_reward: f64,
    /// Mean share of oracle tags recovered by greedy cots; synthetic only.
    pub tag_recall: Option<f64>,
    /// Key of the feedback sampling stream used in this iteration.
    pub stream_key: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub generator: GeneratorParams,
    pub validator: ValidatorParams,
    pub report: IterationReport,
    /// Greedy cot of the aligned generator per user; these are what the
    /// validator was rec-tuned on.
    pub greedy_cots: BTreeMap<u32, RecCot>,
    /// Stage-1 feedback records; empty when alignment is off.
    pub feedback: Vec<FeedbackRecord>,
    /// Checksums of `(generator, validator)` on entry.
    pub start_checksums: (u64, u64),
}

impl IterationOutcome {
    pub fn end_checksums(&self) -> (u64, u64) {
        (checksum(self.generator.values()), checksum(self.validator.values()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub mean_reward: f64,
    pub tag_recall: Option<f64>,
    pub greedy_cots: BTreeMap<u32, RecCot>,
}

/// Scores `interactions` with the validator on greedy cots.
pub fn evaluate_models(
    generator: &GeneratorParams,
    validator: &ValidatorParams,
    data: &Dataset,
    interactions: &[Interaction],
) -> Result<Evaluation> {
    let cots = greedy_cots(generator, data, interactions.iter().map(|x| x.user_id))?;
    let mut scores = Vec::with_capacity(interactions.len());
    let mut reward_sum = 0.0;
    for x in interactions {
        let cot = &cots[&x.user_id];
        let (s_yes, s_no) = validator.scaled_scores(
            &data.user(x.user_id)?.features,
            &data.item(x.item_id)?.features,
            cot,
        )?;
        let (p_t, p_f) = crate::validator::normalize(s_yes, s_no)?;
        reward_sum += feedback_reward(p_t, p_f, x.label)?;
        scores.push((p_t, x.label));
    }
    let metrics = evaluate(&scores)?;
    let mut recall_sum = 0.0;
    let mut recall_n = 0usize;
    for (&u, cot) in &cots {
        let user = data.user(u)?;
        if user.latent.is_some() {
            recall_sum += oracle_recall(user, cot)?;
            recall_n += 1;
        }
    }
    Ok(Evaluation {
        metrics,
        mean_reward: reward_sum / interactions.len() as f64,
        tag_recall: (recall_n > 0).then(|| recall_sum / recall_n as f64),
        greedy_cots: cots,
    })
}

fn feedback_stream(cfg: &LoopConfig, iteration: usize) -> SeedStream {
    SeedStream::new(cfg.seed).derive(domain::FEEDBACK).derive(iteration as u64)
}

/// Stage 1 (alignment), stage 2 (rec-tuning), then evaluation.
pub fn run_iteration(
    generator: &GeneratorParams,
    validator: &ValidatorParams,
    reference: &GeneratorParams,
    data: &Dataset,
    cfg: &LoopConfig,
    iteration: usize,
) -> Result<IterationOutcome> {
    let start_checksums = (checksum(generator.values()), checksum(validator.values()));
    let train = data.split(Split::Train);
    let valid = data.split(Split::Valid);
    let stream = feedback_stream(cfg, iteration);

    let (aligned, sdpo_loss, feedback) = if cfg.align {
        let records = build_feedback_batch(generator, validator, data, &train, &cfg.sampling, &stream)?;
        let out = align_generator(generator, reference, &records, data, &cfg.dpo)?;
        (out.params, out.epoch_losses.last().copied(), records)
    } else {
        (generator.clone(), None, Vec::new())
    };

    let examples = build_rectune_dataset(&aligned, data, &train)?;
    let tuned = rectune_validator(validator, data, &examples, &cfg.rectune)?;

    let eval = evaluate_models(&aligned, &tuned.params, data, &valid)?;
    let mut greedy = greedy_cots(&aligned, data, train.iter().map(|x| x.user_id))?;
    greedy.extend(eval.greedy_cots);
    Ok(IterationOutcome {
        report: IterationReport {
            iteration,
            sdpo_loss,
            rectune_loss: tuned.epoch_losses.last().copied(),
            metrics: eval.metrics,
            mean_reward: eval.mean_reward,
            tag_recall: eval.tag_recall,
            stream_key: stream.key(),
        },
        generator: aligned,
        validator: tuned.params,
        greedy_cots: greedy,
        feedback,
        start_checksums,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecRun {
    /// Generator and validator before iteration 1 (after distillation).
    pub initial_generator: GeneratorParams,
    pub initial_validator: ValidatorParams,
    pub initial_cots: BTreeMap<u32, RecCot>,
    /// Users whose oracle cots were distilled.
    pub distilled_users: Vec<u32>,
    pub iterations: Vec<IterationOutcome>,
    /// `reports[0]` is the baseline, `reports[k]` follows iteration `k`.
    pub reports: Vec<IterationReport>,
}

impl TrackRecRun {
    pub fn generator(&self) -> &GeneratorParams {
        self.iterations.last().map_or(&self.initial_generator, |o| &o.generator)
    }

    pub fn validator(&self) -> &ValidatorParams {
        self.iterations.last().map_or(&self.initial_validator, |o| &o.validator)
    }

    pub fn greedy_cots(&self) -> &BTreeMap<u32, RecCot> {
        self.iterations.last().map_or(&self.initial_cots, |o| &o.greedy_cots)
    }
}

/// Seeded initialization of the two models.
pub fn initial_models(data: &Dataset, cot_len: usize, cfg: &LoopConfig) -> (GeneratorParams, ValidatorParams) {
    let root = SeedStream::new(cfg.seed);
    let g = GeneratorParams::gaussian(
        data.num_tags,
        cot_len,
        cfg.init_std,
        &mut root.derive(domain::GENERATOR_INIT).rng(),
    );
    let mut v = ValidatorParams::gaussian(data.num_tags, cfg.init_std, &mut root.derive(domain::VALIDATOR_INIT).rng());
    if cfg.match_prior != 0.0 {
        let k = data.num_tags;
        for w in &mut v.w_yes[3 * k..] {
            *w += cfg.match_prior;
        }
    }
    (g, v)
}

/// Optional distillation, a baseline report, then `cfg.iterations`
/// alternating iterations with models carried forward.
pub fn run_trackrec(data: &Dataset, cot_len: usize, cfg: &LoopConfig) -> Result<TrackRecRun> {
    cfg.validate()?;
    if data.split(Split::Train).is_empty() {
        return Err(Error::Contract("dataset has no training interactions".into()));
    }
    let (mut generator, validator) = initial_models(data, cot_len, cfg);
    let mut distilled_users = Vec::new();
    if let Some(dc) = &cfg.distill {
        let stream = SeedStream::new(cfg.seed).derive(domain::DISTILL);
        let out = distill_generator(&generator, data, dc, &stream)?;
        generator = out.params;
        distilled_users = out.selected;
    }

    let valid = data.split(Split::Valid);
    let base = evaluate_models(&generator, &validator, data, &valid)?;
    let all_users = data.interactions.iter().map(|x| x.user_id);
    let initial_cots = greedy_cots(&generator, data, all_users)?;
    let mut reports = Vec::with_capacity(cfg.iterations + 1);
    reports.push(IterationReport {
        iteration: 0,
        sdpo_loss: None,
        rectune_loss: None,
        metrics: base.metrics,
        mean_reward: base.mean_reward,
        tag_recall: base.tag_recall,
        stream_key: 0,
    });

    let initial = generator.clone();
    let mut current = (generator.clone(), validator.clone());
    let mut iterations = Vec::with_capacity(cfg.iterations);
    for k in 1..=cfg.iterations {
        let reference = match cfg.reference_mode {
            ReferenceMode::PerIteration => current.0.clone(),
            ReferenceMode::Initial => initial.clone(),
        };
        let out = run_iteration(&current.0, &current.1, &reference, data, cfg, k).map_err(|e| e.in_iteration(k))?;
        current = (out.generator.clone(), out.validator.clone());
        reports.push(out.report.clone());
        iterations.push(out);
    }
    Ok(TrackRecRun {
        initial_generator: generator,
        initial_validator: validator,
        initial_cots,
        distilled_users,
        iterations,
        reports,
    })
}

//! Multiple-sampling feedback: sample N cots per interaction, score each
//! with the validator against the observed label and split the samples into
//! one positive and N-1 negatives.

use alloc::format;
use alloc::vec::Vec;

use crate::cot::{Label, RecCot};
use crate::env::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::generator::{GeneratorParams, SamplingParams};
use crate::rng::SeedStream;
use crate::validator::{normalize, ValidatorParams};

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub user_id: u32,
    pub item_id: u32,
    pub label: Label,
    pub cots: Vec<RecCot>,
    /// Normalized `(p_T, p_F)` per sample.
    pub normalized: Vec<(f64, f64)>,
    pub rewards: Vec<f64>,
    pub positive_index: usize,
    pub negative_indices: Vec<usize>,
}

/// `p_T` when the user clicked, `p_F` otherwise.
pub fn feedback_reward(p_true: f64, p_false: f64, label: Label) -> Result<f64> {
    if !((p_true + p_false) - 1.0).abs().le(&1e-9) {
        return Err(Error::Contract(format!("scores ({p_true}, {p_false}) are not normalized")));
    }
    Ok(match label {
        Label::Yes => p_true,
        Label::No => p_false,
    })
}

/// Index of the first maximal reward.
pub fn positive_index(rewards: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &r) in rewards.iter().enumerate() {
        match best {
            Some(b) if rewards[b] >= r => {}
            _ => best = Some(i),
        }
    }
    best
}

impl FeedbackRecord {
    /// Builds the preference split from already scored samples.
    pub fn from_scored(
        interaction: &Interaction,
        cots: Vec<RecCot>,
        normalized: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if cots.len() < 2 || cots.len() != normalized.len() {
            return Err(Error::Contract(format!(
                "need >= 2 scored samples, got {} cots / {} scores",
                cots.len(),
                normalized.len()
            )));
        }
        let rewards = normalized
            .iter()
            .map(|&(t, f)| feedback_reward(t, f, interaction.label))
            .collect::<Result<Vec<_>>>()?;
        let positive = positive_index(&rewards).expect("non-empty");
        let negatives = (0..cots.len()).filter(|&i| i != positive).collect();
        Ok(FeedbackRecord {
            user_id: interaction.user_id,
            item_id: interaction.item_id,
            label: interaction.label,
            cots,
            normalized,
            rewards,
            positive_index: positive,
            negative_indices: negatives,
        })
    }

    pub fn positive(&self) -> &RecCot {
        &self.cots[self.positive_index]
    }

    pub fn negatives(&self) -> impl Iterator<Item = &RecCot> + '_ {
        self.negative_indices.iter().map(move |&i| &self.cots[i])
    }
}

fn interaction_stream(stream: &SeedStream, x: &Interaction) -> SeedStream {
    stream.derive(u64::from(x.user_id)).derive(u64::from(x.item_id))
}

/// Samples, scores and ranks `sampling.samples` cots for one interaction.
/// Sample `j` draws from a stream keyed by `(user, item, j)`.
pub fn run_sampling_feedback(
    generator: &GeneratorParams,
    validator: &ValidatorParams,
    data: &Dataset,
    interaction: &Interaction,
    sampling: &SamplingParams,
    stream: &SeedStream,
) -> Result<FeedbackRecord> {
    sampling.validate()?;
    let user = data.user(interaction.user_id)?;
    let item = data.item(interaction.item_id)?;
    let base = interaction_stream(stream, interaction);
    let mut cots = Vec::with_capacity(sampling.samples);
    let mut normalized = Vec::with_capacity(sampling.samples);
    for j in 0..sampling.samples {
        let mut rng = base.derive(j as u64).rng();
        let cot = generator.sample_cot(&user.features, sampling, &mut rng)?;
        let (s_yes, s_no) = validator.scaled_scores(&user.features, &item.features, &cot)?;
        normalized.push(normalize(s_yes, s_no)?);
        cots.push(cot);
    }
    FeedbackRecord::from_scored(interaction, cots, normalized)
}

/// One record per interaction, in input order.
pub fn build_feedback_batch(
    generator: &GeneratorParams,
    validator: &ValidatorParams,
    data: &Dataset,
    interactions: &[Interaction],
    sampling: &SamplingParams,
    stream: &SeedStream,
) -> Result<Vec<FeedbackRecord>> {
    if interactions.is_empty() {
        return Err(Error::Contract("feedback batch needs at least one interaction".into()));
    }
    interactions
        .iter()
        .map(|x| run_sampling_feedback(generator, validator, data, x, sampling, stream))
        .collect()
}

//! Online optimization loop: one chronological pass over batches, one
//! combined backward and one Adam step per batch, with the loss-specific
//! gradient routing supplied by the model's stop-gradient fusions.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CkptError, FORMAT_VERSION};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{adam_step, AdamState, DiffError, Var};
use crate::losses::{
    build_behavior_pairs, build_satis_pairs, bpr_loss, dpo_loss, dpo_pair_filter, sample_pairs,
    satis_loss, total_loss, BehaviorWeights, DpoScores, PreferencePair,
};
use crate::model::{EasqConfig, EasqModel, Example, RouterKind};
use crate::rng::mix;
use crate::simenv::{InteractionEvent, QuestionnaireResponse};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at batch {step}")]
    NanLoss { step: u64 },
    #[error("batch {step}: item {item} has no recorded duration")]
    UnknownItem { step: u64, item: u64 },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Checkpoint(#[from] CkptError),
    #[error("invalid train config: {0}")]
    Config(String),
}

/// Structural training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// Side pathway removed; the satisfaction input degenerates to the
    /// detached backbone output.
    NoLora,
    /// Single expert per head with the constant unit router.
    NoMoe,
    /// Alignment loss removed (satisfaction reaches the main path only
    /// through the shared low-rank injection).
    NoDpo,
}

/// Maps a base model config to the effective config of a variant.
pub fn apply_ablation(cfg: &EasqConfig, variant: Ablation) -> EasqConfig {
    let mut out = cfg.clone();
    match variant {
        Ablation::Full => {}
        Ablation::NoLora => out.use_lora = false,
        Ablation::NoMoe => {
            out.k1 = 1;
            out.k2 = 1;
            out.router_kind = RouterKind::Unit;
            out.topk = 1;
        }
        Ablation::NoDpo => out.lambda2 = 0.0,
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Interactions per batch.
    pub batch_size: usize,
    /// Hard cap on optimizer steps; 0 consumes the whole stream.
    pub steps: usize,
    pub lr: f64,
    pub ablation: Ablation,
    /// Periodic snapshot cadence in steps; 0 disables.
    pub eval_every: usize,
    pub seed: u64,
    /// FIFO capacity (in answered responses) for re-mixing recent
    /// questionnaire feedback into later batches, letting satisfaction pairs
    /// form across batch boundaries; 0 disables replay.
    pub replay_buffer_size: usize,
    /// Cap on behavioral pairs sampled per batch.
    pub max_pairs_per_batch: usize,
    /// Cap on questionnaire pairs (after replay widening) per batch.
    pub max_satis_pairs_per_batch: usize,
    pub behavior_weights: BehaviorWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 0,
            lr: 1e-3,
            ablation: Ablation::Full,
            eval_every: 0,
            seed: 0,
            replay_buffer_size: 0,
            max_pairs_per_batch: 512,
            max_satis_pairs_per_batch: 256,
            behavior_weights: BehaviorWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::Config(format!(
                "batch_size must be >= 2 (pairs need two items), got {}",
                self.batch_size
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One stream element: a chronological chunk of interactions with the
/// questionnaire records falling in its time window.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub interactions: Vec<InteractionEvent>,
    pub responses: Vec<QuestionnaireResponse>,
}

/// Chunks time-ordered events into batches and attaches each questionnaire
/// record to the batch covering its timestamp.
pub fn make_batches(
    interactions: &[InteractionEvent],
    responses: &[QuestionnaireResponse],
    batch_size: usize,
) -> Vec<Batch> {
    let mut batches = Vec::new();
    let mut r = 0usize;
    for chunk in interactions.chunks(batch_size) {
        let hi = chunk.last().map(|e| e.ts).unwrap_or(0);
        let mut rs = Vec::new();
        while r < responses.len() && responses[r].ts <= hi {
            rs.push(responses[r].clone());
            r += 1;
        }
        batches.push(Batch {
            interactions: chunk.to_vec(),
            responses: rs,
        });
    }
    batches
}

/// Per-step metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss_main: f64,
    pub loss_satis: f64,
    pub loss_dpo: f64,
    pub n_behavior_pairs: usize,
    pub n_satis_pairs: usize,
    pub n_dpo_pairs: usize,
}

/// Online trainer: owns the model, the optimizer state, the questionnaire
/// replay buffer and the item-duration catalog.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: EasqModel,
    pub adam: AdamState,
    cfg: TrainConfig,
    global_step: u64,
    replay: VecDeque<QuestionnaireResponse>,
    catalog: BTreeMap<u64, f64>,
}

impl Trainer {
    pub fn new(model: EasqModel, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let params = model.param_vars();
        let adam = AdamState::new(model.graph(), &params, cfg.lr);
        Ok(Self {
            model,
            adam,
            cfg,
            global_step: 0,
            replay: VecDeque::new(),
            catalog: BTreeMap::new(),
        })
    }

    /// Rebuilds a trainer from a checkpoint. The caller must replay the
    /// already-consumed stream prefix through [`Trainer::observe_batch`] (or
    /// use [`Trainer::train_online`], which does it automatically) so that
    /// the replay buffer and item catalog match the uninterrupted run.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let (model, adam, global_step) = ckpt.build_model()?;
        Ok(Self {
            model,
            adam,
            cfg,
            global_step,
            replay: VecDeque::new(),
            catalog: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    fn ingest_catalog(&mut self, batch: &Batch) {
        for ev in &batch.interactions {
            self.catalog.entry(ev.item_id).or_insert(ev.duration_s);
        }
    }

    fn example(&self, step: u64, user: u64, item: u64) -> Result<Example, TrainError> {
        let duration = *self
            .catalog
            .get(&item)
            .ok_or(TrainError::UnknownItem { step, item })?;
        Ok(Example {
            user_id: user,
            item_id: item,
            duration_s: duration,
        })
    }

    /// Builds the questionnaire pair list over the batch's responses widened
    /// by the replay buffer (so pairs form across batch boundaries), then
    /// pushes the batch's answered responses into the FIFO.
    fn satis_pairs_with_replay(&mut self, batch: &Batch) -> Vec<PreferencePair> {
        let mut widened: Vec<QuestionnaireResponse> = self.replay.iter().cloned().collect();
        widened.extend(batch.responses.iter().cloned());
        let pairs = build_satis_pairs(&widened);
        self.push_replay(batch);
        pairs
    }

    fn push_replay(&mut self, batch: &Batch) {
        if self.cfg.replay_buffer_size == 0 {
            return;
        }
        for r in &batch.responses {
            if r.answered() {
                self.replay.push_back(r.clone());
                while self.replay.len() > self.cfg.replay_buffer_size {
                    self.replay.pop_front();
                }
            }
        }
    }

    /// Updates stream-derived state (catalog, replay buffer) without touching
    /// parameters; used to fast-forward over already-trained batches when
    /// resuming.
    pub fn observe_batch(&mut self, batch: &Batch) {
        if batch.interactions.is_empty() {
            return;
        }
        self.ingest_catalog(batch);
        self.push_replay(batch);
    }

    /// One online step: build pairs, forward every needed example once,
    /// combine the three losses, run a single backward and a single Adam
    /// update over all parameter groups. Returns `None` for empty batches.
    pub fn step_batch(&mut self, batch: &Batch) -> Result<Option<StepLog>, TrainError> {
        if batch.interactions.is_empty() {
            log::info!("batch at step {} is empty; skipped", self.global_step);
            return Ok(None);
        }
        let step = self.global_step;
        self.ingest_catalog(batch);

        let behavior_pairs = build_behavior_pairs(
            &batch.interactions,
            &self.cfg.behavior_weights,
            self.cfg.max_pairs_per_batch,
            mix(self.cfg.seed, &[step, 1]),
        );
        let all_satis = self.satis_pairs_with_replay(batch);
        let lambda1 = self.model.config().lambda1;
        let lambda2 = self.model.config().lambda2;
        let satis_pairs = sample_pairs(
            all_satis.clone(),
            self.cfg.max_satis_pairs_per_batch,
            mix(self.cfg.seed, &[step, 2]),
        );
        let dpo_pairs = sample_pairs(
            dpo_pair_filter(&all_satis, self.model.config().dpo_include_uncertain),
            self.cfg.max_satis_pairs_per_batch,
            mix(self.cfg.seed, &[step, 3]),
        );

        let use_satis = lambda1 > 0.0 && !satis_pairs.is_empty();
        let use_dpo = lambda2 > 0.0 && !dpo_pairs.is_empty();

        // Forward each distinct (user, item) once.
        let mut needed: BTreeSet<(u64, u64)> = BTreeSet::new();
        for p in &behavior_pairs {
            needed.insert((p.user_id, p.item_pos));
            needed.insert((p.user_id, p.item_neg));
        }
        if use_satis {
            for p in &satis_pairs {
                needed.insert((p.user_id, p.item_pos));
                needed.insert((p.user_id, p.item_neg));
            }
        }
        if use_dpo {
            for p in &dpo_pairs {
                needed.insert((p.user_id, p.item_pos));
                needed.insert((p.user_id, p.item_neg));
            }
        }

        let both_heads = use_satis || use_dpo;
        let beta = self.model.config().beta;
        let mut scores: BTreeMap<(u64, u64), (Var, Option<Var>)> = BTreeMap::new();
        for (user, item) in needed {
            let ex = self.example(step, user, item)?;
            let entry = if both_heads {
                let (y, s) = self.model.forward_all(&ex)?;
                (y, Some(s))
            } else {
                (self.model.forward_main(&ex)?, None)
            };
            scores.insert((user, item), entry);
        }

        let g = self.model.graph_mut();
        let main_score_pairs: Vec<(Var, Var)> = behavior_pairs
            .iter()
            .map(|p| {
                (
                    scores[&(p.user_id, p.item_pos)].0,
                    scores[&(p.user_id, p.item_neg)].0,
                )
            })
            .collect();
        let l_main = bpr_loss(g, &main_score_pairs)?;

        let l_satis = if use_satis {
            let satis_score_pairs: Vec<(Var, Var)> = satis_pairs
                .iter()
                .map(|p| {
                    (
                        scores[&(p.user_id, p.item_pos)].1.expect("satis head computed"),
                        scores[&(p.user_id, p.item_neg)].1.expect("satis head computed"),
                    )
                })
                .collect();
            satis_loss(g, &satis_score_pairs)?
        } else {
            g.const_scalar(0.0)
        };

        let l_dpo = if use_dpo {
            let dpo_scores: Vec<DpoScores> = dpo_pairs
                .iter()
                .map(|p| {
                    let pos = &scores[&(p.user_id, p.item_pos)];
                    let neg = &scores[&(p.user_id, p.item_neg)];
                    DpoScores {
                        y_pos: pos.0,
                        y_neg: neg.0,
                        s_pos: pos.1.expect("satis head computed"),
                        s_neg: neg.1.expect("satis head computed"),
                    }
                })
                .collect();
            dpo_loss(g, &dpo_scores, beta)?
        } else {
            g.const_scalar(0.0)
        };

        let l_total = total_loss(g, l_main, l_satis, l_dpo, lambda1, lambda2)?;
        let log = StepLog {
            step,
            loss_main: g.scalar(l_main),
            loss_satis: g.scalar(l_satis),
            loss_dpo: g.scalar(l_dpo),
            n_behavior_pairs: behavior_pairs.len(),
            n_satis_pairs: satis_pairs.len(),
            n_dpo_pairs: dpo_pairs.len(),
        };
        if !g.scalar(l_total).is_finite() {
            return Err(TrainError::NanLoss { step });
        }

        g.backward(l_total)?;
        let params = self.model.param_vars();
        adam_step(self.model.graph_mut(), &params, &mut self.adam)?;
        self.model.end_step();
        self.global_step += 1;
        Ok(Some(log))
    }

    /// Single chronological pass. Batches with index below the trainer's
    /// current step (a resumed run) only update stream-derived state; the
    /// rest are trained, up to the configured step cap.
    pub fn train_online<I>(&mut self, stream: I) -> Result<Vec<StepLog>, TrainError>
    where
        I: IntoIterator<Item = Batch>,
    {
        let mut logs = Vec::new();
        let mut index = 0u64;
        for batch in stream {
            if batch.interactions.is_empty() {
                log::info!("batch {index} is empty; skipped");
                continue;
            }
            if self.cfg.steps > 0 && self.global_step >= self.cfg.steps as u64 {
                break;
            }
            if index < self.global_step {
                self.observe_batch(&batch);
            } else if let Some(log) = self.step_batch(&batch)? {
                logs.push(log);
            }
            index += 1;
        }
        Ok(logs)
    }

    /// Serializes model parameters, Adam state and the step counter.
    pub fn save(&self, path: &std::path::Path) -> Result<(), CkptError> {
        save_checkpoint(&self.model, &self.adam, self.global_step, path)
    }
}

//! Preference-pair construction and the three training losses.
//!
//! # Where the alignment loss comes from
//!
//! RLHF-style alignment maximizes expected reward under a KL leash to a
//! reference policy: `max_π E[r(u, x)] − β·KL(π(x|u) ‖ π_ref(x|u))`. That
//! objective has a closed-form maximizer,
//! `π*(x|u) = π_ref(x|u)·exp(r(u, x)/β) / Z(u)`, where `Z(u)` is the
//! partition function normalizing over items. Inverting it expresses the
//! reward as a scaled log-ratio, `r(u, x) = β·log(π(x|u)/π_ref(x|u)) +
//! β·log Z(u)`. Plugging that reward into the Bradley-Terry pair likelihood
//! `P(x⁺ ≻ x⁻|u) = σ(r(u, x⁺) − r(u, x⁻))` cancels `Z(u)` (both items share
//! the user) and leaves a pairwise logistic loss on β-scaled log-ratio
//! differences — [`dpo_loss`] below. Nothing else of the RL machinery is
//! needed at runtime; only this loss is implemented.
//!
//! Here the frozen reference model of the classical setup is replaced by the
//! continuously trained satisfaction score, detached from this loss, which
//! keeps the anchor fresh under online updates.
//!
//! # Numeric note
//!
//! The ranking scores are raw reals, so the log-ratio is taken after a
//! softplus-plus-epsilon positivity mapping; see [`dpo_loss`].

use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Graph, Var};
use crate::rng::stream;
use crate::simenv::{Answer, InteractionEvent, QuestionnaireResponse};

/// Floor added after the positivity mapping so log-ratios stay finite.
pub const POLICY_EPS: f64 = 1e-8;

/// One ordered preference: the user prefers `item_pos` over `item_neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub user_id: u64,
    pub item_pos: u64,
    pub item_neg: u64,
    pub source: PairSource,
    /// Label difference that ordered the pair (strictly positive).
    pub margin_label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Behavior,
    Questionnaire,
}

/// Numeric satisfaction label for an answered questionnaire; `None` for
/// unanswered records. Monotone in the answer ordering; only strict
/// differences form pairs.
pub fn satisfaction_label(answer: Answer) -> Option<f64> {
    match answer {
        Answer::Satisfied => Some(1.0),
        Answer::Uncertain => Some(0.5),
        Answer::Dissatisfied => Some(0.0),
        Answer::NoAnswer => None,
    }
}

/// Weights of the behavioral composite score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorWeights {
    pub like: f64,
    pub follow: f64,
    pub comment_or_forward: f64,
}

impl Default for BehaviorWeights {
    fn default() -> Self {
        Self {
            like: 0.5,
            follow: 0.3,
            comment_or_forward: 0.2,
        }
    }
}

/// Composite behavioral score: effective watch ratio plus weighted explicit
/// actions.
pub fn behavior_score(ev: &InteractionEvent, w: &BehaviorWeights) -> f64 {
    let mut y = ev.progress.min(1.0);
    if ev.like {
        y += w.like;
    }
    if ev.follow {
        y += w.follow;
    }
    if ev.comment || ev.forward {
        y += w.comment_or_forward;
    }
    y
}

/// All strictly ordered same-user pairs by behavioral score, downsampled
/// uniformly to `max_pairs` with the given seed. Single-view users contribute
/// nothing; ties never pair.
pub fn build_behavior_pairs(
    events: &[InteractionEvent],
    weights: &BehaviorWeights,
    max_pairs: usize,
    seed: u64,
) -> Vec<PreferencePair> {
    let mut by_user: std::collections::BTreeMap<u64, Vec<&InteractionEvent>> = Default::default();
    for ev in events {
        by_user.entry(ev.user_id).or_default().push(ev);
    }
    let mut pairs = Vec::new();
    for (user, evs) in &by_user {
        for (ai, a) in evs.iter().enumerate() {
            let ya = behavior_score(a, weights);
            for b in evs.iter().skip(ai + 1) {
                if a.item_id == b.item_id {
                    continue;
                }
                let yb = behavior_score(b, weights);
                let (pos, neg, margin) = if ya > yb {
                    (a.item_id, b.item_id, ya - yb)
                } else if yb > ya {
                    (b.item_id, a.item_id, yb - ya)
                } else {
                    continue;
                };
                pairs.push(PreferencePair {
                    user_id: *user,
                    item_pos: pos,
                    item_neg: neg,
                    source: PairSource::Behavior,
                    margin_label: margin,
                });
            }
        }
    }
    sample_pairs(pairs, max_pairs, seed)
}

/// Uniform order-preserving downsample to at most `max_pairs`, deterministic
/// under `seed`.
pub fn sample_pairs(pairs: Vec<PreferencePair>, max_pairs: usize, seed: u64) -> Vec<PreferencePair> {
    if pairs.len() <= max_pairs {
        return pairs;
    }
    let mut rng = stream(seed, "pair.sample", &[]);
    let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), max_pairs).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pairs[i].clone()).collect()
}

/// All strictly ordered same-user pairs from answered questionnaire records.
pub fn build_satis_pairs(responses: &[QuestionnaireResponse]) -> Vec<PreferencePair> {
    let mut by_user: std::collections::BTreeMap<u64, Vec<(&QuestionnaireResponse, f64)>> =
        Default::default();
    for r in responses {
        if let Some(label) = satisfaction_label(r.answer) {
            by_user.entry(r.user_id).or_default().push((r, label));
        }
    }
    let mut pairs = Vec::new();
    for (user, rs) in &by_user {
        for (ai, (a, la)) in rs.iter().enumerate() {
            for (b, lb) in rs.iter().skip(ai + 1) {
                if a.item_id == b.item_id {
                    continue;
                }
                let (pos, neg, margin) = if la > lb {
                    (a.item_id, b.item_id, la - lb)
                } else if lb > la {
                    (b.item_id, a.item_id, lb - la)
                } else {
                    continue;
                };
                pairs.push(PreferencePair {
                    user_id: *user,
                    item_pos: pos,
                    item_neg: neg,
                    source: PairSource::Questionnaire,
                    margin_label: margin,
                });
            }
        }
    }
    pairs
}

/// Selects the alignment pair stream: by default only full-margin pairs
/// (Satisfied vs Dissatisfied); the flag widens it to pairs involving
/// Uncertain answers.
pub fn dpo_pair_filter(pairs: &[PreferencePair], include_uncertain: bool) -> Vec<PreferencePair> {
    pairs
        .iter()
        .filter(|p| {
            p.source == PairSource::Questionnaire
                && (include_uncertain || (p.margin_label - 1.0).abs() < 1e-12)
        })
        .cloned()
        .collect()
}

/// -log σ(a - b) for one pair, as softplus(b - a).
fn pair_logistic(g: &mut Graph, pos: Var, neg: Var) -> Result<Var, DiffError> {
    let diff = g.sub(neg, pos)?;
    Ok(g.softplus(diff))
}

/// Pairwise ranking loss over main scores: mean over pairs of
/// `-log σ(ŷ_pos − ŷ_neg)`. An empty pair list yields an exact zero constant
/// with no gradient.
pub fn bpr_loss(g: &mut Graph, score_pairs: &[(Var, Var)]) -> Result<Var, DiffError> {
    if score_pairs.is_empty() {
        return Ok(g.const_scalar(0.0));
    }
    let mut terms = Vec::with_capacity(score_pairs.len());
    for (pos, neg) in score_pairs {
        terms.push(pair_logistic(g, *pos, *neg)?);
    }
    g.mean_stack(&terms)
}

/// Pairwise logistic loss over satisfaction scores; same functional form as
/// [`bpr_loss`] on questionnaire pairs.
pub fn satis_loss(g: &mut Graph, score_pairs: &[(Var, Var)]) -> Result<Var, DiffError> {
    bpr_loss(g, score_pairs)
}

/// Scores entering the alignment loss for one pair.
#[derive(Debug, Clone, Copy)]
pub struct DpoScores {
    pub y_pos: Var,
    pub y_neg: Var,
    pub s_pos: Var,
    pub s_neg: Var,
}

/// Preference-alignment loss: mean over pairs of
/// `-log σ(β·[log(π(x⁺)/π_ref(x⁺)) − log(π(x⁻)/π_ref(x⁻))])` with
/// `π = softplus(ŷ) + ε` and `π_ref = stop_grad(softplus(ŝ) + ε)`.
/// Gradients flow only into the main-score pathway; the satisfaction scores
/// are detached here and keep training through their own loss.
pub fn dpo_loss(g: &mut Graph, pairs: &[DpoScores], beta: f64) -> Result<Var, DiffError> {
    if beta <= 0.0 {
        return Err(DiffError::InvalidArg(format!("beta must be > 0, got {beta}")));
    }
    if pairs.is_empty() {
        return Ok(g.const_scalar(0.0));
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for p in pairs {
        let log_policy = |g: &mut Graph, y: Var| -> Result<Var, DiffError> {
            let sp = g.softplus(y);
            let pos = g.add_const(sp, POLICY_EPS);
            g.ln(pos)
        };
        let log_ref = |g: &mut Graph, s: Var| -> Result<Var, DiffError> {
            let sp = g.softplus(s);
            let pos = g.add_const(sp, POLICY_EPS);
            let frozen = g.stop_grad(pos);
            g.ln(frozen)
        };
        let lp_pos = log_policy(g, p.y_pos)?;
        let lr_pos = log_ref(g, p.s_pos)?;
        let lp_neg = log_policy(g, p.y_neg)?;
        let lr_neg = log_ref(g, p.s_neg)?;
        let ratio_pos = g.sub(lp_pos, lr_pos)?;
        let ratio_neg = g.sub(lp_neg, lr_neg)?;
        let inner = g.sub(ratio_pos, ratio_neg)?;
        let scaled = g.scale(inner, beta);
        let neg_inner = g.scale(scaled, -1.0);
        terms.push(g.softplus(neg_inner));
    }
    g.mean_stack(&terms)
}

/// Weighted total: `L_main + λ1·L_satis + λ2·L_DPO`.
pub fn total_loss(
    g: &mut Graph,
    l_main: Var,
    l_satis: Var,
    l_dpo: Var,
    lambda1: f64,
    lambda2: f64,
) -> Result<Var, DiffError> {
    let s = g.scale(l_satis, lambda1);
    let d = g.scale(l_dpo, lambda2);
    let sd = g.add(s, d)?;
    g.add(l_main, sd)
}

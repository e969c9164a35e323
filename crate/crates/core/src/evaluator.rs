//! Questionnaire-grounded ranking evaluation.
//!
//! Every Satisfied answer becomes one evaluation instance: the answered item
//! is the single relevant candidate, negatives come first from the same
//! user's Dissatisfied items and are then filled with uniform corpus samples.
//! Candidates are ranked by the deployed main score; HR@k, NDCG@k and MRR are
//! averaged per user first, then across users.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;
use crate::model::{EasqModel, Example};
use crate::rng::stream;
use crate::simenv::{Answer, QuestionnaireResponse};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Candidates per instance (one positive plus negatives).
    pub list_size: usize,
    pub seed: u64,
    /// Fraction of the timestamp range held out for evaluation.
    pub holdout_frac: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            list_size: 100,
            seed: 0,
            holdout_frac: 0.2,
        }
    }
}

/// One ranked-list evaluation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub user_id: u64,
    pub positive_item: u64,
    /// Unique candidate ids, positive included.
    pub candidates: Vec<u64>,
    /// How many negatives came from the user's Dissatisfied answers (the
    /// rest are uniform corpus samples).
    pub n_dissatisfied_negatives: usize,
}

/// Builds one instance per Satisfied response. Negatives are drawn first from
/// the same user's Dissatisfied items, then filled with uniform corpus
/// samples excluding the user's Satisfied items; deterministic under `seed`.
pub fn build_candidate_lists(
    responses: &[QuestionnaireResponse],
    corpus: &[u64],
    list_size: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>, EvalError> {
    if list_size < 2 {
        return Err(EvalError::Config(format!(
            "list_size must be >= 2, got {list_size}"
        )));
    }
    if corpus.len() < list_size {
        return Err(EvalError::Config(format!(
            "corpus has {} items, smaller than list_size {list_size}",
            corpus.len()
        )));
    }
    let mut satisfied: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut dissatisfied: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for r in responses {
        match r.answer {
            Answer::Satisfied => satisfied.entry(r.user_id).or_default().push(r.item_id),
            Answer::Dissatisfied => dissatisfied.entry(r.user_id).or_default().push(r.item_id),
            _ => {}
        }
    }

    let mut instances = Vec::new();
    let mut counter = 0u64;
    for (user, positives) in &satisfied {
        let user_satisfied: BTreeSet<u64> = positives.iter().cloned().collect();
        for &positive in positives {
            let mut candidates = vec![positive];
            let mut seen: BTreeSet<u64> = BTreeSet::new();
            seen.insert(positive);
            if let Some(negs) = dissatisfied.get(user) {
                for &n in negs {
                    if candidates.len() >= list_size {
                        break;
                    }
                    if seen.insert(n) {
                        candidates.push(n);
                    }
                }
            }
            let n_dis = candidates.len() - 1;
            let mut rng = stream(seed, "eval.negatives", &[*user, positive, counter]);
            counter += 1;
            while candidates.len() < list_size {
                let pick = corpus[rng.random_range(0..corpus.len())];
                if user_satisfied.contains(&pick) || !seen.insert(pick) {
                    continue;
                }
                candidates.push(pick);
            }
            instances.push(EvalInstance {
                user_id: *user,
                positive_item: positive,
                candidates,
                n_dissatisfied_negatives: n_dis,
            });
        }
    }
    Ok(instances)
}

/// Sorts scored candidates (descending score, ascending item id on ties) and
/// returns the 1-based rank of the positive.
pub fn rank_of_positive(scored: &[(u64, f64)], positive: u64) -> usize {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .1
            .partial_cmp(&scored[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(scored[a].0.cmp(&scored[b].0))
    });
    order
        .iter()
        .position(|&i| scored[i].0 == positive)
        .expect("positive is among candidates")
        + 1
}

/// Scores an instance's candidates with the frozen model's main score and
/// returns the positive's rank.
pub fn rank_and_score(
    model: &mut EasqModel,
    catalog: &BTreeMap<u64, f64>,
    instance: &EvalInstance,
) -> Result<usize, EvalError> {
    let mut scored = Vec::with_capacity(instance.candidates.len());
    for &item in &instance.candidates {
        let duration = catalog.get(&item).copied().unwrap_or(0.0);
        let y = model.score_main(&Example {
            user_id: instance.user_id,
            item_id: item,
            duration_s: duration,
        })?;
        scored.push((item, y));
    }
    Ok(rank_of_positive(&scored, instance.positive_item))
}

/// Ranking metrics, macro-averaged over users, each with a standard error
/// over users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hr1: f64,
    pub hr5: f64,
    pub hr10: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub ndcg20: f64,
    pub mrr: f64,
    pub hr1_se: f64,
    pub hr5_se: f64,
    pub hr10_se: f64,
    pub ndcg5_se: f64,
    pub ndcg10_se: f64,
    pub ndcg20_se: f64,
    pub mrr_se: f64,
    pub n_users: usize,
    pub n_instances: usize,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "hr1,hr5,hr10,ndcg5,ndcg10,ndcg20,mrr,hr1_se,hr5_se,hr10_se,ndcg5_se,ndcg10_se,ndcg20_se,mrr_se,n_users,n_instances"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.hr1,
            self.hr5,
            self.hr10,
            self.ndcg5,
            self.ndcg10,
            self.ndcg20,
            self.mrr,
            self.hr1_se,
            self.hr5_se,
            self.hr10_se,
            self.ndcg5_se,
            self.ndcg10_se,
            self.ndcg20_se,
            self.mrr_se,
            self.n_users,
            self.n_instances
        )
    }
}

/// Per-instance metric values with a single relevant item: HR@k is a rank
/// indicator, NDCG@k is `1/log2(rank+1)` inside the cut (ideal DCG is 1),
/// MRR is the reciprocal rank.
fn instance_metrics(rank: usize) -> [f64; 7] {
    let hr = |k: usize| if rank <= k { 1.0 } else { 0.0 };
    let ndcg = |k: usize| {
        if rank <= k {
            1.0 / ((rank as f64) + 1.0).log2()
        } else {
            0.0
        }
    };
    [
        hr(1),
        hr(5),
        hr(10),
        ndcg(5),
        ndcg(10),
        ndcg(20),
        1.0 / rank as f64,
    ]
}

/// Aggregates positive ranks into an [`EvalReport`]: each user's instances
/// are averaged first, then user means are averaged and given a standard
/// error.
pub fn compute_metrics(ranks: &[(u64, usize)]) -> Result<EvalReport, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::InsufficientData("no evaluation instances".into()));
    }
    let mut per_user: BTreeMap<u64, Vec<[f64; 7]>> = BTreeMap::new();
    for (user, rank) in ranks {
        assert!(*rank >= 1, "ranks are 1-based");
        per_user.entry(*user).or_default().push(instance_metrics(*rank));
    }
    let user_means: Vec<[f64; 7]> = per_user
        .values()
        .map(|rows| {
            let mut acc = [0.0; 7];
            for r in rows {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a += v;
                }
            }
            acc.map(|v| v / rows.len() as f64)
        })
        .collect();
    let n_users = user_means.len();
    let mut mean = [0.0; 7];
    for u in &user_means {
        for (m, v) in mean.iter_mut().zip(u) {
            *m += v;
        }
    }
    mean = mean.map(|v| v / n_users as f64);
    let mut se = [0.0; 7];
    if n_users > 1 {
        for u in &user_means {
            for i in 0..7 {
                se[i] += (u[i] - mean[i]).powi(2);
            }
        }
        se = se.map(|v| (v / (n_users as f64 - 1.0)).sqrt() / (n_users as f64).sqrt());
    }
    Ok(EvalReport {
        hr1: mean[0],
        hr5: mean[1],
        hr10: mean[2],
        ndcg5: mean[3],
        ndcg10: mean[4],
        ndcg20: mean[5],
        mrr: mean[6],
        hr1_se: se[0],
        hr5_se: se[1],
        hr10_se: se[2],
        ndcg5_se: se[3],
        ndcg10_se: se[4],
        ndcg20_se: se[5],
        mrr_se: se[6],
        n_users,
        n_instances: ranks.len(),
    })
}

/// End-to-end evaluation: builds instances from answered responses, ranks
/// with the model's main score, aggregates.
pub fn evaluate(
    model: &mut EasqModel,
    catalog: &BTreeMap<u64, f64>,
    responses: &[QuestionnaireResponse],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let corpus: Vec<u64> = catalog.keys().cloned().collect();
    let instances = build_candidate_lists(responses, &corpus, cfg.list_size, cfg.seed)?;
    if instances.is_empty() {
        return Err(EvalError::InsufficientData(
            "no Satisfied responses in the evaluation window".into(),
        ));
    }
    let mut ranks = Vec::with_capacity(instances.len());
    for inst in &instances {
        ranks.push((inst.user_id, rank_and_score(model, catalog, inst)?));
    }
    compute_metrics(&ranks)
}

//! Synthetic short-video world.
//!
//! Produces dense behavioral logs and sparse questionnaire responses. A
//! configurable fraction of items carries a hook bias that inflates watch
//! behavior without raising true satisfaction — the planted mismatch that
//! makes satisfaction alignment detectable in this test bed. Also hosts the
//! convergent-validity analysis relating questionnaire answers to posterior
//! behavioral signals.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::sigmoid;
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// One user-item view with behavioral signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub ts: u64,
    pub user_id: u64,
    pub item_id: u64,
    pub watch_time_s: f64,
    pub duration_s: f64,
    /// watch_time / duration; re-watching allowed, capped at 2.0.
    pub progress: f64,
    pub like: bool,
    pub follow: bool,
    pub comment: bool,
    pub forward: bool,
    /// Hidden ground truth, emitted only in debug mode.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_true: Option<f64>,
}

/// Three-way questionnaire answer, or no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    #[serde(rename = "SATISFIED")]
    Satisfied,
    #[serde(rename = "DISSATISFIED")]
    Dissatisfied,
    #[serde(rename = "UNCERTAIN")]
    Uncertain,
    #[serde(rename = "NONE")]
    NoAnswer,
}

/// Explicit satisfaction feedback for one exposure opportunity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub ts: u64,
    pub user_id: u64,
    pub item_id: u64,
    pub exposed: bool,
    pub clicked: bool,
    pub answer: Answer,
}

impl QuestionnaireResponse {
    pub fn answered(&self) -> bool {
        self.answer != Answer::NoAnswer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d_latent: usize,
    /// Fraction of items with a positive hook bias.
    pub rho_hook: f64,
    pub hook_min: f64,
    pub hook_max: f64,
    /// Std of the per-(user, item) satisfaction noise.
    pub sigma_n: f64,
    /// Std of the watch-fraction noise.
    pub sigma_w: f64,
    /// Probability a triggered view exposes the questionnaire.
    pub exposure_rate: f64,
    /// Probability an exposed questionnaire is clicked.
    pub response_rate: f64,
    /// Satisfied threshold on true satisfaction.
    pub tau_hi: f64,
    /// Dissatisfied threshold.
    pub tau_lo: f64,
    /// When set, click propensity grows with answer extremity.
    pub extremity_bias: bool,
    pub n_sessions: usize,
    pub views_per_session: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::production()
    }
}

impl SimConfig {
    /// Production-like sparsity: questionnaires on ~0.5% of triggered views,
    /// ~2% of those answered.
    pub fn production() -> Self {
        Self {
            n_users: 200,
            n_items: 2000,
            d_latent: 8,
            rho_hook: 0.2,
            hook_min: 0.2,
            hook_max: 0.5,
            sigma_n: 0.1,
            sigma_w: 0.15,
            exposure_rate: 0.005,
            response_rate: 0.02,
            tau_hi: 0.7,
            tau_lo: 0.3,
            extremity_bias: false,
            n_sessions: 10_000,
            views_per_session: 10,
            seed: 0,
        }
    }

    /// Dense feedback for fast tests: exposure 0.05, response 0.5.
    pub fn dense() -> Self {
        Self {
            exposure_rate: 0.05,
            response_rate: 0.5,
            ..Self::production()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_users < 1 || self.n_items < 1 || self.d_latent < 1 {
            return Err(SimError::Config("counts must be >= 1".into()));
        }
        for (name, v) in [
            ("rho_hook", self.rho_hook),
            ("exposure_rate", self.exposure_rate),
            ("response_rate", self.response_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.tau_lo >= self.tau_hi {
            return Err(SimError::Config(format!(
                "tau_lo ({}) must be below tau_hi ({})",
                self.tau_lo, self.tau_hi
            )));
        }
        Ok(())
    }
}

const DURATION_MIN: f64 = 5.0;
const DURATION_MAX: f64 = 120.0;
/// Watch fraction can exceed 1 (re-watching) up to this cap.
const WATCH_CAP: f64 = 1.2;

/// Latent state of the synthetic world.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: SimConfig,
    pub seed: u64,
    user_vecs: Vec<Vec<f64>>,
    item_vecs: Vec<Vec<f64>>,
    quality: Vec<f64>,
    hook_bias: Vec<f64>,
    duration: Vec<f64>,
}

/// Samples user/item latents, item quality, durations and the hook-item set.
pub fn init_world(cfg: &SimConfig, seed: u64) -> Result<World, SimError> {
    cfg.validate()?;
    let latent_std = 1.0 / (cfg.d_latent as f64).sqrt();
    let latent = Normal::new(0.0, latent_std).expect("finite std");
    let quality_dist = Normal::new(0.0, 0.3).expect("finite std");

    let mut rng = stream(seed, "world.users", &[]);
    let user_vecs = (0..cfg.n_users)
        .map(|_| (0..cfg.d_latent).map(|_| latent.sample(&mut rng)).collect())
        .collect();
    let mut rng = stream(seed, "world.items", &[]);
    let item_vecs: Vec<Vec<f64>> = (0..cfg.n_items)
        .map(|_| (0..cfg.d_latent).map(|_| latent.sample(&mut rng)).collect())
        .collect();
    let mut rng = stream(seed, "world.quality", &[]);
    let quality = (0..cfg.n_items).map(|_| quality_dist.sample(&mut rng)).collect();
    let mut rng = stream(seed, "world.duration", &[]);
    let duration = (0..cfg.n_items)
        .map(|_| rng.random_range(DURATION_MIN..DURATION_MAX))
        .collect();
    let mut rng = stream(seed, "world.hooks", &[]);
    let hook_bias = (0..cfg.n_items)
        .map(|_| {
            if rng.random_bool(cfg.rho_hook) {
                rng.random_range(cfg.hook_min..cfg.hook_max)
            } else {
                0.0
            }
        })
        .collect();

    Ok(World {
        cfg: cfg.clone(),
        seed,
        user_vecs,
        item_vecs,
        quality,
        hook_bias,
        duration,
    })
}

impl World {
    pub fn duration(&self, item: usize) -> f64 {
        self.duration[item]
    }

    pub fn hook_bias(&self, item: usize) -> f64 {
        self.hook_bias[item]
    }

    pub fn quality(&self, item: usize) -> f64 {
        self.quality[item]
    }

    pub fn n_hook_items(&self) -> usize {
        self.hook_bias.iter().filter(|&&b| b > 0.0).count()
    }

    /// True satisfaction in (0, 1): a logistic of affinity plus quality plus
    /// a per-(user, item) noise term drawn once from a counter-based stream.
    /// Deliberately independent of the hook bias.
    pub fn true_satisfaction(&self, user: usize, item: usize) -> f64 {
        let affinity: f64 = self.user_vecs[user]
            .iter()
            .zip(&self.item_vecs[item])
            .map(|(p, q)| p * q)
            .sum();
        let noise = if self.cfg.sigma_n > 0.0 {
            let mut rng = stream(self.seed, "satis.noise", &[user as u64, item as u64]);
            Normal::new(0.0, self.cfg.sigma_n).expect("finite std").sample(&mut rng)
        } else {
            0.0
        };
        sigmoid(affinity + self.quality[item] + noise)
    }
}

/// Simulates one session: the user consumes the top `n_views` of the ranked
/// list. Watch behavior is inflated by the item's hook bias; explicit actions
/// depend only on true satisfaction.
pub fn simulate_session(
    world: &World,
    user: usize,
    ranked_items: &[usize],
    n_views: usize,
    ts_start: u64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<InteractionEvent> {
    assert!(!ranked_items.is_empty(), "ranked_items must be nonempty");
    let n = n_views.min(ranked_items.len());
    let watch_noise = Normal::new(0.0, world.cfg.sigma_w.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut events = Vec::with_capacity(n);
    for (k, &item) in ranked_items.iter().take(n).enumerate() {
        let s = world.true_satisfaction(user, item);
        let noise = if world.cfg.sigma_w > 0.0 { watch_noise.sample(rng) } else { 0.0 };
        let frac = (s + world.hook_bias[item] + noise).clamp(0.0, WATCH_CAP);
        let duration = world.duration[item];
        let watch_time = frac * duration;
        events.push(InteractionEvent {
            ts: ts_start + k as u64,
            user_id: user as u64,
            item_id: item as u64,
            watch_time_s: watch_time,
            duration_s: duration,
            progress: watch_time / duration,
            like: rng.random_bool((0.15 * s * s).clamp(0.0, 1.0)),
            follow: rng.random_bool((0.03 * s * s).clamp(0.0, 1.0)),
            comment: rng.random_bool((0.02 * s).clamp(0.0, 1.0)),
            forward: rng.random_bool((0.01 * s).clamp(0.0, 1.0)),
            s_true: Some(s),
        });
    }
    events
}

/// The questionnaire fires only after a meaningful viewing experience: at
/// least 7 seconds watched, or half the video reached. Both bounds inclusive.
pub fn questionnaire_trigger(event: &InteractionEvent) -> bool {
    event.watch_time_s >= 7.0 || event.progress >= 0.5
}

/// Exposure/click/answer protocol for one triggered view. Non-triggered
/// events deterministically yield an unexposed record.
pub fn questionnaire_respond(
    world: &World,
    event: &InteractionEvent,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> QuestionnaireResponse {
    let blank = |exposed: bool, clicked: bool, answer: Answer| QuestionnaireResponse {
        ts: event.ts,
        user_id: event.user_id,
        item_id: event.item_id,
        exposed,
        clicked,
        answer,
    };
    if !questionnaire_trigger(event) {
        return blank(false, false, Answer::NoAnswer);
    }
    let cfg = &world.cfg;
    if !rng.random_bool(cfg.exposure_rate) {
        return blank(false, false, Answer::NoAnswer);
    }
    let s = world.true_satisfaction(event.user_id as usize, event.item_id as usize);
    let click_p = if cfg.extremity_bias {
        (cfg.response_rate * (0.5 + 2.0 * (s - 0.5).abs())).clamp(0.0, 1.0)
    } else {
        cfg.response_rate
    };
    if !rng.random_bool(click_p) {
        return blank(true, false, Answer::NoAnswer);
    }
    let answer = if s >= cfg.tau_hi {
        Answer::Satisfied
    } else if s <= cfg.tau_lo {
        Answer::Dissatisfied
    } else {
        Answer::Uncertain
    };
    blank(true, true, answer)
}

/// A generated log pair: time-ordered views plus one questionnaire record per
/// triggered view.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub interactions: Vec<InteractionEvent>,
    pub responses: Vec<QuestionnaireResponse>,
}

/// Runs every session of the configured world: each session draws a user and
/// a random slate, consumes it, and triggers the questionnaire protocol.
/// Output order is canonicalized by (ts, user_id, item_id).
pub fn generate_dataset(world: &World) -> Dataset {
    let cfg = &world.cfg;
    let mut interactions = Vec::with_capacity(cfg.n_sessions * cfg.views_per_session);
    let mut responses = Vec::new();
    let mut ts = 0u64;
    for session in 0..cfg.n_sessions {
        let mut rng = stream(world.seed, "session", &[session as u64]);
        let user = rng.random_range(0..cfg.n_users);
        let slate = rand::seq::index::sample(&mut rng, cfg.n_items, cfg.views_per_session.min(cfg.n_items))
            .into_vec();
        let events = simulate_session(world, user, &slate, cfg.views_per_session, ts, &mut rng);
        ts += events.len() as u64;
        for ev in &events {
            if questionnaire_trigger(ev) {
                responses.push(questionnaire_respond(world, ev, &mut rng));
            }
        }
        interactions.extend(events);
    }
    interactions.sort_by_key(|e| (e.ts, e.user_id, e.item_id));
    responses.sort_by_key(|r| (r.ts, r.user_id, r.item_id));
    Dataset { interactions, responses }
}

/// Validity statistics for one behavioral signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalValidity {
    /// Pooled mean over views answered Dissatisfied.
    pub mean_dissatisfied: f64,
    /// Pooled mean over views answered Satisfied.
    pub mean_satisfied: f64,
    /// Mean over responding users of their all-view average.
    pub mean_user_average: f64,
    /// mean_user_average - mean_dissatisfied.
    pub gap_dissatisfied: f64,
    /// mean_satisfied - mean_user_average.
    pub gap_satisfied: f64,
    /// Two-sided sign-test p across users: per-user Dissatisfied mean vs
    /// that user's average.
    pub p_dissatisfied: f64,
    /// Two-sided sign-test p across users: per-user Satisfied mean vs
    /// that user's average.
    pub p_satisfied: f64,
    pub n_users_dissatisfied: usize,
    pub n_users_satisfied: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityReport {
    pub watch_fraction: SignalValidity,
    pub like_rate: SignalValidity,
    pub n_answered: usize,
}

/// Exact two-sided sign test for `pos` successes out of `pos + neg` trials
/// under p = 1/2 (zero differences already dropped).
pub fn sign_test_p(pos: usize, neg: usize) -> f64 {
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    let k = pos.min(neg);
    // ln C(n, i) accumulated by recurrence, evaluated in log space.
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut ln_c = 0.0; // ln C(n, 0)
    let mut tail = 0.0;
    for i in 0..=k {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        tail += (ln_c - ln2n).exp();
    }
    (2.0 * tail).min(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Effective watch ratio used as the watch-fraction signal.
pub fn effective_watch(ev: &InteractionEvent) -> f64 {
    ev.progress.min(1.0)
}

/// Compares answered questionnaire views against each responding user's
/// posterior behavioral averages. Needs at least one Satisfied and one
/// Dissatisfied answer.
pub fn convergent_validity(
    interactions: &[InteractionEvent],
    responses: &[QuestionnaireResponse],
) -> Result<ValidityReport, SimError> {
    let by_key: BTreeMap<(u64, u64, u64), &InteractionEvent> = interactions
        .iter()
        .map(|e| ((e.ts, e.user_id, e.item_id), e))
        .collect();

    struct PerUser {
        satisfied: Vec<(f64, f64)>,
        dissatisfied: Vec<(f64, f64)>,
    }
    let mut per_user: BTreeMap<u64, PerUser> = BTreeMap::new();
    let mut n_answered = 0usize;
    for r in responses {
        if !r.answered() {
            continue;
        }
        let Some(ev) = by_key.get(&(r.ts, r.user_id, r.item_id)) else {
            continue;
        };
        let signals = (effective_watch(ev), ev.like as u8 as f64);
        n_answered += 1;
        let entry = per_user.entry(r.user_id).or_insert(PerUser {
            satisfied: Vec::new(),
            dissatisfied: Vec::new(),
        });
        match r.answer {
            Answer::Satisfied => entry.satisfied.push(signals),
            Answer::Dissatisfied => entry.dissatisfied.push(signals),
            _ => {}
        }
    }

    let any_sat = per_user.values().any(|u| !u.satisfied.is_empty());
    let any_dis = per_user.values().any(|u| !u.dissatisfied.is_empty());
    if !any_sat || !any_dis {
        return Err(SimError::InsufficientData(
            "need at least one Satisfied and one Dissatisfied answered response".into(),
        ));
    }

    // Per responding user: all-view averages of each signal.
    let mut user_avgs: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ev in interactions {
        if per_user.contains_key(&ev.user_id) {
            let e = user_avgs.entry(ev.user_id).or_default();
            e.0.push(effective_watch(ev));
            e.1.push(ev.like as u8 as f64);
        }
    }

    let build = |pick: fn(&(f64, f64)) -> f64, avg_pick: fn(&(Vec<f64>, Vec<f64>)) -> f64| {
        let mut sat_pool = Vec::new();
        let mut dis_pool = Vec::new();
        let mut avgs = Vec::new();
        let mut sat_pos = 0;
        let mut sat_neg = 0;
        let mut dis_pos = 0;
        let mut dis_neg = 0;
        let mut n_users_sat = 0;
        let mut n_users_dis = 0;
        for (uid, pu) in &per_user {
            let avg = avg_pick(&user_avgs[uid]);
            avgs.push(avg);
            if !pu.satisfied.is_empty() {
                n_users_sat += 1;
                let m = mean(&pu.satisfied.iter().map(pick).collect::<Vec<_>>());
                sat_pool.extend(pu.satisfied.iter().map(pick));
                match m.partial_cmp(&avg) {
                    Some(std::cmp::Ordering::Greater) => sat_pos += 1,
                    Some(std::cmp::Ordering::Less) => sat_neg += 1,
                    _ => {}
                }
            }
            if !pu.dissatisfied.is_empty() {
                n_users_dis += 1;
                let m = mean(&pu.dissatisfied.iter().map(pick).collect::<Vec<_>>());
                dis_pool.extend(pu.dissatisfied.iter().map(pick));
                match m.partial_cmp(&avg) {
                    Some(std::cmp::Ordering::Less) => dis_pos += 1,
                    Some(std::cmp::Ordering::Greater) => dis_neg += 1,
                    _ => {}
                }
            }
        }
        let mean_sat = mean(&sat_pool);
        let mean_dis = mean(&dis_pool);
        let mean_avg = mean(&avgs);
        SignalValidity {
            mean_dissatisfied: mean_dis,
            mean_satisfied: mean_sat,
            mean_user_average: mean_avg,
            gap_dissatisfied: mean_avg - mean_dis,
            gap_satisfied: mean_sat - mean_avg,
            p_dissatisfied: sign_test_p(dis_pos, dis_neg),
            p_satisfied: sign_test_p(sat_pos, sat_neg),
            n_users_dissatisfied: n_users_dis,
            n_users_satisfied: n_users_sat,
        }
    };

    Ok(ValidityReport {
        watch_fraction: build(|s| s.0, |a| mean(&a.0)),
        like_rate: build(|s| s.1, |a| mean(&a.1)),
        n_answered,
    })
}

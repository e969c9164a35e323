//! The satisfaction-aligned ranking network.
//!
//! Feature embeddings feed a small backbone producing a normalized
//! representation `h`. A low-rank side pathway (`B·A·input`, B zero at init)
//! produces an increment `h_lora`. Two fusions with opposite stop-gradient
//! placement route learning signals:
//!

//! * main task input: `h + stop_grad(h_lora)` — behavioral losses update the
//!   backbone and main head but never the side pathway;
//! * satisfaction input: `stop_grad(h) + h_lora` — questionnaire losses update
//!   the side pathway and satisfaction head but never the backbone.
//!
//! Both fused inputs are value-identical on every forward pass; only the
//! gradient routing differs. Each head is a mixture of small feed-forward
//! experts combined by a gate (nonnegative relu gate by default, hard top-k
//! softmax as a baseline).

mod config;

pub use config::{BackboneKind, EasqConfig, LoraTap, RouterKind};

use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, Graph, HasGraph, Var};
use crate::rng::{stream, tag_hash};
use rand_distr::{Distribution, Normal};

/// Number of categories for the duration-class feature.
pub const N_DURATION_CLASSES: usize = 16;
/// Number of bins for the bucketized log-duration feature.
pub const N_DURATION_BUCKETS: usize = 8;
const DURATION_MIN: f64 = 5.0;
const DURATION_MAX: f64 = 120.0;
const NORM_EPS: f64 = 1e-12;

/// One scoring example: the features available for any (user, item) pair at
/// both training and ranking time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub user_id: u64,
    pub item_id: u64,
    pub duration_s: f64,
}

/// Equal-width class over the duration range.
pub fn duration_class(duration_s: f64) -> usize {
    let step = (DURATION_MAX - DURATION_MIN) / N_DURATION_CLASSES as f64;
    let idx = ((duration_s - DURATION_MIN) / step).floor();
    (idx.max(0.0) as usize).min(N_DURATION_CLASSES - 1)
}

/// Log-spaced bin over the duration range.
pub fn duration_bucket(duration_s: f64) -> usize {
    if duration_s <= DURATION_MIN {
        return 0;
    }
    let frac = (duration_s / DURATION_MIN).ln() / (DURATION_MAX / DURATION_MIN).ln();
    ((frac * N_DURATION_BUCKETS as f64).floor().max(0.0) as usize).min(N_DURATION_BUCKETS - 1)
}

/// Disjoint parameter groups; the partition drives all gradient-routing
/// checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// Embedding tables plus backbone projections.
    Backbone,
    /// The low-rank side pathway (A and B).
    Lora,
    /// Main-task gate and experts.
    MainHead,
    /// Satisfaction-task gate and experts.
    SatisHead,
}

#[derive(Debug, Clone)]
pub struct ParamInfo {
    pub name: String,
    pub var: Var,
    pub group: ParamGroup,
}

#[derive(Debug, Clone)]
struct Expert {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

#[derive(Debug, Clone)]
enum Backbone {
    Mlp {
        w_hidden: Var,
        b_hidden: Var,
        w0: Var,
    },
    Attention {
        field_proj: Vec<Var>,
        wq: Var,
        wk: Var,
        wv: Var,
        wo: Var,
        w0: Var,
    },
}

#[derive(Debug, Clone)]
struct Head {
    gate: Option<Var>,
    experts: Vec<Expert>,
}

/// Which fused input to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuseSide {
    Main,
    Satis,
}

/// Output of one backbone pass: the representation plus the tap points the
/// side pathway can read.
#[derive(Debug, Clone, Copy)]
pub struct BackboneOut {
    /// l2-normalized representation.
    pub h: Var,
    /// Input of the final projection.
    pub proj_input: Var,
    /// Concatenated feature embedding.
    pub features: Var,
}

/// The full parameter set plus its computation graph.
#[derive(Debug, Clone)]
pub struct EasqModel {
    cfg: EasqConfig,
    n_users: usize,
    n_items: usize,
    graph: Graph,
    params: Vec<ParamInfo>,
    emb_user: Var,
    emb_item: Var,
    emb_class: Var,
    emb_bucket: Var,
    backbone: Backbone,
    lora: Option<(Var, Var)>,
    main_head: Head,
    satis_head: Head,
}

impl EasqModel {
    /// Builds and seeds a fresh model. Each parameter draws from its own
    /// named random stream, so structural variants (e.g. without the side
    /// pathway) initialize shared parameters identically under the same seed.
    pub fn new(cfg: EasqConfig, n_users: usize, n_items: usize) -> Result<Self, DiffError> {
        cfg.validate()?;
        let mut graph = Graph::new();
        let mut params: Vec<ParamInfo> = Vec::new();
        let seed = cfg.seed;

        let add = |graph: &mut Graph,
                       params: &mut Vec<ParamInfo>,
                       name: &str,
                       group: ParamGroup,
                       shape: &[usize],
                       std: f64|
         -> Result<Var, DiffError> {
            let n: usize = shape.iter().product();
            let values = if std == 0.0 {
                vec![0.0; n]
            } else {
                let mut rng = stream(seed, "init", &[tag_hash(name)]);
                let dist = Normal::new(0.0, std).expect("std is finite");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            let var = graph.param(shape, values)?;
            params.push(ParamInfo {
                name: name.to_string(),
                var,
                group,
            });
            Ok(var)
        };

        // Unit-scale embeddings keep the hidden pre-activations at O(1) under
        // the fan-in-scaled projections, so the representation varies enough
        // across examples for the nonnegative gates to stay live.
        let gp = ParamGroup::Backbone;
        let emb_user = add(&mut graph, &mut params, "emb.user", gp, &[n_users + 1, cfg.emb_dim_id], 1.0)?;
        let emb_item = add(&mut graph, &mut params, "emb.item", gp, &[n_items + 1, cfg.emb_dim_id], 1.0)?;
        let emb_class = add(
            &mut graph,
            &mut params,
            "emb.duration_class",
            gp,
            &[N_DURATION_CLASSES + 1, cfg.emb_dim_cat],
            1.0,
        )?;
        let emb_bucket = add(
            &mut graph,
            &mut params,
            "emb.duration_bucket",
            gp,
            &[N_DURATION_BUCKETS + 1, cfg.emb_dim_bucket],
            1.0,
        )?;

        let x_width = cfg.feature_width();
        let backbone = match cfg.backbone_kind {
            BackboneKind::Mlp => {
                let w_hidden = add(
                    &mut graph,
                    &mut params,
                    "backbone.w_hidden",
                    gp,
                    &[cfg.backbone_hidden, x_width],
                    1.0 / (x_width as f64).sqrt(),
                )?;
                let b_hidden = add(&mut graph, &mut params, "backbone.b_hidden", gp, &[cfg.backbone_hidden], 0.0)?;
                let w0 = add(
                    &mut graph,
                    &mut params,
                    "backbone.w0",
                    gp,
                    &[cfg.d_h, cfg.backbone_hidden],
                    1.0 / (cfg.backbone_hidden as f64).sqrt(),
                )?;
                Backbone::Mlp { w_hidden, b_hidden, w0 }
            }
            BackboneKind::Attention => {
                let t = cfg.backbone_hidden;
                let field_dims = [cfg.emb_dim_id, cfg.emb_dim_id, cfg.emb_dim_cat, cfg.emb_dim_bucket];
                let mut field_proj = Vec::new();
                for (i, fd) in field_dims.iter().enumerate() {
                    field_proj.push(add(
                        &mut graph,
                        &mut params,
                        &format!("backbone.field_proj.{i}"),
                        gp,
                        &[t, *fd],
                        1.0 / (*fd as f64).sqrt(),
                    )?);
                }
                let s = 1.0 / (t as f64).sqrt();
                let wq = add(&mut graph, &mut params, "backbone.wq", gp, &[t, t], s)?;
                let wk = add(&mut graph, &mut params, "backbone.wk", gp, &[t, t], s)?;
                let wv = add(&mut graph, &mut params, "backbone.wv", gp, &[t, t], s)?;
                let wo = add(&mut graph, &mut params, "backbone.wo", gp, &[t, t], s)?;
                let w0 = add(&mut graph, &mut params, "backbone.w0", gp, &[cfg.d_h, t], s)?;
                Backbone::Attention { field_proj, wq, wk, wv, wo, w0 }
            }
        };

        let lora = if cfg.use_lora {
            let tap_width = match cfg.lora_tap {
                LoraTap::ProjInput => cfg.backbone_hidden,
                LoraTap::Features => x_width,
            };
            let r = cfg.lora_rank;
            let a = add(&mut graph, &mut params, "lora.a", ParamGroup::Lora, &[r, tap_width], 1.0 / r as f64)?;
            // B starts at zero so the side pathway is a no-op at step 0.
            let b = add(&mut graph, &mut params, "lora.b", ParamGroup::Lora, &[cfg.d_h, r], 0.0)?;
            Some((a, b))
        } else {
            None
        };

        let build_head = |graph: &mut Graph,
                              params: &mut Vec<ParamInfo>,
                              prefix: &str,
                              group: ParamGroup,
                              k: usize|
         -> Result<Head, DiffError> {
            let gate = match cfg.router_kind {
                RouterKind::Unit => None,
                _ => Some(add(
                    graph,
                    params,
                    &format!("{prefix}.gate"),
                    group,
                    &[k, cfg.d_h],
                    1.0 / (cfg.d_h as f64).sqrt(),
                )?),
            };
            let mut experts = Vec::new();
            for e in 0..k {
                let w1 = add(
                    graph,
                    params,
                    &format!("{prefix}.expert.{e}.w1"),
                    group,
                    &[cfg.expert_hidden, cfg.d_h],
                    1.0 / (cfg.d_h as f64).sqrt(),
                )?;
                let b1 = add(graph, params, &format!("{prefix}.expert.{e}.b1"), group, &[cfg.expert_hidden], 0.0)?;
                let w2 = add(
                    graph,
                    params,
                    &format!("{prefix}.expert.{e}.w2"),
                    group,
                    &[1, cfg.expert_hidden],
                    1.0 / (cfg.expert_hidden as f64).sqrt(),
                )?;
                let b2 = add(graph, params, &format!("{prefix}.expert.{e}.b2"), group, &[1], 0.0)?;
                experts.push(Expert { w1, b1, w2, b2 });
            }
            Ok(Head { gate, experts })
        };

        let main_head = build_head(&mut graph, &mut params, "main", ParamGroup::MainHead, cfg.k1)?;
        let satis_head = build_head(&mut graph, &mut params, "satis", ParamGroup::SatisHead, cfg.k2)?;

        Ok(Self {
            cfg,
            n_users,
            n_items,
            graph,
            params,
            emb_user,
            emb_item,
            emb_class,
            emb_bucket,
            backbone,
            lora,
            main_head,
            satis_head,
        })
    }

    pub fn config(&self) -> &EasqConfig {
        &self.cfg
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Forwards many examples and hands the (main, satis) score nodes to a
    /// loss builder; the everything-in-one-graph shape that the trainer and
    /// the gradient checker both use.
    pub fn with_scores<F>(&mut self, examples: &[Example], build: F) -> Result<Var, DiffError>
    where
        F: FnOnce(&mut Graph, &[(Var, Var)]) -> Result<Var, DiffError>,
    {
        let mut scores = Vec::with_capacity(examples.len());
        for ex in examples {
            scores.push(self.forward_all(ex)?);
        }
        build(&mut self.graph, &scores)
    }

    pub fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    pub fn param_vars(&self) -> Vec<Var> {
        self.params.iter().map(|p| p.var).collect()
    }

    pub fn group_params(&self, group: ParamGroup) -> Vec<&ParamInfo> {
        self.params.iter().filter(|p| p.group == group).collect()
    }

    /// Total scalar count in a group.
    pub fn group_size(&self, group: ParamGroup) -> usize {
        self.group_params(group)
            .iter()
            .map(|p| self.graph.values(p.var).len())
            .sum()
    }

    /// Bit-level snapshot of a group, for freeze assertions.
    pub fn group_bits(&self, group: ParamGroup) -> Vec<u64> {
        self.group_params(group)
            .iter()
            .flat_map(|p| self.graph.values(p.var).iter().map(|v| v.to_bits()))
            .collect()
    }

    /// Drops per-pass nodes and zeroes all gradient accumulators.
    pub fn end_step(&mut self) {
        self.graph.clear_tape();
        self.graph.zero_grads();
    }

    fn lookup(id: u64, vocab: usize) -> usize {
        // row 0 is the reserved out-of-vocabulary slot
        if (id as usize) < vocab {
            id as usize + 1
        } else {
            0
        }
    }

    /// Concatenated embedding of all feature fields. Unknown ids fall back to
    /// the reserved row 0 of their table.
    pub fn embed_features(&mut self, ex: &Example) -> Result<Var, DiffError> {
        let u = Self::lookup(ex.user_id, self.n_users);
        let i = Self::lookup(ex.item_id, self.n_items);
        let c = duration_class(ex.duration_s) + 1;
        let b = duration_bucket(ex.duration_s) + 1;
        let eu = self.graph.gather_row(self.emb_user, u)?;
        let ei = self.graph.gather_row(self.emb_item, i)?;
        let ec = self.graph.gather_row(self.emb_class, c)?;
        let eb = self.graph.gather_row(self.emb_bucket, b)?;
        self.graph.concat(&[eu, ei, ec, eb])
    }

    /// Backbone pass: produces the unit-norm representation `h` and the tap
    /// points for the side pathway.
    pub fn backbone_forward(&mut self, x: Var) -> Result<BackboneOut, DiffError> {
        let g = &mut self.graph;
        match &self.backbone {
            Backbone::Mlp { w_hidden, b_hidden, w0 } => {
                let pre = g.affine(*w_hidden, x)?;
                let pre = g.add(pre, *b_hidden)?;
                let z = g.softplus(pre);
                let proj = g.affine(*w0, z)?;
                let h = g.l2_normalize(proj, NORM_EPS)?;
                Ok(BackboneOut { h, proj_input: z, features: x })
            }
            Backbone::Attention { field_proj, wq, wk, wv, wo, w0 } => {
                let dims = [
                    self.cfg.emb_dim_id,
                    self.cfg.emb_dim_id,
                    self.cfg.emb_dim_cat,
                    self.cfg.emb_dim_bucket,
                ];
                let n_tokens = dims.len();
                let mut offset = 0;
                let mut tokens = Vec::with_capacity(n_tokens);
                for (f, d) in dims.iter().enumerate() {
                    let field = g.slice(x, offset, *d)?;
                    tokens.push(g.affine(field_proj[f], field)?);
                    offset += d;
                }
                let q: Vec<Var> = tokens.iter().map(|t| g.affine(*wq, *t)).collect::<Result<_, _>>()?;
                let k: Vec<Var> = tokens.iter().map(|t| g.affine(*wk, *t)).collect::<Result<_, _>>()?;
                let v: Vec<Var> = tokens.iter().map(|t| g.affine(*wv, *t)).collect::<Result<_, _>>()?;

                let heads = self.cfg.n_heads;
                let hd = self.cfg.backbone_hidden / heads;
                let scale = 1.0 / (hd as f64).sqrt();
                let mut attended = Vec::with_capacity(n_tokens);
                for i in 0..n_tokens {
                    let mut head_outs = Vec::with_capacity(heads);
                    for hix in 0..heads {
                        let qi = g.slice(q[i], hix * hd, hd)?;
                        let mut scores = Vec::with_capacity(n_tokens);
                        for kj in &k {
                            let kjh = g.slice(*kj, hix * hd, hd)?;
                            let s = g.dot(qi, kjh)?;
                            scores.push(g.scale(s, scale));
                        }
                        let logits = g.stack(&scores)?;
                        let alpha = g.softmax(logits);
                        let mut acc: Option<Var> = None;
                        for (j, vj) in v.iter().enumerate() {
                            let vjh = g.slice(*vj, hix * hd, hd)?;
                            let aj = g.slice(alpha, j, 1)?;
                            let term = g.mul_scalar(aj, vjh)?;
                            acc = Some(match acc {
                                Some(a) => g.add(a, term)?,
                                None => term,
                            });
                        }
                        head_outs.push(acc.expect("n_tokens >= 1"));
                    }
                    let merged = g.concat(&head_outs)?;
                    attended.push(g.affine(*wo, merged)?);
                }
                let mut pooled = attended[0];
                for t in &attended[1..] {
                    pooled = g.add(pooled, *t)?;
                }
                let pooled = g.scale(pooled, 1.0 / n_tokens as f64);
                let z = g.softplus(pooled);
                let proj = g.affine(*w0, z)?;
                let h = g.l2_normalize(proj, NORM_EPS)?;
                Ok(BackboneOut { h, proj_input: z, features: x })
            }
        }
    }

    /// Low-rank increment `B·(A·input)`. The tap input is detached so the
    /// pathway's gradient never reaches the backbone or embeddings; the raw
    /// increment carries no activation or normalization. Returns `None` when
    /// the pathway is disabled.
    pub fn lora_forward(&mut self, out: &BackboneOut) -> Result<Option<Var>, DiffError> {
        let Some((a, b)) = self.lora else {
            return Ok(None);
        };
        let tap = match self.cfg.lora_tap {
            LoraTap::ProjInput => out.proj_input,
            LoraTap::Features => out.features,
        };
        let frozen = self.graph.stop_grad(tap);
        let low = self.graph.affine(a, frozen)?;
        Ok(Some(self.graph.affine(b, low)?))
    }

    /// Elementwise sum with the side-specific branch detached. Both sides are
    /// value-identical; they differ only in gradient routing.
    pub fn fuse(&mut self, h: Var, h_lora: Option<Var>, side: FuseSide) -> Result<Var, DiffError> {
        match side {
            FuseSide::Main => match h_lora {
                Some(l) => {
                    let frozen = self.graph.stop_grad(l);
                    self.graph.add(h, frozen)
                }
                None => Ok(h),
            },
            FuseSide::Satis => {
                let frozen = self.graph.stop_grad(h);
                match h_lora {
                    Some(l) => self.graph.add(frozen, l),
                    None => Ok(frozen),
                }
            }
        }
    }

    fn head(&self, side: FuseSide) -> &Head {
        match side {
            FuseSide::Main => &self.main_head,
            FuseSide::Satis => &self.satis_head,
        }
    }

    /// Expert weights for one head: `relu(W_gate·fused)` (variable number of
    /// active experts), hard top-k softmax, or the constant 1 for the
    /// single-expert variant.
    pub fn route(&mut self, fused: Var, side: FuseSide) -> Result<Var, DiffError> {
        let head = self.head(side).clone();
        match (self.cfg.router_kind, head.gate) {
            (RouterKind::Unit, _) | (_, None) => {
                self.graph.input(&[head.experts.len()], vec![1.0; head.experts.len()])
            }
            (RouterKind::Relu, Some(gate)) => {
                let logits = self.graph.affine(gate, fused)?;
                Ok(self.graph.relu(logits))
            }
            (RouterKind::TopkSoftmax, Some(gate)) => {
                let logits = self.graph.affine(gate, fused)?;
                self.graph.topk_softmax(logits, self.cfg.topk)
            }
        }
    }

    /// Weighted sum of expert outputs: `Σ_k weights_k · FFN_k(fused)`.
    pub fn moe_forward(&mut self, fused: Var, weights: Var, side: FuseSide) -> Result<Var, DiffError> {
        let head = self.head(side).clone();
        if self.graph.values(weights).len() != head.experts.len() {
            return Err(DiffError::ShapeMismatch {
                op: "moe_forward",
                expected: vec![head.experts.len()],
                got: self.graph.shape(weights).to_vec(),
            });
        }
        let g = &mut self.graph;
        let mut acc: Option<Var> = None;
        for (kix, e) in head.experts.iter().enumerate() {
            let pre = g.affine(e.w1, fused)?;
            let pre = g.add(pre, e.b1)?;
            let hid = g.softplus(pre);
            let out = g.affine(e.w2, hid)?;
            let out = g.add(out, e.b2)?;
            let wk = g.slice(weights, kix, 1)?;
            let term = g.mul(wk, out)?;
            acc = Some(match acc {
                Some(a) => g.add(a, term)?,
                None => term,
            });
        }
        Ok(acc.expect("expert count >= 1"))
    }

    /// Full pass for one example: returns the main score and the satisfaction
    /// score as graph nodes (both shape `[1]`).
    pub fn forward_all(&mut self, ex: &Example) -> Result<(Var, Var), DiffError> {
        let x = self.embed_features(ex)?;
        let out = self.backbone_forward(x)?;
        let h_lora = self.lora_forward(&out)?;
        let h_main = self.fuse(out.h, h_lora, FuseSide::Main)?;
        let h_satis = self.fuse(out.h, h_lora, FuseSide::Satis)?;
        let w_main = self.route(h_main, FuseSide::Main)?;
        let y = self.moe_forward(h_main, w_main, FuseSide::Main)?;
        let w_satis = self.route(h_satis, FuseSide::Satis)?;
        let s = self.moe_forward(h_satis, w_satis, FuseSide::Satis)?;
        Ok((y, s))
    }

    /// Main-score pass only; the satisfaction head is skipped (it never feeds
    /// into the main score).
    pub fn forward_main(&mut self, ex: &Example) -> Result<Var, DiffError> {
        let x = self.embed_features(ex)?;
        let out = self.backbone_forward(x)?;
        let h_lora = self.lora_forward(&out)?;
        let h_main = self.fuse(out.h, h_lora, FuseSide::Main)?;
        let w_main = self.route(h_main, FuseSide::Main)?;
        self.moe_forward(h_main, w_main, FuseSide::Main)
    }

    /// Main score as a plain number; clears the per-pass tape afterwards.
    /// This is the deployed inference output.
    pub fn score_main(&mut self, ex: &Example) -> Result<f64, DiffError> {
        let y = self.forward_main(ex)?;
        let v = self.graph.scalar(y);
        self.graph.clear_tape();
        Ok(v)
    }

    /// Satisfaction score as a plain number; clears the per-pass tape.
    pub fn score_satis(&mut self, ex: &Example) -> Result<f64, DiffError> {
        let (_, s) = self.forward_all(ex)?;
        let v = self.graph.scalar(s);
        self.graph.clear_tape();
        Ok(v)
    }
}

impl HasGraph for EasqModel {
    fn graph(&self) -> &Graph {
        &self.graph
    }
    fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }
}

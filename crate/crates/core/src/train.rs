//! Exact reverse-mode gradients of the bottom-up sweep, SGD training over a
//! corpus, a finite-difference oracle, and parameter/report persistence.
//!
//! Gradient accumulation follows fixed, id-free orders everywhere (groups in
//! reverse execution order, cells in their recorded canonical order, members
//! in canonical member order, tools lexicographically by name), so results
//! are bitwise reproducible and invariant under node renaming.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedder::description_digest;
use crate::hgnn::{forward_tool, EncoderParams, FeatSrc, ToolTape};
use crate::math::{dot, Mat};
use crate::rng::Rng;
use crate::store::{EmbeddingKind, EmbeddingRecord};
use crate::toolgraph::ToolGraph;
use crate::{Error, Result};

/// Whether computed parent states replace parent features for the level
/// above (`latent`) or features stay at their initial values (`initial`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum Propagation {
    #[default]
    Latent,
    Initial,
}

impl std::fmt::Display for Propagation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Propagation::Latent => "latent",
            Propagation::Initial => "initial",
        })
    }
}

impl FromStr for Propagation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(Propagation::Latent),
            "initial" => Ok(Propagation::Initial),
            other => Err(Error::domain(
                "BAD_MODE",
                format!("unknown propagation mode '{other}' (latent|initial)"),
            )),
        }
    }
}

fn default_d_v() -> usize {
    256
}
fn default_d_e() -> usize {
    16
}
fn default_t() -> usize {
    2
}
fn default_learning_rate() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    8
}
fn default_clip_norm() -> f64 {
    5.0
}
fn default_init_scale() -> f64 {
    0.1
}

/// Training configuration; every field has a default so partial JSON
/// configs parse. d_h must equal d_v (the regression compares features with
/// states), so a config overriding d_v must override d_h alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_d_v")]
    pub d_v: usize,
    #[serde(default = "default_d_e")]
    pub d_e: usize,
    #[serde(default = "default_d_v")]
    pub d_h: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t_steps: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default)]
    pub propagation: Propagation,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_v: default_d_v(),
            d_e: default_d_e(),
            d_h: default_d_v(),
            t_steps: default_t(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed: 0,
            clip_norm: default_clip_norm(),
            propagation: Propagation::default(),
            init_scale: default_init_scale(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::domain("BAD_CONFIG", m));
        if self.d_v == 0 {
            return bad("d_v must be positive".into());
        }
        if self.d_e == 0 {
            return bad("d_e must be positive".into());
        }
        if self.d_h != self.d_v {
            return bad(format!("d_h {} must equal d_v {}", self.d_h, self.d_v));
        }
        if self.t_steps == 0 {
            return bad("T must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be a positive real".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return bad("clip_norm must be a positive real".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad("init_scale must be a non-negative real".into());
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        2 * self.d_v + self.d_e
    }
}

/// Gradient of total_loss with respect to (W, U, b).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &EncoderParams) -> Self {
        Gradients {
            w: Mat::zeros(p.w.rows(), p.w.cols()),
            u: Mat::zeros(p.u.rows(), p.u.cols()),
            b: vec![0.0; p.b.len()],
        }
    }

    /// Global L2 norm over all entries, accumulated W then U then b.
    pub fn norm(&self) -> f64 {
        (self.w.sq_sum() + self.u.sq_sum() + dot(&self.b, &self.b)).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.w.scale(s);
        self.u.scale(s);
        for v in &mut self.b {
            *v *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.u.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

/// Uniform [-init_scale, +init_scale] parameters, drawn from a fresh
/// xoshiro256** stream on cfg.seed, filling W row-major, then U, then b.
pub fn init_params(cfg: &TrainConfig) -> EncoderParams {
    let mut rng = Rng::new(cfg.seed);
    let s = cfg.init_scale;
    let mut p = EncoderParams::zeros(cfg.d_v, cfg.d_e);
    for v in p.w.data_mut() {
        *v = rng.uniform(-s, s);
    }
    for v in p.u.data_mut() {
        *v = rng.uniform(-s, s);
    }
    for v in &mut p.b {
        *v = rng.uniform(-s, s);
    }
    p
}

/// Replays one tool's tape backward, accumulating into `grads`.
fn backward_tool(p: &EncoderParams, tape: &ToolTape, grads: &mut Gradients) {
    let d_h = p.d_h();
    let d_v = d_h;
    let d_e = p.d_in() - 2 * d_v;

    let mut adj_hp: Vec<Vec<f64>> = tape.groups.iter().map(|_| vec![0.0; d_h]).collect();
    let mut delta = vec![0.0; d_h];

    for g_idx in (0..tape.groups.len()).rev() {
        let gt = &tape.groups[g_idx];
        let n = gt.feats.len();
        let t_steps = gt.states.len() - 1;

        let mut adj = std::mem::take(&mut adj_hp[g_idx]);
        for (a, s) in adj.iter_mut().zip(&gt.loss_seed) {
            *a += s;
        }

        let mut adj_states: Vec<Vec<Vec<f64>>> = gt
            .states
            .iter()
            .map(|lvl| lvl.iter().map(|_| vec![0.0; d_h]).collect())
            .collect();
        let mut s_self: Vec<Vec<f64>> = (0..n).map(|_| vec![0.0; d_h]).collect();
        let mut s_nb: Vec<Vec<f64>> = (0..n).map(|_| vec![0.0; d_h]).collect();
        let mut s_parent = vec![0.0; d_h];

        for cell in &gt.parent_cells {
            for r in 0..d_h {
                delta[r] = adj[r] * (1.0 - cell.y[r] * cell.y[r]);
            }
            for (b, d) in grads.b.iter_mut().zip(&delta) {
                *b += d;
            }
            grads.w.outer_add(&delta, &gt.states[t_steps][cell.j]);
            p.w.matvec_t_add(&delta, &mut adj_states[t_steps][cell.j]);
            for (s, d) in s_parent.iter_mut().zip(&delta) {
                *s += d;
            }
            for (s, d) in s_nb[cell.j].iter_mut().zip(&delta) {
                *s += d;
            }
        }

        for t in (1..=t_steps).rev() {
            for m in 0..n {
                let ga = std::mem::take(&mut adj_states[t][m]);
                if ga.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for cell in &gt.cells[t - 1][m] {
                    for r in 0..d_h {
                        delta[r] = ga[r] * (1.0 - cell.y[r] * cell.y[r]);
                    }
                    for (b, d) in grads.b.iter_mut().zip(&delta) {
                        *b += d;
                    }
                    grads.w.outer_add(&delta, &gt.states[t - 1][cell.j]);
                    p.w.matvec_t_add(&delta, &mut adj_states[t - 1][cell.j]);
                    for (s, d) in s_self[m].iter_mut().zip(&delta) {
                        *s += d;
                    }
                    for (s, d) in s_nb[cell.j].iter_mut().zip(&delta) {
                        *s += d;
                    }
                }
            }
        }

        // U receives the per-aggregate delta sums as outer products against
        // the shared input columns: the parent step first, then members in
        // canonical order. Column blocks are [own feature | edge | neighbor].
        grads.u.outer_add_block(0, &s_parent, &gt.parent_feat);
        grads.u.outer_add_block(d_v, &s_parent, &gt.enc_parent);
        for m in 0..n {
            grads.u.outer_add_block(0, &s_self[m], &gt.feats[m]);
            grads.u.outer_add_block(d_v, &s_self[m], &gt.enc_child);
            grads.u.outer_add_block(d_v + d_e, &s_nb[m], &gt.feats[m]);
        }

        // Route feature adjoints to producing groups (latent propagation);
        // initial features are constants.
        for m in 0..n {
            if let FeatSrc::FromGroup(gi) = gt.member_src[m] {
                let mut buf = std::mem::take(&mut adj_states[0][m]);
                p.u.matvec_t_block_add(0, &s_self[m], &mut buf);
                p.u.matvec_t_block_add(d_v + d_e, &s_nb[m], &mut buf);
                for (a, v) in adj_hp[gi].iter_mut().zip(&buf) {
                    *a += v;
                }
            }
        }
    }
}

/// Sorts tool references lexicographically by name.
fn sorted_refs(corpus: &[ToolGraph]) -> Vec<&ToolGraph> {
    let mut refs: Vec<&ToolGraph> = corpus.iter().collect();
    refs.sort_by(|a, b| a.name.cmp(&b.name));
    refs
}

fn gradient_refs(
    p: &EncoderParams,
    tools: &[&ToolGraph],
    cfg: &TrainConfig,
) -> Result<(Gradients, f64)> {
    let mut grads = Gradients::zeros_like(p);
    let mut total = 0.0;
    let mut refs: Vec<&ToolGraph> = tools.to_vec();
    refs.sort_by(|a, b| a.name.cmp(&b.name));
    // Per-tool accumulation into a fresh buffer keeps the batch gradient an
    // exact elementwise sum of per-tool gradients, so duplicating a tool
    // exactly doubles its contribution.
    let mut tool_grads = Gradients::zeros_like(p);
    for g in refs {
        let trace = forward_tool(p, g, cfg)?;
        total += trace.total_loss;
        tool_grads.w.fill(0.0);
        tool_grads.u.fill(0.0);
        tool_grads.b.iter_mut().for_each(|x| *x = 0.0);
        backward_tool(p, &trace.tape, &mut tool_grads);
        grads.w.add_scaled(1.0, &tool_grads.w);
        grads.u.add_scaled(1.0, &tool_grads.u);
        for (a, b) in grads.b.iter_mut().zip(&tool_grads.b) {
            *a += b;
        }
    }
    Ok((grads, total))
}

/// Exact gradients of the summed corpus loss by reverse accumulation,
/// together with that loss. Tools are reduced in lexicographic name order.
pub fn gradient(
    p: &EncoderParams,
    corpus: &[ToolGraph],
    cfg: &TrainConfig,
) -> Result<(Gradients, f64)> {
    p.check_shapes()?;
    if !p.is_finite() {
        return Err(Error::domain("NON_FINITE", "parameters are non-finite"));
    }
    let refs: Vec<&ToolGraph> = corpus.iter().collect();
    gradient_refs(p, &refs, cfg)
}

fn loss_total(p: &EncoderParams, tools: &[&ToolGraph], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for g in tools {
        total += forward_tool(p, g, cfg)?.total_loss;
    }
    Ok(total)
}

/// Central finite differences of the corpus loss per scalar parameter.
pub fn finite_diff_gradient(
    p: &EncoderParams,
    corpus: &[ToolGraph],
    cfg: &TrainConfig,
    eps: f64,
) -> Result<Gradients> {
    if eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::domain("BAD_EPS", "eps must be positive"));
    }
    let refs = sorted_refs(corpus);
    let mut out = Gradients::zeros_like(p);
    let mut probe = p.clone();

    let diff = |probe: &mut EncoderParams, sel: &dyn Fn(&mut EncoderParams) -> &mut f64| {
        let base = *sel(probe);
        *sel(probe) = base + eps;
        let up = loss_total(probe, &refs, cfg)?;
        *sel(probe) = base - eps;
        let down = loss_total(probe, &refs, cfg)?;
        *sel(probe) = base;
        Ok::<f64, Error>((up - down) / (2.0 * eps))
    };

    for i in 0..p.w.data().len() {
        *out.w.data_mut().get_mut(i).unwrap() =
            diff(&mut probe, &|q: &mut EncoderParams| &mut q.w.data_mut()[i])?;
    }
    for i in 0..p.u.data().len() {
        *out.u.data_mut().get_mut(i).unwrap() =
            diff(&mut probe, &|q: &mut EncoderParams| &mut q.u.data_mut()[i])?;
    }
    for i in 0..p.b.len() {
        out.b[i] = diff(&mut probe, &|q: &mut EncoderParams| &mut q.b[i])?;
    }
    Ok(out)
}

/// Outcome of a training run. Serialization covers the config echo and the
/// loss history only, so serialized reports are bitwise reproducible; the
/// final parameters live in `params` (persisted separately as binary) and
/// wall-clock time is reported out of band.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub epoch_mean_loss: Vec<f64>,
    #[serde(skip)]
    pub params: EncoderParams,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// SGD over shuffled batches.
///
/// Each epoch shuffles the identity ordering of the corpus with a persistent
/// xoshiro256** stream seeded from cfg.seed, cuts it into batches, and per
/// batch takes one clipped gradient step. The shuffle decides batch
/// membership only; within a batch tools reduce in lexicographic name order.
/// The recorded per-epoch mean is measured by a fresh forward pass after the
/// epoch's updates. Non-finite parameters after a step, or a non-finite
/// mean, abort with the divergence error.
pub fn train(corpus: &[ToolGraph], cfg: &TrainConfig) -> Result<TrainReport> {
    let started = Instant::now();
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::domain("EMPTY_CORPUS", "training corpus is empty"));
    }
    let mut params = init_params(cfg);
    let mut shuffle_rng = Rng::new(cfg.seed);
    let eval_refs = sorted_refs(corpus);
    let n = corpus.len();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut perm);
        for chunk in perm.chunks(cfg.batch_size) {
            let batch: Vec<&ToolGraph> = chunk.iter().map(|&i| &corpus[i]).collect();
            let (mut g, _) = gradient_refs(&params, &batch, cfg)?;
            let norm = g.norm();
            if norm > cfg.clip_norm {
                g.scale(cfg.clip_norm / norm);
            }
            params.w.add_scaled(-cfg.learning_rate, &g.w);
            params.u.add_scaled(-cfg.learning_rate, &g.u);
            for (pv, gv) in params.b.iter_mut().zip(&g.b) {
                *pv -= cfg.learning_rate * gv;
            }
            if !params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                });
            }
        }
        let mean = loss_total(&params, &eval_refs, cfg)? / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        history.push(mean);
    }

    Ok(TrainReport {
        config: cfg.clone(),
        epoch_mean_loss: history,
        params,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One structural record per node per tool: the node's final latent from a
/// bottom-up sweep with latent propagation (parents carry their computed
/// state, leaves their last child-iteration state).
pub fn export_embeddings(
    corpus: &[ToolGraph],
    p: &EncoderParams,
    cfg: &TrainConfig,
) -> Result<Vec<EmbeddingRecord>> {
    let mut latent_cfg = cfg.clone();
    latent_cfg.propagation = Propagation::Latent;
    let mut out = Vec::new();
    for g in corpus {
        let trace = forward_tool(p, g, &latent_cfg)?;
        for (id, h) in trace.final_latents {
            out.push(EmbeddingRecord {
                tool_name: g.name.clone(),
                node_id: id.clone(),
                vector: h,
                kind: EmbeddingKind::Structural,
                description_digest: description_digest(&g.nodes[&id].description),
            });
        }
    }
    Ok(out)
}

/// Outcome of the seeded gradient-check suite.
#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub max_rel_error: f64,
    pub max_abs_small_error: f64,
    pub ok: bool,
}

/// Random small tree with unit-norm features installed directly (the suite
/// exercises dimensions below the text embedder's minimum).
fn gradcheck_instance(idx: usize) -> ToolGraph {
    use crate::toolgraph::{EdgeKind, ToolEdge, ToolNode};
    let mut rng = Rng::new(0x4743_0000 + idx as u64);
    let n = 3 + rng.range(6) as usize;
    let mut parent = vec![0usize; n];
    let mut depth = vec![0u32; n];
    for j in 1..n {
        let p = rng.range(j as u64) as usize;
        parent[j] = p;
        depth[j] = depth[p] + 1;
    }
    let id_of = |j: usize| format!("g{j:02}");
    let mut edges = Vec::new();
    for (j, &pj) in parent.iter().enumerate().skip(1) {
        edges.push(ToolEdge {
            from_id: id_of(j),
            to_id: id_of(pj),
            kind: EdgeKind::ChildToParent,
            edge_feature: None,
        });
    }
    for p in 0..n {
        let kids: Vec<usize> = (1..n).filter(|&j| parent[j] == p).collect();
        for w in kids.windows(2) {
            if rng.next_f64() < 0.5 {
                edges.push(ToolEdge {
                    from_id: id_of(w[0]),
                    to_id: id_of(w[1]),
                    kind: EdgeKind::Sibling,
                    edge_feature: None,
                });
            }
        }
    }
    let mut g = ToolGraph {
        name: format!("grad_{idx:02}"),
        nodes: BTreeMap::new(),
        edges,
        root_id: id_of(0),
    };
    for (j, &dj) in depth.iter().enumerate() {
        let mut v: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let norm = crate::math::l2_norm(&v);
        assert!(norm > 1e-3, "degenerate random feature");
        for x in &mut v {
            *x /= norm;
        }
        g.nodes.insert(
            id_of(j),
            ToolNode {
                local_id: id_of(j),
                description: format!("instance {idx} node {j}"),
                depth: dj,
                queries: Vec::new(),
                initial_feature: Some(v),
            },
        );
    }
    g
}

/// Checks analytic gradients against central finite differences (eps 1e-5)
/// on 20 seeded instances with d_v=4, d_e=2, T alternating 1 and 2, both
/// propagation modes, graphs of 3 to 8 nodes. Entries where both sides are
/// below 1e-8 in magnitude compare absolutely, the rest relatively.
pub fn gradcheck_suite() -> Result<GradcheckReport> {
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for idx in 0..20 {
        let g = gradcheck_instance(idx);
        debug_assert!(crate::toolgraph::validate(&g).ok);
        let cfg = TrainConfig {
            d_v: 4,
            d_e: 2,
            d_h: 4,
            t_steps: 1 + idx % 2,
            propagation: if (idx / 2) % 2 == 0 {
                Propagation::Latent
            } else {
                Propagation::Initial
            },
            seed: 9000 + idx as u64,
            init_scale: 0.3,
            ..TrainConfig::default()
        };
        let p = init_params(&cfg);
        let corpus = [g];
        let (grads, _) = gradient(&p, &corpus, &cfg)?;
        let fd = finite_diff_gradient(&p, &corpus, &cfg, 1e-5)?;
        let pairs = grads
            .w
            .data()
            .iter()
            .zip(fd.w.data())
            .chain(grads.u.data().iter().zip(fd.u.data()))
            .chain(grads.b.iter().zip(&fd.b));
        for (a, f) in pairs {
            if a.abs().max(f.abs()) < 1e-8 {
                max_abs = max_abs.max((a - f).abs());
            } else {
                max_rel = max_rel.max((a - f).abs() / a.abs().max(f.abs()));
            }
        }
    }
    Ok(GradcheckReport {
        instances: 20,
        max_rel_error: max_rel,
        max_abs_small_error: max_abs,
        ok: max_rel < 1e-4 && max_abs < 1e-8,
    })
}

const PARAMS_MAGIC: &[u8; 5] = b"HGNN1";

/// Binary layout: magic `HGNN1`; d_h, d_in as u32 little-endian; then W
/// (d_h x d_h), U (d_h x d_in), b (d_h) as row-major f64 little-endian.
pub fn save_params(p: &EncoderParams, path: &Path) -> Result<()> {
    p.check_shapes()?;
    let d_h = p.d_h();
    let d_in = p.d_in();
    let mut buf: Vec<u8> = Vec::with_capacity(13 + 8 * (d_h * d_h + d_h * d_in + d_h));
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&(d_h as u32).to_le_bytes());
    buf.extend_from_slice(&(d_in as u32).to_le_bytes());
    for v in p.w.data().iter().chain(p.u.data()).chain(&p.b) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 13 {
        return Err(Error::format(
            bytes.len() as u64,
            "unexpected end of parameter file",
        ));
    }
    if &bytes[..5] != PARAMS_MAGIC {
        return Err(Error::format(0, "bad magic, expected HGNN1"));
    }
    let d_h = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d_in = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if d_h == 0 || d_in < 2 * d_h {
        return Err(Error::format(
            5,
            format!("implausible dimensions d_h={d_h} d_in={d_in}"),
        ));
    }
    let n_reals = d_h
        .checked_mul(d_h)
        .and_then(|x| d_h.checked_mul(d_in).map(|y| x + y))
        .and_then(|x| x.checked_add(d_h))
        .ok_or_else(|| Error::format(5, "dimension overflow"))?;
    let expected = 13 + 8 * n_reals;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            "unexpected end of parameter file",
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes"));
    }
    let mut reals = Vec::with_capacity(n_reals);
    for i in 0..n_reals {
        let off = 13 + 8 * i;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(off as u64, "non-finite parameter value"));
        }
        reals.push(v);
    }
    let w_len = d_h * d_h;
    let u_len = d_h * d_in;
    Ok(EncoderParams {
        w: Mat::from_vec(d_h, d_h, reals[..w_len].to_vec()),
        u: Mat::from_vec(d_h, d_in, reals[w_len..w_len + u_len].to_vec()),
        b: reals[w_len + u_len..].to_vec(),
    })
}

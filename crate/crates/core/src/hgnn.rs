//! Hierarchical message passing over child groups with a shared tanh cell.
//!
//! Every parent's children form one group. Within a group, each child state
//! evolves for T iterations by summing cell outputs over its neighborhood
//! (itself plus sibling-linked group members); afterwards the parent's state
//! is the cell-output sum over all children. The parent's regression loss is
//! the Euclidean distance between its initial feature and that state. Groups
//! run bottom-up so parent states can replace parent features for the level
//! above (`latent` propagation) or can be kept as pure diagnostics against
//! the initial features (`initial` propagation).
//!
//! Determinism and node anonymity: every floating-point reduction here is
//! ordered by operand values (byte order of the vectors involved), never by
//! node ids. Renaming nodes therefore changes no computed bit. Ids only break
//! exact value ties, which distinct descriptions never produce.

use std::cmp::Ordering;
use std::collections::BTreeMap;

#[cfg(test)]
use crate::math::dot;
use crate::math::{l2_norm, Mat};
use crate::toolgraph::{children_of, depth_partition, ToolGraph};
use crate::train::{Propagation, TrainConfig};
use crate::{Error, Result};

/// Shared encoder parameters: h' = tanh(W h + U x + b) with x the
/// concatenation (v_i, e_ij, v_j), so U has 2 d_v + d_e columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(d_v: usize, d_e: usize) -> Self {
        EncoderParams {
            w: Mat::zeros(d_v, d_v),
            u: Mat::zeros(d_v, 2 * d_v + d_e),
            b: vec![0.0; d_v],
        }
    }

    pub fn d_h(&self) -> usize {
        self.w.rows()
    }

    pub fn d_in(&self) -> usize {
        self.u.cols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let d_h = self.w.rows();
        if self.w.cols() != d_h || self.u.rows() != d_h || self.b.len() != d_h {
            return Err(Error::domain(
                "SHAPE",
                format!(
                    "inconsistent parameter shapes: W {}x{}, U {}x{}, b {}",
                    self.w.rows(),
                    self.w.cols(),
                    self.u.rows(),
                    self.u.cols(),
                    self.b.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.u.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

/// One node's hidden state at message iteration t.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub node_id: String,
    pub t: usize,
    pub h: Vec<f64>,
}

/// Result of one bottom-up sweep over a tool.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Parents map to their computed group state; leaves to their final
    /// child-iteration state h^(T) (from their canonically first group when
    /// they have several parents). A single-node graph maps its root to the
    /// initial feature.
    pub final_latents: BTreeMap<String, Vec<f64>>,
    /// (parent id, loss contribution), lexicographic by parent id.
    pub contributions: Vec<(String, f64)>,
    pub total_loss: f64,
    pub(crate) tape: ToolTape,
}

/// Concatenates (v_i, e_ij, v_j).
pub fn message_input(v_i: &[f64], e_ij: &[f64], v_j: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(v_i.len() + e_ij.len() + v_j.len());
    x.extend_from_slice(v_i);
    x.extend_from_slice(e_ij);
    x.extend_from_slice(v_j);
    x
}

/// h' = tanh(W h_prev + U x + b). The affine part is accumulated exactly as
/// W h_prev, then + U x, then + b; the engine replays this order bitwise.
pub fn rnn_cell(p: &EncoderParams, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    p.check_shapes()?;
    if h_prev.len() != p.d_h() || x.len() != p.d_in() {
        return Err(Error::domain(
            "SHAPE",
            format!(
                "rnn_cell inputs h={} x={} vs d_h={} d_in={}",
                h_prev.len(),
                x.len(),
                p.d_h(),
                p.d_in()
            ),
        ));
    }
    if !h_prev.iter().chain(x).all(|v| v.is_finite()) || !p.is_finite() {
        return Err(Error::domain("NON_FINITE", "rnn_cell input is non-finite"));
    }
    let mut z = p.w.matvec(h_prev);
    p.u.matvec_add(x, &mut z);
    for (zi, bi) in z.iter_mut().zip(&p.b) {
        *zi += bi;
    }
    for v in &mut z {
        *v = v.tanh();
    }
    Ok(z)
}

/// Byte-order comparison of two equal-length vectors.
fn cmp_bits(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.to_bits().cmp(&y.to_bits()) {
            Ordering::Equal => {}
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// One neighbor of the aggregating node.
pub struct NeighborInput<'a> {
    pub id: &'a str,
    pub feature: &'a [f64],
    pub edge: &'a [f64],
}

/// Sum over neighbors of rnn_cell(h_j^(t-1), (v_i, e_ij, v_j)), with t
/// incremented. Summands are ordered by value bytes (cell output, then
/// previous state, then neighbor feature, then edge), so the result does not
/// depend on neighbor declaration order or on ids. An empty neighborhood
/// yields the zero vector at t = 1.
pub fn aggregate(
    p: &EncoderParams,
    self_id: &str,
    self_feature: &[f64],
    neighbors: &[NeighborInput],
    states: &BTreeMap<String, HiddenState>,
) -> Result<HiddenState> {
    p.check_shapes()?;
    if neighbors.is_empty() {
        return Ok(HiddenState {
            node_id: self_id.to_string(),
            t: 1,
            h: vec![0.0; p.d_h()],
        });
    }
    let mut t_prev: Option<usize> = None;
    let mut cells: Vec<(Vec<f64>, &HiddenState, &NeighborInput)> =
        Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        let st = states.get(nb.id).ok_or_else(|| {
            Error::domain(
                "MISSING_STATE",
                format!("neighbor '{}' has no state", nb.id),
            )
        })?;
        match t_prev {
            None => t_prev = Some(st.t),
            Some(t) if t != st.t => {
                return Err(Error::domain(
                    "STATE_T",
                    format!("neighbor states at mixed iterations {t} and {}", st.t),
                ));
            }
            _ => {}
        }
        let x = message_input(self_feature, nb.edge, nb.feature);
        let y = rnn_cell(p, &st.h, &x)?;
        cells.push((y, st, nb));
    }
    cells.sort_by(|a, b| {
        cmp_bits(&a.0, &b.0)
            .then_with(|| cmp_bits(&a.1.h, &b.1.h))
            .then_with(|| cmp_bits(a.2.feature, b.2.feature))
            .then_with(|| cmp_bits(a.2.edge, b.2.edge))
    });
    let mut h = vec![0.0; p.d_h()];
    for (y, _, _) in &cells {
        for (hi, yi) in h.iter_mut().zip(y) {
            *hi += yi;
        }
    }
    Ok(HiddenState {
        node_id: self_id.to_string(),
        t: t_prev.unwrap() + 1,
        h,
    })
}

// -------------------------------------------------------------------------
// Group engine (shared by forward_group, forward_tool, and the backward pass)

/// Where a member's feature value came from, for adjoint routing.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum FeatSrc {
    /// The node's initial feature; constant, no adjoint.
    Init,
    /// h_parent of an earlier group (latent propagation).
    FromGroup(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct CellRec {
    /// Member index of the neighbor that supplied h_prev and v_j.
    pub(crate) j: usize,
    pub(crate) y: Vec<f64>,
}

/// Member states, member cell records, parent cell records, and h_parent
/// produced by one group's child iterations plus parent step.
type GroupRun = (
    Vec<Vec<Vec<f64>>>,
    Vec<Vec<Vec<CellRec>>>,
    Vec<CellRec>,
    Vec<f64>,
);

/// Full forward record of one group, enough to replay backward.
#[derive(Debug, Clone)]
pub(crate) struct GroupTape {
    pub(crate) parent_feat: Vec<f64>,
    pub(crate) member_src: Vec<FeatSrc>,
    /// Member features in canonical member order (feature bytes, id tiebreak).
    pub(crate) feats: Vec<Vec<f64>>,
    pub(crate) enc_child: Vec<f64>,
    pub(crate) enc_parent: Vec<f64>,
    /// states[t][m] for t = 0..=T; states[0][m] equals feats[m].
    pub(crate) states: Vec<Vec<Vec<f64>>>,
    /// cells[t-1][m]: canonically sorted cell records producing states[t][m].
    pub(crate) cells: Vec<Vec<Vec<CellRec>>>,
    /// Canonically sorted cell records producing h_parent.
    pub(crate) parent_cells: Vec<CellRec>,
    /// dL/dh_parent of this group's own contribution: -(r)/|r|, zero at r=0.
    pub(crate) loss_seed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ToolTape {
    pub(crate) groups: Vec<GroupTape>,
}

/// Evaluates one cell exactly like `rnn_cell`, reusing `xbuf` for the
/// concatenated input.
fn eval_cell(
    p: &EncoderParams,
    h_prev: &[f64],
    v_i: &[f64],
    e: &[f64],
    v_j: &[f64],
    xbuf: &mut Vec<f64>,
) -> Vec<f64> {
    xbuf.clear();
    xbuf.extend_from_slice(v_i);
    xbuf.extend_from_slice(e);
    xbuf.extend_from_slice(v_j);
    let mut z = p.w.matvec(h_prev);
    p.u.matvec_add(xbuf, &mut z);
    for (zi, bi) in z.iter_mut().zip(&p.b) {
        *zi += bi;
    }
    for v in &mut z {
        *v = v.tanh();
    }
    z
}

/// Sorts cell records by (output, previous state, neighbor feature) bytes;
/// the shared edge encoding within a group cannot differ.
fn sort_cells(cells: &mut [CellRec], prev_states: &[Vec<f64>], feats: &[Vec<f64>]) {
    cells.sort_by(|a, b| {
        cmp_bits(&a.y, &b.y)
            .then_with(|| cmp_bits(&prev_states[a.j], &prev_states[b.j]))
            .then_with(|| cmp_bits(&feats[a.j], &feats[b.j]))
    });
}

fn sum_cells(cells: &[CellRec], d_h: usize) -> Vec<f64> {
    let mut h = vec![0.0; d_h];
    for c in cells {
        for (hi, yi) in h.iter_mut().zip(&c.y) {
            *hi += yi;
        }
    }
    h
}

/// Runs one group forward: T child iterations, then the parent step.
/// `feats` must already be in canonical member order and `adj` indexed
/// accordingly.
#[allow(clippy::too_many_arguments)]
fn run_group(
    p: &EncoderParams,
    parent_feat: &[f64],
    feats: &[Vec<f64>],
    adj: &[Vec<usize>],
    enc_child: &[f64],
    enc_parent: &[f64],
    t_steps: usize,
    xbuf: &mut Vec<f64>,
) -> GroupRun {
    let d_h = p.d_h();
    let n = feats.len();
    let mut states: Vec<Vec<Vec<f64>>> = Vec::with_capacity(t_steps + 1);
    states.push(feats.to_vec());
    let mut cells: Vec<Vec<Vec<CellRec>>> = Vec::with_capacity(t_steps);

    for t in 1..=t_steps {
        let prev = &states[t - 1];
        let mut level_cells: Vec<Vec<CellRec>> = Vec::with_capacity(n);
        let mut next: Vec<Vec<f64>> = Vec::with_capacity(n);
        for m in 0..n {
            let mut cs: Vec<CellRec> = Vec::with_capacity(1 + adj[m].len());
            cs.push(CellRec {
                j: m,
                y: eval_cell(p, &prev[m], &feats[m], enc_child, &feats[m], xbuf),
            });
            for &j in &adj[m] {
                cs.push(CellRec {
                    j,
                    y: eval_cell(p, &prev[j], &feats[m], enc_child, &feats[j], xbuf),
                });
            }
            sort_cells(&mut cs, prev, feats);
            next.push(sum_cells(&cs, d_h));
            level_cells.push(cs);
        }
        states.push(next);
        cells.push(level_cells);
    }

    let last = &states[t_steps];
    let mut pc: Vec<CellRec> = (0..n)
        .map(|j| CellRec {
            j,
            y: eval_cell(p, &last[j], parent_feat, enc_parent, &feats[j], xbuf),
        })
        .collect();
    sort_cells(&mut pc, last, feats);
    let h_parent = sum_cells(&pc, d_h);
    (states, cells, pc, h_parent)
}

/// Loss contribution and its seed gradient for a parent state.
fn residual(target: &[f64], h_parent: &[f64]) -> (f64, Vec<f64>) {
    let r: Vec<f64> = target.iter().zip(h_parent).map(|(t, h)| t - h).collect();
    let norm = l2_norm(&r);
    if norm > 0.0 {
        (norm, r.iter().map(|x| -x / norm).collect())
    } else {
        (0.0, vec![0.0; r.len()])
    }
}

/// Derives d_e from the parameter shapes and a feature length.
fn edge_dim(p: &EncoderParams, d_v: usize) -> Result<usize> {
    let d_in = p.d_in();
    if d_in < 2 * d_v {
        return Err(Error::domain(
            "SHAPE",
            format!("d_in {} is smaller than 2 d_v = {}", d_in, 2 * d_v),
        ));
    }
    Ok(d_in - 2 * d_v)
}

/// Canonical member order: feature bytes, then id. Returns the permutation.
fn canonical_member_order(ids: &[String], feats: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| cmp_bits(&feats[a], &feats[b]).then_with(|| ids[a].cmp(&ids[b])));
    order
}

/// Runs one parent's group from explicit features.
///
/// `features` must hold vectors for the parent and all its children. Returns
/// the parent's state (at t = T + 1) and the loss contribution against the
/// parent's feature in `features`.
pub fn forward_group(
    p: &EncoderParams,
    g: &ToolGraph,
    parent: &str,
    t_steps: usize,
    features: &BTreeMap<String, Vec<f64>>,
) -> Result<(HiddenState, f64)> {
    p.check_shapes()?;
    let child_ids = children_of(g, parent)?;
    if child_ids.is_empty() {
        return Err(Error::domain(
            "EMPTY_GROUP",
            format!("node '{parent}' has no children"),
        ));
    }
    let get = |id: &str| -> Result<&Vec<f64>> {
        features
            .get(id)
            .ok_or_else(|| Error::domain("MISSING_FEATURE", format!("no feature for '{id}'")))
    };
    let parent_feat = get(parent)?;
    let d_v = parent_feat.len();
    if d_v != p.d_h() {
        return Err(Error::domain(
            "SHAPE",
            format!("feature length {} vs d_h {}", d_v, p.d_h()),
        ));
    }
    let d_e = edge_dim(p, d_v)?;

    let raw_feats: Vec<Vec<f64>> = child_ids
        .iter()
        .map(|id| get(id).cloned())
        .collect::<Result<_>>()?;
    let order = canonical_member_order(&child_ids, &raw_feats);
    let ids: Vec<String> = order.iter().map(|&i| child_ids[i].clone()).collect();
    let feats: Vec<Vec<f64>> = order.iter().map(|&i| raw_feats[i].clone()).collect();
    let index_of: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let adj: Vec<Vec<usize>> = ids
        .iter()
        .map(|id| {
            g.sibling_partners(id)
                .into_iter()
                .filter_map(|s| index_of.get(s).copied())
                .collect()
        })
        .collect();

    let parent_layer = g
        .layer_of(parent)
        .ok_or_else(|| Error::domain("UNKNOWN_ID", format!("no node '{parent}'")))?;
    let enc_parent = crate::embedder::encode_layer(parent_layer, d_e);
    let enc_child = crate::embedder::encode_layer(parent_layer.saturating_sub(1), d_e);

    let mut xbuf = Vec::with_capacity(p.d_in());
    let (_, _, _, h_parent) = run_group(
        p,
        parent_feat,
        &feats,
        &adj,
        &enc_child,
        &enc_parent,
        t_steps,
        &mut xbuf,
    );
    if !h_parent.iter().all(|v| v.is_finite()) {
        return Err(Error::domain(
            "NON_FINITE",
            format!("group '{parent}' produced a non-finite state"),
        ));
    }
    let (contribution, _) = residual(parent_feat, &h_parent);
    Ok((
        HiddenState {
            node_id: parent.to_string(),
            t: t_steps + 1,
            h: h_parent,
        },
        contribution,
    ))
}

/// One bottom-up sweep over a validated, embedded tool graph.
///
/// Levels run deepest-first. Within a level, groups run in an id-free
/// canonical order (parent feature bytes, then member feature bytes);
/// total_loss accumulates in that execution order, so consistent renaming of
/// node ids cannot change any computed bit.
pub fn forward_tool(p: &EncoderParams, g: &ToolGraph, cfg: &TrainConfig) -> Result<ForwardTrace> {
    p.check_shapes()?;
    let _ = depth_partition(g)?; // validates

    let mut current: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (id, n) in &g.nodes {
        let f = n.initial_feature.clone().ok_or_else(|| {
            Error::domain(
                "MISSING_FEATURE",
                format!("node '{id}' of '{}' is not embedded", g.name),
            )
        })?;
        current.insert(id.clone(), f);
    }
    let d_v = current.values().next().map(|v| v.len()).unwrap_or(0);
    if d_v != p.d_h() {
        return Err(Error::domain(
            "SHAPE",
            format!("feature length {} vs d_h {} in '{}'", d_v, p.d_h(), g.name),
        ));
    }
    let d_e = edge_dim(p, d_v)?;
    let max_depth = g.max_depth();

    let mut src_of: BTreeMap<String, FeatSrc> =
        g.nodes.keys().map(|k| (k.clone(), FeatSrc::Init)).collect();
    let mut groups: Vec<GroupTape> = Vec::new();
    let mut exec_contribs: Vec<(String, f64)> = Vec::new();
    let mut total_loss = 0.0;
    let mut leaf_latents: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut parent_latents: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut xbuf = Vec::with_capacity(p.d_in());

    for depth in (1..=max_depth).rev() {
        let parent_depth = depth - 1;
        let layer_parent = max_depth - parent_depth;
        let enc_parent = crate::embedder::encode_layer(layer_parent, d_e);
        let enc_child = crate::embedder::encode_layer(layer_parent - 1, d_e);

        // Build all groups of this level, then order them canonically.
        struct Pending {
            parent_id: String,
            ids: Vec<String>,
            feats: Vec<Vec<f64>>,
            src: Vec<FeatSrc>,
            adj: Vec<Vec<usize>>,
            key: Vec<u64>,
        }
        let mut pending: Vec<Pending> = Vec::new();
        for node in g.nodes.values() {
            if node.depth != parent_depth {
                continue;
            }
            let child_ids = children_of(g, &node.local_id)?;
            if child_ids.is_empty() {
                continue;
            }
            let raw: Vec<Vec<f64>> = child_ids.iter().map(|id| current[id].clone()).collect();
            let order = canonical_member_order(&child_ids, &raw);
            let ids: Vec<String> = order.iter().map(|&i| child_ids[i].clone()).collect();
            let feats: Vec<Vec<f64>> = order.iter().map(|&i| raw[i].clone()).collect();
            let src: Vec<FeatSrc> = ids.iter().map(|id| src_of[id].clone()).collect();
            let index_of: BTreeMap<&str, usize> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let adj: Vec<Vec<usize>> = ids
                .iter()
                .map(|id| {
                    g.sibling_partners(id)
                        .into_iter()
                        .filter_map(|s| index_of.get(s).copied())
                        .collect()
                })
                .collect();
            let mut key: Vec<u64> = current[&node.local_id]
                .iter()
                .map(|v| v.to_bits())
                .collect();
            for f in &feats {
                key.extend(f.iter().map(|v| v.to_bits()));
            }
            pending.push(Pending {
                parent_id: node.local_id.clone(),
                ids,
                feats,
                src,
                adj,
                key,
            });
        }
        pending.sort_by(|a, b| {
            a.key
                .cmp(&b.key)
                .then_with(|| a.parent_id.cmp(&b.parent_id))
        });

        for pg in pending {
            let parent_feat = current[&pg.parent_id].clone();
            let target = g.nodes[&pg.parent_id]
                .initial_feature
                .clone()
                .expect("checked above");
            let (states, cells, parent_cells, h_parent) = run_group(
                p,
                &parent_feat,
                &pg.feats,
                &pg.adj,
                &enc_child,
                &enc_parent,
                cfg.t_steps,
                &mut xbuf,
            );
            if !h_parent.iter().all(|v| v.is_finite()) {
                return Err(Error::domain(
                    "NON_FINITE",
                    format!(
                        "tool '{}', group '{}': non-finite state",
                        g.name, pg.parent_id
                    ),
                ));
            }
            let (contribution, loss_seed) = residual(&target, &h_parent);
            total_loss += contribution;
            exec_contribs.push((pg.parent_id.clone(), contribution));

            for (m, id) in pg.ids.iter().enumerate() {
                let is_leaf = children_of(g, id)?.is_empty();
                if is_leaf && !leaf_latents.contains_key(id) {
                    leaf_latents.insert(id.clone(), states[cfg.t_steps][m].clone());
                }
            }
            parent_latents.insert(pg.parent_id.clone(), h_parent.clone());

            let gidx = groups.len();
            if cfg.propagation == Propagation::Latent {
                current.insert(pg.parent_id.clone(), h_parent.clone());
                src_of.insert(pg.parent_id.clone(), FeatSrc::FromGroup(gidx));
            }
            groups.push(GroupTape {
                parent_feat,
                member_src: pg.src,
                feats: pg.feats,
                enc_child: enc_child.clone(),
                enc_parent: enc_parent.clone(),
                states,
                cells,
                parent_cells,
                loss_seed,
            });
        }
    }

    let mut final_latents = leaf_latents;
    for (id, h) in parent_latents {
        final_latents.insert(id, h);
    }
    for (id, n) in &g.nodes {
        final_latents
            .entry(id.clone())
            .or_insert_with(|| n.initial_feature.clone().expect("checked above"));
    }
    exec_contribs.sort_by(|a, b| a.0.cmp(&b.0));

    Ok(ForwardTrace {
        final_latents,
        contributions: exec_contribs,
        total_loss,
        tape: ToolTape { groups },
    })
}

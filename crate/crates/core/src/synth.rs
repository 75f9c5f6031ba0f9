//! Deterministic synthetic corpora of hierarchical tool definitions, plus a
//! paraphrase helper for retrieval experiments.
//!
//! All randomness for a corpus comes from one xoshiro256** stream in a fixed
//! draw order, documented on [`gen_corpus`]; reruns with the same spec are
//! bitwise identical.

use serde::{Deserialize, Serialize};

use crate::embedder::tokenize;
use crate::rng::Rng;
use crate::toolgraph::{validate, EdgeKind, ToolEdge, ToolGraph, ToolNode};
use crate::{Error, Result};

fn default_n_tools() -> usize {
    10
}
fn default_depth_range() -> (u32, u32) {
    (2, 3)
}
fn default_fanout_range() -> (usize, usize) {
    (2, 4)
}
fn default_vocab_size() -> usize {
    500
}
fn default_tokens_per_description() -> (usize, usize) {
    (6, 12)
}
fn default_sibling_edge_probability() -> f64 {
    0.5
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_tools")]
    pub n_tools: usize,
    #[serde(default = "default_depth_range")]
    pub depth_range: (u32, u32),
    #[serde(default = "default_fanout_range")]
    pub fanout_range: (usize, usize),
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_tokens_per_description")]
    pub tokens_per_description: (usize, usize),
    #[serde(default = "default_sibling_edge_probability")]
    pub sibling_edge_probability: f64,
    /// Probability of giving an eligible node a second parent, turning the
    /// tree into a proper DAG; 0 keeps pure trees.
    #[serde(default)]
    pub cross_link_probability: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 0,
            n_tools: default_n_tools(),
            depth_range: default_depth_range(),
            fanout_range: default_fanout_range(),
            vocab_size: default_vocab_size(),
            tokens_per_description: default_tokens_per_description(),
            sibling_edge_probability: default_sibling_edge_probability(),
            cross_link_probability: 0.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::domain("BAD_SPEC", m));
        if self.depth_range.0 < 1 || self.depth_range.0 > self.depth_range.1 {
            return bad(format!(
                "depth_range {:?} must be ordered with min >= 1",
                self.depth_range
            ));
        }
        if self.fanout_range.0 < 1 || self.fanout_range.0 > self.fanout_range.1 {
            return bad(format!(
                "fanout_range {:?} must be ordered with min >= 1",
                self.fanout_range
            ));
        }
        if self.vocab_size < 10 {
            return bad(format!(
                "vocab_size {} must be at least 10",
                self.vocab_size
            ));
        }
        if self.tokens_per_description.0 < 1
            || self.tokens_per_description.0 > self.tokens_per_description.1
        {
            return bad(format!(
                "tokens_per_description {:?} must be ordered with min >= 1",
                self.tokens_per_description
            ));
        }
        for (name, p) in [
            ("sibling_edge_probability", self.sibling_edge_probability),
            ("cross_link_probability", self.cross_link_probability),
        ] {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return bad(format!("{name} {p} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Generates `spec.n_tools` valid tool graphs from one PRNG stream.
///
/// Draw order per tool, in sequence:
/// 1. depth: one inclusive draw from depth_range; every leaf sits at
///    exactly that depth.
/// 2. structure: breadth-first from the root; for each node above the target
///    depth one inclusive fanout draw, children created immediately. Node
///    ids are `n{j:03}` in creation order, the root is `n000`.
/// 3. sibling edges: per parent in creation order, one coin (next_f64 <
///    sibling_edge_probability) per consecutive pair of its children in id
///    order.
/// 4. cross-links: per non-root node at depth >= 2 in creation order, only
///    when at least one candidate (a deeper-level parent other than its own,
///    i.e. any other node at depth-1 that has children) exists:
///    one coin (next_f64 < cross_link_probability), and on success one
///    range draw over the candidates in id order.
/// 5. descriptions, deepest level first, within a level in id order: one
///    inclusive token-count draw; per token slot one coin (next_f64 < 0.5;
///    taken only when the node has children) for drawing from the pool of
///    child tokens (first-occurrence order over children in id order,
///    deduplicated) via one range draw, otherwise one range draw from the
///    vocabulary `w0..w{vocab_size-1}`.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<ToolGraph>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut corpus = Vec::with_capacity(spec.n_tools);
    for tool_idx in 0..spec.n_tools {
        corpus.push(gen_tool(spec, tool_idx, &mut rng));
    }
    for g in &corpus {
        let report = validate(g);
        if !report.ok {
            return Err(Error::domain(
                "SYNTH_INVALID",
                format!(
                    "generated graph '{}' violates {} invariant(s): {:?}",
                    g.name,
                    report.violations.len(),
                    report.violations.first()
                ),
            ));
        }
    }
    Ok(corpus)
}

fn gen_tool(spec: &CorpusSpec, tool_idx: usize, rng: &mut Rng) -> ToolGraph {
    let depth = rng.range_inclusive(spec.depth_range.0 as u64, spec.depth_range.1 as u64) as u32;

    // Structure: depths and single parents, breadth-first.
    let mut node_depth: Vec<u32> = vec![0];
    let mut parent_of: Vec<Option<usize>> = vec![None];
    let mut children: Vec<Vec<usize>> = vec![vec![]];
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        if node_depth[v] >= depth {
            continue;
        }
        let fanout =
            rng.range_inclusive(spec.fanout_range.0 as u64, spec.fanout_range.1 as u64) as usize;
        for _ in 0..fanout {
            let c = node_depth.len();
            node_depth.push(node_depth[v] + 1);
            parent_of.push(Some(v));
            children.push(vec![]);
            children[v].push(c);
            queue.push_back(c);
        }
    }
    let n = node_depth.len();
    let id_of = |j: usize| format!("n{j:03}");

    let mut edges: Vec<ToolEdge> = Vec::new();
    for (c, p) in parent_of.iter().enumerate() {
        if let Some(p) = p {
            edges.push(ToolEdge {
                from_id: id_of(c),
                to_id: id_of(*p),
                kind: EdgeKind::ChildToParent,
                edge_feature: None,
            });
        }
    }

    for kids in children.iter().take(n) {
        for pair in kids.windows(2) {
            if rng.next_f64() < spec.sibling_edge_probability {
                edges.push(ToolEdge {
                    from_id: id_of(pair[0]),
                    to_id: id_of(pair[1]),
                    kind: EdgeKind::Sibling,
                    edge_feature: None,
                });
            }
        }
    }

    let mut extra_parents: Vec<Vec<usize>> = vec![vec![]; n];
    if spec.cross_link_probability > 0.0 {
        for v in 1..n {
            if node_depth[v] < 2 {
                continue;
            }
            let own = parent_of[v].unwrap();
            let candidates: Vec<usize> = (0..n)
                .filter(|&p| {
                    p != own && node_depth[p] == node_depth[v] - 1 && !children[p].is_empty()
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            if rng.next_f64() < spec.cross_link_probability {
                let p = candidates[rng.range(candidates.len() as u64) as usize];
                extra_parents[v].push(p);
                edges.push(ToolEdge {
                    from_id: id_of(v),
                    to_id: id_of(p),
                    kind: EdgeKind::ChildToParent,
                    edge_feature: None,
                });
            }
        }
    }

    // Descriptions bottom-up so parents can overlap their children's tokens.
    let mut descriptions: Vec<Vec<String>> = vec![vec![]; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(node_depth[v]), v));
    for v in order {
        let n_tok = rng.range_inclusive(
            spec.tokens_per_description.0 as u64,
            spec.tokens_per_description.1 as u64,
        ) as usize;
        let mut pool: Vec<String> = Vec::new();
        for &c in &children[v] {
            for t in &descriptions[c] {
                if !pool.contains(t) {
                    pool.push(t.clone());
                }
            }
        }
        let mut toks = Vec::with_capacity(n_tok);
        for _ in 0..n_tok {
            let tok = if !pool.is_empty() && rng.next_f64() < 0.5 {
                pool[rng.range(pool.len() as u64) as usize].clone()
            } else {
                format!("w{}", rng.range(spec.vocab_size as u64))
            };
            toks.push(tok);
        }
        descriptions[v] = toks;
    }

    let mut g = ToolGraph {
        name: format!("tool_{tool_idx:04}"),
        nodes: std::collections::BTreeMap::new(),
        edges,
        root_id: id_of(0),
    };
    for v in 0..n {
        g.nodes.insert(
            id_of(v),
            ToolNode {
                local_id: id_of(v),
                description: descriptions[v].join(" "),
                depth: node_depth[v],
                queries: Vec::new(),
                initial_feature: None,
            },
        );
    }
    g
}

/// A deterministic shuffled token subset of the node's description,
/// `ceil(fraction * n)` tokens long. By the bag-of-words property its
/// embedding keeps a high cosine with the node's initial embedding.
pub fn paraphrase_query(node: &ToolNode, seed: u64, fraction: f64) -> Result<String> {
    if !(fraction.is_finite() && (0.5..=1.0).contains(&fraction)) {
        return Err(Error::domain(
            "BAD_FRACTION",
            format!("fraction {fraction} must lie in [0.5, 1.0]"),
        ));
    }
    let tokens = tokenize(&node.description, true);
    if tokens.is_empty() {
        return Err(Error::domain(
            "EMPTY_DESCRIPTION",
            format!("node '{}' has no tokens to paraphrase", node.local_id),
        ));
    }
    let n = tokens.len();
    let take = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut idx);
    let picked: Vec<&str> = idx[..take].iter().map(|&i| tokens[i].as_str()).collect();
    Ok(picked.join(" "))
}

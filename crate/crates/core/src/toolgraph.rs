//! Layered-DAG tool data model: parsing, validation, traversal order.
//!
//! A tool is a named graph of subtool nodes. Depth counts from the root
//! downward (root = 0); the internal layer index used for encodings counts
//! from the deepest level upward (layer = max_depth - depth), so training can
//! walk layers bottom-up while documents store the human-friendly convention.
//!
//! `child_to_parent` edges compose subtools upward and must step exactly one
//! level. `sibling` edges connect nodes at the same depth that share at least
//! one parent; message passing treats them as undirected when building
//! neighborhoods.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    ChildToParent,
    Sibling,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::ChildToParent => "child_to_parent",
            EdgeKind::Sibling => "sibling",
        }
    }

    fn parse(s: &str) -> Option<EdgeKind> {
        match s {
            "child_to_parent" => Some(EdgeKind::ChildToParent),
            "sibling" => Some(EdgeKind::Sibling),
            _ => None,
        }
    }
}

/// One subtool. `local_id` is only for wiring and reporting; features must
/// never depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolNode {
    pub local_id: String,
    pub description: String,
    /// 0 = root, increasing downward.
    pub depth: u32,
    pub queries: Vec<String>,
    /// Unit-norm description embedding of length d_v; absent before embedding.
    pub initial_feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolEdge {
    pub from_id: String,
    pub to_id: String,
    pub kind: EdgeKind,
    /// Layer encoding of the destination node's layer; absent before encoding.
    pub edge_feature: Option<Vec<f64>>,
}

/// A named tool graph. Treated as immutable once built; pipeline stages that
/// add features return a new graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolGraph {
    pub name: String,
    pub nodes: BTreeMap<String, ToolNode>,
    pub edges: Vec<ToolEdge>,
    pub root_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ToolGraph {
    pub fn node(&self, id: &str) -> Option<&ToolNode> {
        self.nodes.get(id)
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.values().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Internal layer of a node: max_depth - depth; the deepest level is 0.
    pub fn layer_of(&self, id: &str) -> Option<u32> {
        self.nodes.get(id).map(|n| self.max_depth() - n.depth)
    }

    /// Parents of `id` via child_to_parent edges, lexicographic, deduplicated.
    pub fn parents_of(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::ChildToParent && e.from_id == id)
            .map(|e| e.to_id.as_str())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Undirected sibling partners of `id`, lexicographic, deduplicated.
    pub fn sibling_partners(&self, id: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.edges {
            if e.kind != EdgeKind::Sibling {
                continue;
            }
            if e.from_id == id {
                out.push(e.to_id.as_str());
            } else if e.to_id == id {
                out.push(e.from_id.as_str());
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

// -------------------------------------------------------------------------
// Document format

#[derive(Serialize, Deserialize)]
struct DocNode {
    id: String,
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    queries: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DocEdge {
    from: String,
    to: String,
    kind: String,
}

#[derive(Serialize, Deserialize)]
struct Doc {
    name: String,
    root: String,
    nodes: Vec<DocNode>,
    edges: Vec<DocEdge>,
}

/// Parses a tool-definition document (UTF-8 JSON).
///
/// Depths are taken from the document when every node carries one. Otherwise
/// all depths are recomputed as longest path to the root over child_to_parent
/// edges, which requires an acyclic document whose every node reaches the
/// root; depth-annotated documents with such defects parse fine and are
/// reported by [`validate`] instead. Features are always absent after parsing.
pub fn parse_tool_document(doc: &str) -> Result<ToolGraph> {
    let doc: Doc = serde_json::from_str(doc)?;

    let mut nodes: BTreeMap<String, ToolNode> = BTreeMap::new();
    let mut missing_depth = false;
    for (i, n) in doc.nodes.into_iter().enumerate() {
        if nodes.contains_key(&n.id) {
            return Err(Error::domain(
                "DUPLICATE_ID",
                format!("nodes[{i}]: duplicate local id '{}'", n.id),
            ));
        }
        missing_depth |= n.depth.is_none();
        nodes.insert(
            n.id.clone(),
            ToolNode {
                local_id: n.id,
                description: n.description,
                depth: n.depth.unwrap_or(0),
                queries: n.queries,
                initial_feature: None,
            },
        );
    }

    if !nodes.contains_key(&doc.root) {
        return Err(Error::domain(
            "UNKNOWN_ROOT",
            format!("root '{}' is not a declared node", doc.root),
        ));
    }

    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.into_iter().enumerate() {
        for endpoint in [&e.from, &e.to] {
            if !nodes.contains_key(endpoint) {
                return Err(Error::domain(
                    "UNKNOWN_ENDPOINT",
                    format!("edges[{i}]: unknown endpoint '{endpoint}'"),
                ));
            }
        }
        let kind = EdgeKind::parse(&e.kind).ok_or_else(|| {
            Error::domain(
                "BAD_EDGE_KIND",
                format!("edges[{i}]: unknown edge kind '{}'", e.kind),
            )
        })?;
        edges.push(ToolEdge {
            from_id: e.from,
            to_id: e.to,
            kind,
            edge_feature: None,
        });
    }

    if missing_depth {
        recompute_depths(&mut nodes, &edges, &doc.root)?;
    }

    Ok(ToolGraph {
        name: doc.name,
        nodes,
        edges,
        root_id: doc.root,
    })
}

/// Longest path to the root per node, processing parents before children.
fn recompute_depths(
    nodes: &mut BTreeMap<String, ToolNode>,
    edges: &[ToolEdge],
    root: &str,
) -> Result<()> {
    let mut parent_count: BTreeMap<&str, usize> = nodes.keys().map(|k| (k.as_str(), 0)).collect();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in edges {
        if e.kind == EdgeKind::ChildToParent {
            *parent_count.get_mut(e.from_id.as_str()).unwrap() += 1;
            children.entry(&e.to_id).or_default().push(&e.from_id);
        }
    }

    for (id, count) in &parent_count {
        if *count == 0 && *id != root {
            return Err(Error::domain(
                "NO_PARENT",
                format!("cannot recompute depths: '{id}' has no path to the root"),
            ));
        }
    }

    let mut depth: BTreeMap<&str, u32> = BTreeMap::new();
    let mut pending = parent_count.clone();
    let mut queue: VecDeque<&str> = VecDeque::new();
    if pending.get(root) == Some(&0) {
        depth.insert(root, 0);
        queue.push_back(root);
    }
    while let Some(id) = queue.pop_front() {
        let d = depth[id];
        for &c in children.get(id).into_iter().flatten() {
            let e = depth.entry(c).or_insert(0);
            *e = (*e).max(d + 1);
            let p = pending.get_mut(c).unwrap();
            *p -= 1;
            if *p == 0 {
                queue.push_back(c);
            }
        }
    }

    if depth.len() != nodes.len() {
        let stuck = nodes
            .keys()
            .find(|k| !depth.contains_key(k.as_str()))
            .unwrap();
        return Err(Error::domain(
            "CYCLE",
            format!(
                "cannot recompute depths: cycle or parent edge on the root involving '{stuck}'"
            ),
        ));
    }

    let resolved: Vec<(String, u32)> = depth.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (id, d) in resolved {
        nodes.get_mut(&id).unwrap().depth = d;
    }
    Ok(())
}

/// Serializes a graph to the document format: nodes in lexicographic id order
/// with explicit depths, edges in stored order. Features are not part of the
/// document format.
pub fn serialize_tool_document(g: &ToolGraph) -> String {
    let doc = Doc {
        name: g.name.clone(),
        root: g.root_id.clone(),
        nodes: g
            .nodes
            .values()
            .map(|n| DocNode {
                id: n.local_id.clone(),
                description: n.description.clone(),
                depth: Some(n.depth),
                queries: n.queries.clone(),
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| DocEdge {
                from: e.from_id.clone(),
                to: e.to_id.clone(),
                kind: e.kind.as_str().to_string(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("document serialization cannot fail");
    s.push('\n');
    s
}

// -------------------------------------------------------------------------
// Validation

/// Checks every structural invariant and reports all violations as data.
///
/// Codes: UNKNOWN_ROOT, EMPTY_DESCRIPTION, FEATURE_LEN, NON_FINITE_FEATURE,
/// UNKNOWN_ENDPOINT, SELF_LOOP, DUPLICATE_EDGE, DEPTH_SKIP, SIBLING_DEPTH,
/// SIBLING_PARENT, EDGE_FEATURE, ROOT_DEPTH, ROOT_MISMATCH, NO_PARENT,
/// CYCLE, UNREACHABLE.
pub fn validate(g: &ToolGraph) -> ValidationReport {
    let mut v: Vec<Violation> = Vec::new();
    let mut push = |code: &str, subject: &str, message: String| {
        v.push(Violation {
            code: code.to_string(),
            message,
            subject_id: subject.to_string(),
        });
    };

    let root_exists = g.nodes.contains_key(&g.root_id);
    if !root_exists {
        push(
            "UNKNOWN_ROOT",
            &g.root_id,
            format!("root_id '{}' is not a node", g.root_id),
        );
    }

    // Node-level checks, lexicographic.
    let mut feature_len: Option<usize> = None;
    for n in g.nodes.values() {
        if n.description.trim().is_empty() {
            push(
                "EMPTY_DESCRIPTION",
                &n.local_id,
                "description is empty after trimming".to_string(),
            );
        }
        if let Some(f) = &n.initial_feature {
            match feature_len {
                None => feature_len = Some(f.len()),
                Some(l) if l != f.len() => push(
                    "FEATURE_LEN",
                    &n.local_id,
                    format!("feature length {} differs from {}", f.len(), l),
                ),
                _ => {}
            }
            if !f.iter().all(|x| x.is_finite()) {
                push(
                    "NON_FINITE_FEATURE",
                    &n.local_id,
                    "initial feature has a non-finite entry".to_string(),
                );
            }
        }
    }

    // Edge-level checks, stored order.
    let max_depth = g.max_depth();
    let mut seen: BTreeSet<(EdgeKind, &str, &str)> = BTreeSet::new();
    for e in &g.edges {
        let subject = format!("{}->{}", e.from_id, e.to_id);
        let (from, to) = (g.nodes.get(&e.from_id), g.nodes.get(&e.to_id));
        if from.is_none() || to.is_none() {
            let missing = if from.is_none() { &e.from_id } else { &e.to_id };
            push(
                "UNKNOWN_ENDPOINT",
                &subject,
                format!("endpoint '{missing}' is not a node"),
            );
            continue;
        }
        let (from, to) = (from.unwrap(), to.unwrap());

        if e.from_id == e.to_id {
            push(
                "SELF_LOOP",
                &subject,
                "edge endpoints are equal".to_string(),
            );
        }

        // Sibling edges are undirected; normalize their key.
        let key = match e.kind {
            EdgeKind::ChildToParent => (e.kind, e.from_id.as_str(), e.to_id.as_str()),
            EdgeKind::Sibling => {
                let (a, b) = if e.from_id <= e.to_id {
                    (e.from_id.as_str(), e.to_id.as_str())
                } else {
                    (e.to_id.as_str(), e.from_id.as_str())
                };
                (e.kind, a, b)
            }
        };
        if !seen.insert(key) {
            push(
                "DUPLICATE_EDGE",
                &subject,
                "edge declared twice".to_string(),
            );
        }

        match e.kind {
            EdgeKind::ChildToParent => {
                if from.depth != to.depth + 1 {
                    push(
                        "DEPTH_SKIP",
                        &subject,
                        format!(
                            "child depth {} must be parent depth {} + 1",
                            from.depth, to.depth
                        ),
                    );
                }
            }
            EdgeKind::Sibling => {
                if from.depth != to.depth {
                    push(
                        "SIBLING_DEPTH",
                        &subject,
                        format!("sibling depths differ: {} vs {}", from.depth, to.depth),
                    );
                }
                let pa = g.parents_of(&e.from_id);
                let pb = g.parents_of(&e.to_id);
                if !pa.iter().any(|p| pb.contains(p)) {
                    push(
                        "SIBLING_PARENT",
                        &subject,
                        "sibling endpoints share no parent".to_string(),
                    );
                }
            }
        }

        if let Some(feat) = &e.edge_feature {
            let layer = max_depth - to.depth;
            let want = crate::embedder::encode_layer(layer, feat.len());
            if feat.is_empty() || feat != &want {
                push(
                    "EDGE_FEATURE",
                    &subject,
                    format!("edge feature does not encode destination layer {layer}"),
                );
            }
        }
    }

    // Parent structure, lexicographic.
    let mut has_parent: BTreeSet<&str> = BTreeSet::new();
    for e in &g.edges {
        if e.kind == EdgeKind::ChildToParent {
            has_parent.insert(&e.from_id);
        }
    }
    for n in g.nodes.values() {
        let is_root = root_exists && n.local_id == g.root_id;
        if is_root {
            if n.depth != 0 {
                push(
                    "ROOT_DEPTH",
                    &n.local_id,
                    format!("root depth is {}, expected 0", n.depth),
                );
            }
            if has_parent.contains(n.local_id.as_str()) {
                push(
                    "ROOT_MISMATCH",
                    &n.local_id,
                    "root has an outgoing child_to_parent edge".to_string(),
                );
            }
        } else if !has_parent.contains(n.local_id.as_str()) {
            push(
                "NO_PARENT",
                &n.local_id,
                "non-root node has no child_to_parent edge".to_string(),
            );
        }
    }

    // Cycles over the child_to_parent digraph.
    find_cycles(g, &mut v);

    // Reachability: every node with a parent edge must have a path to root.
    if root_exists {
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &g.edges {
            if e.kind == EdgeKind::ChildToParent {
                children.entry(&e.to_id).or_default().push(&e.from_id);
            }
        }
        let mut reach: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        reach.insert(g.root_id.as_str());
        queue.push_back(&g.root_id);
        while let Some(id) = queue.pop_front() {
            for &c in children.get(id).into_iter().flatten() {
                if reach.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        for n in g.nodes.values() {
            if !reach.contains(n.local_id.as_str()) && has_parent.contains(n.local_id.as_str()) {
                v.push(Violation {
                    code: "UNREACHABLE".to_string(),
                    message: "no child_to_parent path to the root".to_string(),
                    subject_id: n.local_id.clone(),
                });
            }
        }
    }

    ValidationReport {
        ok: v.is_empty(),
        violations: v,
    }
}

/// Depth-first search for cycles in the child_to_parent digraph; one
/// violation per back edge, naming the node the back edge returns to.
fn find_cycles(g: &ToolGraph, v: &mut Vec<Violation>) {
    let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &g.edges {
        if e.kind == EdgeKind::ChildToParent
            && g.nodes.contains_key(&e.from_id)
            && g.nodes.contains_key(&e.to_id)
        {
            out.entry(&e.from_id).or_default().push(&e.to_id);
        }
    }
    for targets in out.values_mut() {
        targets.sort_unstable();
        targets.dedup();
    }

    const WHITE: u8 = 0;
    const GRAY: u8 = 1;
    const BLACK: u8 = 2;
    let mut color: BTreeMap<&str, u8> = g.nodes.keys().map(|k| (k.as_str(), WHITE)).collect();

    for start in g.nodes.keys() {
        if color[start.as_str()] != WHITE {
            continue;
        }
        // Explicit stack of (node, next target index) for the DFS path.
        let mut stack: Vec<(&str, usize)> = vec![(start.as_str(), 0)];
        color.insert(start.as_str(), GRAY);
        while let Some(&mut (id, ref mut idx)) = stack.last_mut() {
            let targets = out.get(id).map(|t| t.as_slice()).unwrap_or(&[]);
            if *idx < targets.len() {
                let next = targets[*idx];
                *idx += 1;
                match color[next] {
                    WHITE => {
                        color.insert(next, GRAY);
                        stack.push((next, 0));
                    }
                    GRAY => {
                        let pos = stack.iter().position(|(n, _)| *n == next).unwrap();
                        let mut path: Vec<&str> = stack[pos..].iter().map(|(n, _)| *n).collect();
                        path.push(next);
                        v.push(Violation {
                            code: "CYCLE".to_string(),
                            message: format!("cycle: {}", path.join(" -> ")),
                            subject_id: next.to_string(),
                        });
                    }
                    _ => {}
                }
            } else {
                color.insert(id, BLACK);
                stack.pop();
            }
        }
    }
}

// -------------------------------------------------------------------------
// Traversal

/// Node-id groups ordered deepest-first; group k holds all nodes at depth
/// max_depth - k, lexicographic within a group. Requires a valid graph.
pub fn depth_partition(g: &ToolGraph) -> Result<Vec<Vec<String>>> {
    let report = validate(g);
    if !report.ok {
        return Err(Error::InvalidGraph {
            name: g.name.clone(),
            violations: report.violations,
        });
    }
    let mut by_depth: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for n in g.nodes.values() {
        by_depth
            .entry(n.depth)
            .or_default()
            .push(n.local_id.clone());
    }
    Ok(by_depth.into_values().rev().collect())
}

/// All nodes with a child_to_parent edge into `parent`, lexicographic.
pub fn children_of(g: &ToolGraph, parent: &str) -> Result<Vec<String>> {
    if !g.nodes.contains_key(parent) {
        return Err(Error::domain(
            "UNKNOWN_ID",
            format!("no node '{parent}' in graph '{}'", g.name),
        ));
    }
    let mut out: Vec<String> = g
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::ChildToParent && e.to_id == parent)
        .map(|e| e.from_id.clone())
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

// -------------------------------------------------------------------------
// Fixture

/// The built-in portfolio-optimizer demo graph: 10 nodes over 3 levels.
///
/// Topology: A2, B2, C2 parent to A1; A3, B3, C3 to A2; D3, E3, F3 to B2;
/// F3 additionally parents to C2 (its KPIs feed the optimizer), which makes
/// F3 a two-parent node and the graph a proper DAG rather than a tree.
/// Sibling edges form a lexicographic path within each child group.
pub fn canonical_fixture() -> ToolGraph {
    let descriptions: [(&str, u32, &str); 10] = [
        (
            "A1",
            0,
            "An LLM powered optimal portfolio optimizer. For the given date period, it fetches \
             public media data from the predefined sources, hourly stock market data and daily \
             macroeconomic indicators. An LLM with specific predetermined prompt templates \
             produces a set of KPIs related to general market sentiment. Also, the public news \
             are scanned to detect mentions of specific stocks. Later, these intermediate KPIs \
             are gathered and an RL based portfolio optimizer produces the output.",
        ),
        (
            "A2",
            1,
            "An LLM powered public media analyzer. For the given period of dates and set of \
             parameters, it fetches and normalizes the textual data using specific APIs. The \
             voluminous data is processed in a multi-context fashion by referencing to \
             embeddings in vector databases. First, it generates KPIs related to general market \
             sentiment. Second, it generates a list of stocks mentioned in the media along with \
             the KPIs related to their perceptions.",
        ),
        (
            "B2",
            1,
            "A python module which fetches hourly stock market data and macroeconomic \
             indicators using a set of APIs for the given time period and produces a set of \
             intrinsic KPIs.",
        ),
        (
            "C2",
            1,
            "A python module which takes the KPIs related to macroeconomics and stock market \
             in a given time period and performs a portfolio optimization using reinforcement \
             learning.",
        ),
        (
            "A3",
            2,
            "This component fetches and normalizes textual public data coming from newspapers, \
             social media and similar sources, and implements complex NLP processes.",
        ),
        (
            "B3",
            2,
            "An LLM powered module which analyzes public media data, incorporates a complex \
             transformer based NLP model which embeds voluminous data to embeddings in a vector \
             database in chunks, then processes it with an LLM in a multicontext fashion, to \
             generate KPIs related to overall market sentiment in given time period.",
        ),
        (
            "C3",
            2,
            "An LLM powered module which analyzes public media data, incorporates a complex \
             transformer based NLP model which embeds voluminous data to embeddings in a vector \
             database in chunks, then processes it with an LLM in a multicontext fashion, to \
             generate list of KPIs related to stocks mentioned in the news as key-value pairs \
             in given time period.",
        ),
        (
            "D3",
            2,
            "A component which takes a list of key-value pairs indicating public sentiment of \
             multiple stocks and processes their stock market data purposefully, to generate \
             new intermediate KPIs.",
        ),
        (
            "E3",
            2,
            "A component which fetches hourly open-close-low-high candlestick stock market \
             data using APIs and generates intermediate KPIs for portfolio optimization \
             algorithm.",
        ),
        (
            "F3",
            2,
            "A module that acquires intermediate KPIs related to general stock market data and \
             highlighted specific stocks to generate further intrinsic features to feed the \
             portfolio optimizer.",
        ),
    ];

    let mut nodes = BTreeMap::new();
    for (id, depth, desc) in descriptions {
        let queries = if id == "A1" {
            vec![
                "Optimize a stock portfolio for a given date period under given parameters and \
                 criteria"
                    .to_string(),
            ]
        } else {
            Vec::new()
        };
        nodes.insert(
            id.to_string(),
            ToolNode {
                local_id: id.to_string(),
                description: desc.to_string(),
                depth,
                queries,
                initial_feature: None,
            },
        );
    }

    let c2p = [
        ("A2", "A1"),
        ("B2", "A1"),
        ("C2", "A1"),
        ("A3", "A2"),
        ("B3", "A2"),
        ("C3", "A2"),
        ("D3", "B2"),
        ("E3", "B2"),
        ("F3", "B2"),
        ("F3", "C2"),
    ];
    let sib = [
        ("A2", "B2"),
        ("B2", "C2"),
        ("A3", "B3"),
        ("B3", "C3"),
        ("D3", "E3"),
        ("E3", "F3"),
    ];
    let mut edges = Vec::new();
    for (f, t) in c2p {
        edges.push(ToolEdge {
            from_id: f.to_string(),
            to_id: t.to_string(),
            kind: EdgeKind::ChildToParent,
            edge_feature: None,
        });
    }
    for (f, t) in sib {
        edges.push(ToolEdge {
            from_id: f.to_string(),
            to_id: t.to_string(),
            kind: EdgeKind::Sibling,
            edge_feature: None,
        });
    }

    ToolGraph {
        name: "portfolio_optimizer".to_string(),
        nodes,
        edges,
        root_id: "A1".to_string(),
    }
}

//! Deterministic node features from description text, and layer encodings.
//!
//! Features are signed feature-hashed bags of words: identity-free, so two
//! nodes with the same description always embed identically, and fully
//! reproducible without any model weights. A loader for externally produced
//! per-node vectors covers setups where a real text encoder is available.

use std::collections::BTreeMap;
use std::path::Path;

use crate::toolgraph::{validate, ToolGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EmbedderConfig {
    /// Feature dimension d_v; power of two, at least 8.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub hash_seed: u64,
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

fn default_dim() -> usize {
    256
}

fn default_true() -> bool {
    true
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: 256,
            hash_seed: 0,
            lowercase: true,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 || !self.dim.is_power_of_two() {
            return Err(Error::domain(
                "BAD_CONFIG",
                format!("dim must be a power of two >= 8, got {}", self.dim),
            ));
        }
        Ok(())
    }
}

/// Sinusoidal encoding of a layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEncoding {
    pub dim: usize,
    pub vector: Vec<f64>,
}

impl LayerEncoding {
    pub fn new(layer: u32, dim: usize) -> Self {
        LayerEncoding {
            dim,
            vector: encode_layer(layer, dim),
        }
    }
}

/// Splits on any non-alphanumeric character, drops empties, lowercases when
/// asked. Repeated tokens are kept; features are bags, not sets.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`. The seed is XOR-ed into the offset basis, so seed 0
/// is plain FNV-1a-64.
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Digest used to key stored embeddings back to their source text.
pub fn description_digest(text: &str) -> u64 {
    fnv1a64(text.as_bytes(), 0)
}

/// Signed feature hashing of the token bag, L2-normalized.
///
/// Per token: bucket = hash mod dim, sign from bit 63 of the hash. In the
/// degenerate case where every bucket cancels to zero the unnormalized zero
/// vector is returned as-is; real texts do not hit this.
pub fn hash_embed(text: &str, cfg: &EmbedderConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let tokens = tokenize(text, cfg.lowercase);
    if tokens.is_empty() {
        return Err(Error::domain(
            "EMPTY_DESCRIPTION",
            "text has no tokens to embed",
        ));
    }
    let mut v = vec![0.0; cfg.dim];
    for t in &tokens {
        let h = fnv1a64(t.as_bytes(), cfg.hash_seed);
        let bucket = (h % cfg.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = crate::math::l2_norm(&v);
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}

/// Sinusoidal layer encoding: entry 2k = sin(layer / 10000^(2k/dim)),
/// entry 2k+1 = cos of the same angle.
pub fn encode_layer(layer: u32, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let l = layer as f64;
    let mut k = 0;
    while 2 * k < dim {
        let angle = l / 10000f64.powf(2.0 * k as f64 / dim as f64);
        v[2 * k] = angle.sin();
        if 2 * k + 1 < dim {
            v[2 * k + 1] = angle.cos();
        }
        k += 1;
    }
    v
}

/// Returns a copy of the graph with every node's initial_feature set to the
/// hash embedding of its description and every edge's edge_feature set to the
/// layer encoding of its destination node's layer.
pub fn embed_graph(g: &ToolGraph, cfg: &EmbedderConfig, d_e: usize) -> Result<ToolGraph> {
    cfg.validate()?;
    let report = validate(g);
    if !report.ok {
        return Err(Error::InvalidGraph {
            name: g.name.clone(),
            violations: report.violations,
        });
    }
    let mut out = g.clone();
    for (id, node) in &mut out.nodes {
        let f = hash_embed(&node.description, cfg).map_err(|e| match e {
            Error::Domain { code, message } => Error::Domain {
                code,
                message: format!("node '{id}': {message}"),
            },
            other => other,
        })?;
        node.initial_feature = Some(f);
    }
    let max_depth = g.max_depth();
    for e in &mut out.edges {
        let layer = max_depth - g.nodes[&e.to_id].depth;
        e.edge_feature = Some(encode_layer(layer, d_e));
    }
    Ok(out)
}

/// Reads `id<TAB>v1,v2,...` lines. All rows must share one vector length and
/// every value must be finite.
pub fn load_external_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| {
            Error::domain(
                "BAD_ROW",
                format!("line {lineno}: expected 'id<TAB>values'"),
            )
        })?;
        let mut v = Vec::new();
        for part in rest.split(',') {
            let x: f64 = part.trim().parse().map_err(|_| {
                Error::domain(
                    "BAD_NUMBER",
                    format!("line {lineno} ('{id}'): unparsable value '{part}'"),
                )
            })?;
            if !x.is_finite() {
                return Err(Error::domain(
                    "NON_FINITE",
                    format!("line {lineno} ('{id}'): non-finite value"),
                ));
            }
            v.push(x);
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::domain(
                    "DIM_MISMATCH",
                    format!(
                        "line {lineno} ('{id}'): length {} differs from {d}",
                        v.len()
                    ),
                ));
            }
            _ => {}
        }
        if map.insert(id.to_string(), v).is_some() {
            return Err(Error::domain(
                "DUPLICATE_ID",
                format!("line {lineno}: duplicate id '{id}'"),
            ));
        }
    }
    Ok(map)
}

/// Installs externally produced vectors as initial features, in place of
/// hash_embed outputs. Every graph node must have a vector; extra ids are
/// rejected. Edge features are encoded exactly as in embed_graph.
pub fn install_embeddings(
    g: &ToolGraph,
    vectors: &BTreeMap<String, Vec<f64>>,
    d_e: usize,
) -> Result<ToolGraph> {
    let report = validate(g);
    if !report.ok {
        return Err(Error::InvalidGraph {
            name: g.name.clone(),
            violations: report.violations,
        });
    }
    for id in vectors.keys() {
        if !g.nodes.contains_key(id) {
            return Err(Error::domain(
                "UNKNOWN_ID",
                format!("embedding for unknown node '{id}'"),
            ));
        }
    }
    let mut out = g.clone();
    for (id, node) in &mut out.nodes {
        let v = vectors.get(id).ok_or_else(|| {
            Error::domain("MISSING_EMBEDDING", format!("no embedding for node '{id}'"))
        })?;
        node.initial_feature = Some(v.clone());
    }
    let max_depth = g.max_depth();
    for e in &mut out.edges {
        let layer = max_depth - g.nodes[&e.to_id].depth;
        e.edge_feature = Some(encode_layer(layer, d_e));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolgraph::canonical_fixture;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("What is 3 + 7 ?", true), ["what", "is", "3", "7"]);
        assert!(tokenize("", true).is_empty());
        assert_eq!(
            tokenize("KPI-based, KPI based", true),
            ["kpi", "based", "kpi", "based"]
        );
        assert_eq!(tokenize("Mixed Case", false), ["Mixed", "Case"]);
    }

    // Published FNV-1a-64 vectors; seed 0 must be the standard function.
    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b"", 0), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a", 0), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar", 0), 0x85944171f73967e8);
        assert_ne!(fnv1a64(b"foobar", 1), fnv1a64(b"foobar", 0));
    }

    // Independent re-statement of the hash-embedding rule: one fold per
    // token with a separately written FNV step, no shared helpers.
    fn oracle_embed(tokens: &[&str], cfg: &EmbedderConfig) -> Vec<f64> {
        let mut v = vec![0.0; cfg.dim];
        for t in tokens {
            let mut h: u64 = 0xcbf29ce484222325 ^ cfg.hash_seed;
            for b in t.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x100000001b3);
            }
            v[(h % cfg.dim as u64) as usize] += if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn hash_embed_matches_token_sum_oracle() {
        let cfg = EmbedderConfig {
            dim: 64,
            hash_seed: 7,
            lowercase: true,
        };
        let got = hash_embed("alpha beta", &cfg).unwrap();
        let want = oracle_embed(&["alpha", "beta"], &cfg);
        assert_eq!(got, want);
    }

    #[test]
    fn hash_embed_unit_norm_and_deterministic() {
        let cfg = EmbedderConfig::default();
        let a = hash_embed("alpha", &cfg).unwrap();
        let b = hash_embed("alpha", &cfg).unwrap();
        assert_eq!(a, b);
        let norm = crate::math::l2_norm(&a);
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hash_embed_is_bag_of_words() {
        let cfg = EmbedderConfig::default();
        let a = hash_embed("fetch market data daily", &cfg).unwrap();
        let b = hash_embed("daily data market fetch", &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hash_embed_rejects_empty() {
        let cfg = EmbedderConfig::default();
        let err = hash_embed("  ?!  ", &cfg).unwrap_err();
        assert!(err.to_string().contains("EMPTY_DESCRIPTION"));
    }

    #[test]
    fn config_validation() {
        for dim in [0, 4, 7, 100] {
            let cfg = EmbedderConfig {
                dim,
                ..EmbedderConfig::default()
            };
            assert!(cfg.validate().is_err(), "dim {dim}");
        }
        assert!(EmbedderConfig::default().validate().is_ok());
    }

    #[test]
    fn encode_layer_zero_alternates() {
        let v = encode_layer(0, 8);
        assert_eq!(v, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn encode_layer_formula_spot_check() {
        let v = encode_layer(3, 4);
        let a = 3.0f64;
        let b = 3.0f64 / 100.0;
        assert_eq!(v, [a.sin(), a.cos(), b.sin(), b.cos()]);
    }

    #[test]
    fn encode_layer_injective_small() {
        let mut seen = Vec::new();
        for layer in 0..=64u32 {
            let v = encode_layer(layer, 16);
            assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert!(!seen.contains(&v), "layer {layer} collides");
            seen.push(v);
        }
    }

    #[test]
    fn embed_graph_fills_all_features() {
        let cfg = EmbedderConfig::default();
        let g = embed_graph(&canonical_fixture(), &cfg, 16).unwrap();
        assert_eq!(g.nodes.len(), 10);
        for n in g.nodes.values() {
            let f = n.initial_feature.as_ref().unwrap();
            assert_eq!(f.len(), 256);
            assert!((crate::math::l2_norm(f) - 1.0).abs() < 1e-9);
        }
        for e in &g.edges {
            assert_eq!(e.edge_feature.as_ref().unwrap().len(), 16);
        }
        assert!(validate(&g).ok, "{:?}", validate(&g).violations);
    }

    #[test]
    fn embed_graph_identical_descriptions_identical_features() {
        let mut g = canonical_fixture();
        let desc = g.nodes["E3"].description.clone();
        g.nodes.get_mut("D3").unwrap().description = desc;
        let cfg = EmbedderConfig::default();
        let g = embed_graph(&g, &cfg, 16).unwrap();
        assert_eq!(g.nodes["D3"].initial_feature, g.nodes["E3"].initial_feature);
    }

    #[test]
    fn embed_graph_idempotent() {
        let cfg = EmbedderConfig::default();
        let once = embed_graph(&canonical_fixture(), &cfg, 16).unwrap();
        let twice = embed_graph(&once, &cfg, 16).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn embed_graph_top_layer_edge_encoding() {
        let cfg = EmbedderConfig::default();
        let g = embed_graph(&canonical_fixture(), &cfg, 16).unwrap();
        let edge = g
            .edges
            .iter()
            .find(|e| e.from_id == "C2" && e.to_id == "A1")
            .unwrap();
        assert_eq!(edge.edge_feature.as_ref().unwrap(), &encode_layer(2, 16));
    }

    #[test]
    fn external_embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.tsv");
        let g = canonical_fixture();
        let mut lines = String::new();
        for (i, id) in g.nodes.keys().enumerate() {
            let vals: Vec<String> = (0..8).map(|j| format!("{}.5", i + j)).collect();
            lines.push_str(&format!("{id}\t{}\n", vals.join(",")));
        }
        std::fs::write(&path, lines).unwrap();
        let map = load_external_embeddings(&path).unwrap();
        assert_eq!(map.len(), 10);
        let installed = install_embeddings(&g, &map, 16).unwrap();
        assert_eq!(
            installed.nodes["A1"].initial_feature.as_ref().unwrap(),
            &map["A1"]
        );
    }

    #[test]
    fn external_embeddings_errors() {
        let dir = tempfile::tempdir().unwrap();

        let short = dir.path().join("short.tsv");
        std::fs::write(&short, "a\t1,2,3\nb\t1,2\n").unwrap();
        let err = load_external_embeddings(&short).unwrap_err();
        assert!(err.to_string().contains("'b'"), "{err}");

        let nan = dir.path().join("nan.tsv");
        std::fs::write(&nan, "a\t1,NaN,3\n").unwrap();
        let err = load_external_embeddings(&nan).unwrap_err();
        assert!(err.to_string().contains("NON_FINITE"), "{err}");

        let missing = dir.path().join("absent.tsv");
        assert!(load_external_embeddings(&missing).is_err());
    }

    #[test]
    fn install_embeddings_rejects_gaps_and_strays() {
        let g = canonical_fixture();
        let mut map = BTreeMap::new();
        map.insert("A1".to_string(), vec![1.0; 8]);
        let err = install_embeddings(&g, &map, 16).unwrap_err();
        assert!(err.to_string().contains("MISSING_EMBEDDING"), "{err}");

        let mut full: BTreeMap<String, Vec<f64>> =
            g.nodes.keys().map(|k| (k.clone(), vec![1.0; 8])).collect();
        full.insert("ghost".to_string(), vec![1.0; 8]);
        let err = install_embeddings(&g, &full, 16).unwrap_err();
        assert!(err.to_string().contains("UNKNOWN_ID"), "{err}");
    }
}

//! Flat vector store for embedding records with exact top-k cosine
//! retrieval. Search is a brute-force scan; at desk scale that keeps the
//! ranking trivially auditable against a full sort.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedder::{fnv1a64, hash_embed, EmbedderConfig};
use crate::math::{dot, l2_norm};
use crate::toolgraph::ToolGraph;
use crate::{Error, Result};

/// Initial records hold hashed description text; structural records hold
/// latents exported from a trained encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Initial,
    Structural,
}

impl EmbeddingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EmbeddingKind::Initial => "initial",
            EmbeddingKind::Structural => "structural",
        }
    }
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(EmbeddingKind::Initial),
            "structural" => Ok(EmbeddingKind::Structural),
            other => Err(Error::domain(
                "BAD_KIND",
                format!("unknown embedding kind '{other}' (initial|structural)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub tool_name: String,
    pub node_id: String,
    pub vector: Vec<f64>,
    pub kind: EmbeddingKind,
    /// FNV-1a hash of the text this vector was computed from.
    pub description_digest: u64,
}

/// Records in insertion order with (tool_name, node_id, kind) uniqueness.
#[derive(Debug, Clone, Default)]
pub struct VectorStore {
    records: Vec<EmbeddingRecord>,
    keys: BTreeSet<(String, String, EmbeddingKind)>,
}

impl VectorStore {
    pub fn new() -> Self {
        VectorStore::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EmbeddingRecord> {
        self.records.iter()
    }

    pub fn get(&self, tool: &str, node: &str, kind: EmbeddingKind) -> Option<&EmbeddingRecord> {
        self.records
            .iter()
            .find(|r| r.tool_name == tool && r.node_id == node && r.kind == kind)
    }

    pub fn insert(&mut self, rec: EmbeddingRecord) -> Result<()> {
        if rec.vector.is_empty() || !rec.vector.iter().all(|v| v.is_finite()) {
            return Err(Error::domain(
                "BAD_VECTOR",
                format!(
                    "record ('{}', '{}', {}) has an empty or non-finite vector",
                    rec.tool_name,
                    rec.node_id,
                    rec.kind.as_str()
                ),
            ));
        }
        let key = (rec.tool_name.clone(), rec.node_id.clone(), rec.kind);
        if !self.keys.insert(key) {
            return Err(Error::domain(
                "DUPLICATE_KEY",
                format!(
                    "record ('{}', '{}', {}) already present",
                    rec.tool_name,
                    rec.node_id,
                    rec.kind.as_str()
                ),
            ));
        }
        self.records.push(rec);
        Ok(())
    }
}

/// dot(a,b) / (|a| |b|); both vectors must be nonzero and equally long.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(
            "DIM_MISMATCH",
            format!("vector lengths {} vs {}", a.len(), b.len()),
        ));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("ZERO_VECTOR", "cosine of a zero vector"));
    }
    Ok(dot(a, b) / (na * nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub tool_name: String,
    pub node_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<QueryHit>,
    pub k: usize,
}

/// Embeds `qtext` and scans every record matching `filter` (None scans all).
/// Ranking is by descending cosine similarity; exact ties resolve
/// lexicographically by (tool_name, node_id).
pub fn query_topk(
    store: &VectorStore,
    qtext: &str,
    k: usize,
    cfg: &EmbedderConfig,
    filter: Option<EmbeddingKind>,
) -> Result<QueryResult> {
    if store.is_empty() {
        return Err(Error::domain("EMPTY_STORE", "query against an empty store"));
    }
    let q = hash_embed(qtext, cfg)?;
    let mut scored: Vec<(f64, &EmbeddingRecord)> = Vec::new();
    for rec in store.iter() {
        if let Some(want) = filter {
            if rec.kind != want {
                continue;
            }
        }
        scored.push((cosine(&q, &rec.vector)?, rec));
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("similarities are finite")
            .then_with(|| a.1.tool_name.cmp(&b.1.tool_name))
            .then_with(|| a.1.node_id.cmp(&b.1.node_id))
    });
    scored.truncate(k);
    Ok(QueryResult {
        hits: scored
            .into_iter()
            .map(|(s, r)| QueryHit {
                tool_name: r.tool_name.clone(),
                node_id: r.node_id.clone(),
                similarity: s,
            })
            .collect(),
        k,
    })
}

/// Initial-kind records for a corpus: one per node from its description,
/// plus one per attached query text keyed `<node_id>#q<i>`.
pub fn build_initial_store(corpus: &[ToolGraph], cfg: &EmbedderConfig) -> Result<VectorStore> {
    let mut store = VectorStore::new();
    for g in corpus {
        for (id, node) in &g.nodes {
            store.insert(EmbeddingRecord {
                tool_name: g.name.clone(),
                node_id: id.clone(),
                vector: hash_embed(&node.description, cfg)?,
                kind: EmbeddingKind::Initial,
                description_digest: fnv1a64(node.description.as_bytes(), 0),
            })?;
            for (i, q) in node.queries.iter().enumerate() {
                store.insert(EmbeddingRecord {
                    tool_name: g.name.clone(),
                    node_id: format!("{id}#q{i}"),
                    vector: hash_embed(q, cfg)?,
                    kind: EmbeddingKind::Initial,
                    description_digest: fnv1a64(q.as_bytes(), 0),
                })?;
            }
        }
    }
    Ok(store)
}

const STORE_MAGIC: &[u8; 5] = b"TGVS1";

/// Layout: magic `TGVS1`; u64 LE record count; per record: u32 LE length +
/// UTF-8 tool_name, u32 LE length + UTF-8 node_id, u8 kind (0 initial,
/// 1 structural), u64 LE digest, u32 LE vector length, f64 LE entries.
pub fn save(store: &VectorStore, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(STORE_MAGIC);
    buf.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for r in store.iter() {
        buf.extend_from_slice(&(r.tool_name.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.tool_name.as_bytes());
        buf.extend_from_slice(&(r.node_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.node_id.as_bytes());
        buf.push(match r.kind {
            EmbeddingKind::Initial => 0,
            EmbeddingKind::Structural => 1,
        });
        buf.extend_from_slice(&r.description_digest.to_le_bytes());
        buf.extend_from_slice(&(r.vector.len() as u32).to_le_bytes());
        for v in &r.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("unexpected end of store file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn text(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let start = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(start as u64, format!("invalid UTF-8 in {what}")))
    }
}

pub fn load(path: &Path) -> Result<VectorStore> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    let magic = cur.take(5, "magic")?;
    if magic != STORE_MAGIC {
        return Err(Error::format(0, "bad magic, expected TGVS1"));
    }
    let count = cur.u64("record count")?;
    let mut store = VectorStore::new();
    for i in 0..count {
        let rec_start = cur.pos;
        let tool_name = cur.text("tool name")?;
        let node_id = cur.text("node id")?;
        let kind_off = cur.pos;
        let kind = match cur.take(1, "kind")?[0] {
            0 => EmbeddingKind::Initial,
            1 => EmbeddingKind::Structural,
            other => {
                return Err(Error::format(
                    kind_off as u64,
                    format!("bad kind byte {other}"),
                ));
            }
        };
        let description_digest = cur.u64("digest")?;
        let dim = cur.u32("vector length")? as usize;
        let mut vector = Vec::with_capacity(dim.min(1 << 20));
        for _ in 0..dim {
            let off = cur.pos;
            let v = f64::from_le_bytes(cur.take(8, "vector entry")?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(off as u64, "non-finite vector entry"));
            }
            vector.push(v);
        }
        store
            .insert(EmbeddingRecord {
                tool_name,
                node_id,
                vector,
                kind,
                description_digest,
            })
            .map_err(|_| Error::format(rec_start as u64, format!("duplicate key in record {i}")))?;
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(cur.pos as u64, "trailing bytes"));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::toolgraph::canonical_fixture;

    fn cfg8() -> EmbedderConfig {
        EmbedderConfig {
            dim: 8,
            ..EmbedderConfig::default()
        }
    }

    fn rec(tool: &str, node: &str, kind: EmbeddingKind, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            tool_name: tool.to_string(),
            node_id: node.to_string(),
            vector: v,
            kind,
            description_digest: fnv1a64(node.as_bytes(), 0),
        }
    }

    #[test]
    fn insert_grows_and_rejects_duplicates() {
        let mut s = VectorStore::new();
        assert!(s.is_empty());
        s.insert(rec("t", "n", EmbeddingKind::Initial, vec![1.0, 0.0]))
            .unwrap();
        assert_eq!(s.len(), 1);
        // Same ids under the other kind are a distinct key.
        s.insert(rec("t", "n", EmbeddingKind::Structural, vec![0.5, 0.5]))
            .unwrap();
        assert_eq!(s.len(), 2);
        let err = s
            .insert(rec("t", "n", EmbeddingKind::Initial, vec![0.0, 1.0]))
            .unwrap_err();
        assert!(err.to_string().contains("DUPLICATE_KEY"));
        assert!(s.get("t", "n", EmbeddingKind::Initial).is_some());
        assert!(s.get("t", "x", EmbeddingKind::Initial).is_none());
    }

    #[test]
    fn insert_rejects_bad_vectors() {
        let mut s = VectorStore::new();
        assert!(s
            .insert(rec("t", "a", EmbeddingKind::Initial, vec![]))
            .is_err());
        assert!(s
            .insert(rec("t", "b", EmbeddingKind::Initial, vec![f64::NAN]))
            .is_err());
    }

    #[test]
    fn cosine_identities() {
        let v = vec![0.6, 0.8, 0.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        assert!(cosine(&e1, &e2).unwrap().abs() < 1e-12);
        assert!(cosine(&e1, &[0.0, 0.0])
            .unwrap_err()
            .to_string()
            .contains("ZERO_VECTOR"));
        assert!(cosine(&e1, &v)
            .unwrap_err()
            .to_string()
            .contains("DIM_MISMATCH"));
    }

    #[test]
    fn exact_description_query_ranks_itself_first() {
        let corpus = vec![canonical_fixture()];
        let store = build_initial_store(&corpus, &cfg8()).unwrap();
        assert_eq!(store.len(), 11); // 10 nodes + one attached query
        for (id, node) in &corpus[0].nodes {
            let res = query_topk(
                &store,
                &node.description,
                3,
                &cfg8(),
                Some(EmbeddingKind::Initial),
            )
            .unwrap();
            assert_eq!(res.hits[0].node_id, *id, "query for {id}");
            assert!((res.hits[0].similarity - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn k_bounds_and_empty_store() {
        let corpus = vec![canonical_fixture()];
        let store = build_initial_store(&corpus, &cfg8()).unwrap();
        let all = query_topk(&store, "stock market data", 100, &cfg8(), None).unwrap();
        assert_eq!(all.hits.len(), store.len());
        assert_eq!(all.k, 100);
        for w in all.hits.windows(2) {
            assert!(w[0].similarity >= w[1].similarity);
        }
        let none = query_topk(&store, "stock market data", 0, &cfg8(), None).unwrap();
        assert!(none.hits.is_empty());

        let err = query_topk(&VectorStore::new(), "x", 1, &cfg8(), None).unwrap_err();
        assert!(err.to_string().contains("EMPTY_STORE"));
        let err = query_topk(&store, "  ,, ", 1, &cfg8(), None).unwrap_err();
        assert!(err.to_string().contains("EMPTY_DESCRIPTION"));
    }

    fn pad8(head: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; 8];
        v[..head.len()].copy_from_slice(head);
        v
    }

    #[test]
    fn filter_restricts_kinds() {
        let mut store = VectorStore::new();
        store
            .insert(rec("t", "a", EmbeddingKind::Initial, pad8(&[1.0])))
            .unwrap();
        store
            .insert(rec("t", "b", EmbeddingKind::Structural, pad8(&[1.0, 0.1])))
            .unwrap();
        let init = query_topk(&store, "alpha", 5, &cfg8(), Some(EmbeddingKind::Initial)).unwrap();
        assert_eq!(init.hits.len(), 1);
        assert_eq!(init.hits[0].node_id, "a");
        let all = query_topk(&store, "alpha", 5, &cfg8(), None).unwrap();
        assert_eq!(all.hits.len(), 2);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let mut store = VectorStore::new();
        let v = pad8(&[0.3, 1.0, -0.2]);
        store
            .insert(rec("tb", "n0", EmbeddingKind::Initial, v.clone()))
            .unwrap();
        store
            .insert(rec("ta", "n1", EmbeddingKind::Initial, v.clone()))
            .unwrap();
        store
            .insert(rec("ta", "n0", EmbeddingKind::Initial, v.clone()))
            .unwrap();
        // Identical vectors give bitwise-equal similarities, forcing the
        // (tool_name, node_id) tiebreak.
        let res = query_topk(&store, "anything", 3, &cfg8(), None).unwrap();
        let order: Vec<(String, String)> = res
            .hits
            .iter()
            .map(|h| (h.tool_name.clone(), h.node_id.clone()))
            .collect();
        assert_eq!(
            order,
            [
                ("ta".into(), "n0".into()),
                ("ta".into(), "n1".into()),
                ("tb".into(), "n0".into())
            ]
        );
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let mut rng = Rng::new(515);
        let mut store = VectorStore::new();
        for i in 0..100 {
            let v: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let kind = if rng.range(2) == 0 {
                EmbeddingKind::Initial
            } else {
                EmbeddingKind::Structural
            };
            store
                .insert(rec(
                    &format!("tool_{:02}", i / 10),
                    &format!("n{i:03}"),
                    kind,
                    v,
                ))
                .unwrap();
        }
        let cfg = cfg8();
        let queries = [
            "alpha beta gamma",
            "stock data fetcher",
            "one two three four five",
            "zeta",
            "parse and rank results",
        ];
        for (qi, q) in queries.iter().enumerate() {
            for filter in [
                None,
                Some(EmbeddingKind::Initial),
                Some(EmbeddingKind::Structural),
            ] {
                let got = query_topk(&store, q, 5, &cfg, filter).unwrap();

                // Independent oracle: score every candidate, full sort,
                // truncate.
                let qv = hash_embed(q, &cfg).unwrap();
                let mut oracle: Vec<(f64, String, String)> = store
                    .iter()
                    .filter(|r| filter.is_none_or(|f| r.kind == f))
                    .map(|r| {
                        (
                            cosine(&qv, &r.vector).unwrap(),
                            r.tool_name.clone(),
                            r.node_id.clone(),
                        )
                    })
                    .collect();
                oracle.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .unwrap()
                        .then_with(|| a.1.cmp(&b.1))
                        .then_with(|| a.2.cmp(&b.2))
                });
                oracle.truncate(5);
                assert_eq!(got.hits.len(), oracle.len(), "query {qi}");
                for (h, o) in got.hits.iter().zip(&oracle) {
                    assert_eq!(h.similarity.to_bits(), o.0.to_bits());
                    assert_eq!(h.tool_name, o.1);
                    assert_eq!(h.node_id, o.2);
                    assert!(h.similarity.abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let corpus = vec![canonical_fixture()];
        let store = build_initial_store(&corpus, &cfg8()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tgvs");
        save(&store, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.len(), store.len());
        for (a, b) in store.iter().zip(back.iter()) {
            assert_eq!(a, b);
        }

        let empty = VectorStore::new();
        let epath = dir.path().join("empty.tgvs");
        save(&empty, &epath).unwrap();
        assert_eq!(load(&epath).unwrap().len(), 0);
    }

    #[test]
    fn load_reports_offsets() {
        let corpus = vec![canonical_fixture()];
        let store = build_initial_store(&corpus, &cfg8()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.tgvs");
        save(&store, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, (bytes.len() - 3) as u64),
            e => panic!("{e}"),
        }

        let mut bad = bytes.clone();
        bad[0] = b'Z';
        std::fs::write(&path, &bad).unwrap();
        match load(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            e => panic!("{e}"),
        }

        let mut long = bytes.clone();
        long.push(7);
        std::fs::write(&path, &long).unwrap();
        match load(&path).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, bytes.len() as u64),
            e => panic!("{e}"),
        }

        // Corrupt the first record's kind byte (magic + count + len-prefixed
        // tool name + len-prefixed node id).
        let first = store.iter().next().unwrap();
        let kind_off = 13 + 4 + first.tool_name.len() + 4 + first.node_id.len();
        let mut badkind = bytes.clone();
        badkind[kind_off] = 9;
        std::fs::write(&path, &badkind).unwrap();
        match load(&path).unwrap_err() {
            Error::Format { offset, message } => {
                assert_eq!(offset, kind_off as u64);
                assert!(message.contains("kind"));
            }
            e => panic!("{e}"),
        }
    }
}

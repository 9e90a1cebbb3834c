//! Capability knowledge base: record encoding, an exact cosine vector store
//! and the Hit-Rate / MRR retrieval metrics.

use std::fs;
use std::path::Path;
use std::sync::RwLock;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{BackendError, Error, Result};
use crate::http::{join, JsonClient};
use crate::system::Scenario;

/// What the store knows about one user: its local computing capability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRecord {
    pub user_id: usize,
    pub cycles_per_sec: f64,
    pub text: String,
}

impl CapabilityRecord {
    pub fn new(user_id: usize, cycles_per_sec: f64) -> Result<Self> {
        if !(cycles_per_sec > 0.0 && cycles_per_sec.is_finite()) {
            return Err(Error::Domain(format!(
                "cycles_per_sec must be positive and finite, got {cycles_per_sec}"
            )));
        }
        Ok(Self {
            user_id,
            cycles_per_sec,
            text: record_text(user_id, Some(cycles_per_sec)),
        })
    }
}

/// Text rendering shared by stored records and queries. Queries leave the
/// capability blank since that is what they are looking for.
pub fn record_text(user_id: usize, cycles_per_sec: Option<f64>) -> String {
    match cycles_per_sec {
        Some(f) => format!("mobile user {user_id} computing capability {f:e} cycles per second"),
        None => format!("mobile user {user_id} computing capability cycles per second"),
    }
}

pub fn query_text(user_id: usize) -> String {
    record_text(user_id, None)
}

/// One record per user of the scenario.
pub fn records_for_scenario(scenario: &Scenario) -> Result<Vec<CapabilityRecord>> {
    scenario
        .users
        .iter()
        .map(|u| CapabilityRecord::new(u.id, u.cycles_per_sec))
        .collect()
}

pub fn load_knowledge_base(path: &Path) -> Result<Vec<CapabilityRecord>> {
    let records: Vec<CapabilityRecord> = serde_json::from_str(&fs::read_to_string(path)?)?;
    for r in &records {
        if !(r.cycles_per_sec > 0.0) {
            return Err(Error::Domain(format!(
                "user {}: cycles_per_sec must be positive",
                r.user_id
            )));
        }
    }
    Ok(records)
}

pub fn save_knowledge_base(path: &Path, records: &[CapabilityRecord]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("embedding must have at least one dimension".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("embedding has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine_similarity(q: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if q.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: q.dim(),
        });
    }
    let (nq, nv) = (q.norm(), v.norm());
    if nq == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = q.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (nq * nv)).clamp(-1.0, 1.0))
}

pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub fn encode(record: &CapabilityRecord, encoder: &dyn Encoder) -> Result<EmbeddingVector> {
    encoder.encode_text(&record.text)
}

/// Offline encoder: every unigram and bigram of the lower-cased text seeds
/// its own Gaussian direction, and the text's vector is their
/// L2-normalised sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

pub const DEFAULT_EMBED_DIM: usize = 64;

impl Default for HashEncoder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_EMBED_DIM,
            seed: 0,
        }
    }
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("encoder dimension must be at least 1".into()));
        }
        Ok(Self { dim, seed })
    }

    fn add_feature(&self, feature: &str, acc: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(feature.as_bytes()) ^ self.seed);
        for a in acc.iter_mut() {
            *a += rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '.' || c == '-' || c == '+'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        let toks = tokens(text);
        let mut acc = vec![0.0; self.dim];
        for t in &toks {
            self.add_feature(t, &mut acc);
        }
        for w in toks.windows(2) {
            self.add_feature(&format!("{} {}", w[0], w[1]), &mut acc);
        }
        let v = EmbeddingVector::new(acc)?;
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        EmbeddingVector::new(v.values.iter().map(|x| x / n).collect())
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEncoder {
    client: JsonClient,
    url: String,
    model: String,
    dim: usize,
}

impl HttpEncoder {
    pub fn new(base: &str, api_key: Option<String>, model: &str, dim: usize) -> Result<Self> {
        let client = JsonClient::new(Duration::from_secs(30), api_key, 2, Duration::from_millis(500))?;
        Ok(Self {
            client,
            url: join(base, "embeddings"),
            model: model.to_string(),
            dim,
        })
    }

    /// Reads `EMBED_API_BASE`, `EMBED_API_KEY` and optionally
    /// `EMBED_MODEL`.
    pub fn from_env(dim: usize) -> Result<Self> {
        let base = std::env::var("EMBED_API_BASE")
            .map_err(|_| BackendError::NotConfigured("EMBED_API_BASE is not set".into()))?;
        let key = std::env::var("EMBED_API_KEY").ok();
        let model = std::env::var("EMBED_MODEL").unwrap_or_else(|_| "text-embedding-3-small".into());
        Self::new(&base, key, &model, dim)
    }
}

impl Encoder for HttpEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        let body = json!({ "model": self.model, "input": text });
        let resp = self.client.post(&self.url, &body)?;
        let values: Vec<f64> = resp
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| BackendError::Protocol("missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| BackendError::Protocol("non-numeric embedding entry".into())))
            .collect::<std::result::Result<_, _>>()?;
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        EmbeddingVector::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub user_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    pub k: usize,
}

impl RetrievalResult {
    /// 1-based position of `user_id` among the hits.
    pub fn rank_of(&self, user_id: usize) -> Option<usize> {
        self.hits.iter().position(|h| h.user_id == user_id).map(|i| i + 1)
    }
}

/// Exhaustive cosine store. Reads take a shared lock, inserts an exclusive
/// one.
#[derive(Debug)]
pub struct VectorStore {
    dim: usize,
    entries: RwLock<Vec<(CapabilityRecord, EmbeddingVector)>>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: RwLock::new(Vec::new()),
        }
    }

    /// Encodes and inserts every record.
    pub fn from_records(records: &[CapabilityRecord], encoder: &dyn Encoder) -> Result<Self> {
        let store = Self::new(encoder.dim());
        for r in records {
            store.insert(r.clone(), encode(r, encoder)?)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds a record; an existing entry with the same `user_id` is replaced.
    pub fn insert(&self, record: CapabilityRecord, vector: EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if vector.norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let mut entries = self.entries.write().expect("store lock poisoned");
        match entries.iter_mut().find(|(r, _)| r.user_id == record.user_id) {
            Some(slot) => *slot = (record, vector),
            None => entries.push((record, vector)),
        }
        Ok(())
    }

    pub fn record(&self, user_id: usize) -> Option<CapabilityRecord> {
        let entries = self.entries.read().expect("store lock poisoned");
        entries.iter().find(|(r, _)| r.user_id == user_id).map(|(r, _)| r.clone())
    }

    pub fn vector(&self, user_id: usize) -> Option<EmbeddingVector> {
        let entries = self.entries.read().expect("store lock poisoned");
        entries.iter().find(|(r, _)| r.user_id == user_id).map(|(_, v)| v.clone())
    }

    /// The `k` most similar entries, best first; ties go to the smaller
    /// `user_id`.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::Precondition("top_k needs k >= 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if query.norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let entries = self.entries.read().expect("store lock poisoned");
        let mut hits = entries
            .iter()
            .map(|(r, v)| {
                Ok(Hit {
                    user_id: r.user_id,
                    score: cosine_similarity(query, v)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.user_id.cmp(&b.user_id)));
        hits.truncate(k);
        Ok(RetrievalResult { hits, k })
    }
}

/// Mean reciprocal rank; `None` marks a query whose relevant item was not
/// retrieved and contributes zero.
pub fn mrr(ranks: &[Option<usize>]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Precondition("mrr needs at least one query".into()));
    }
    let mut sum = 0.0;
    for r in ranks {
        match *r {
            Some(0) => return Err(Error::Precondition("ranks are 1-based".into())),
            Some(r) => sum += 1.0 / r as f64,
            None => {}
        }
    }
    Ok(sum / ranks.len() as f64)
}

pub fn hit_rate(hits: usize, total: usize) -> Result<f64> {
    if total == 0 || hits > total {
        return Err(Error::Precondition(format!("hit_rate({hits}, {total})")));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub hit_rate: f64,
    pub mrr: f64,
}

/// Hit rate and MRR at `k` for queries labelled with their relevant user.
pub fn evaluate_retrieval(store: &VectorStore, queries: &[(EmbeddingVector, usize)], k: usize) -> Result<RetrievalMetrics> {
    if store.is_empty() {
        return Err(Error::Precondition("store is empty".into()));
    }
    let ranks = queries
        .iter()
        .map(|(q, relevant)| Ok(store.top_k(q, k)?.rank_of(*relevant)))
        .collect::<Result<Vec<_>>>()?;
    let hits = ranks.iter().filter(|r| r.is_some()).count();
    Ok(RetrievalMetrics {
        hit_rate: hit_rate(hits, ranks.len())?,
        mrr: mrr(&ranks)?,
    })
}

/// Records with capabilities drawn uniformly from `[0.5, 2]` GHz.
pub fn synthetic_records(count: usize, seed: u64) -> Vec<CapabilityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let f = 0.5e9 + rng.random::<f64>() * 1.5e9;
            CapabilityRecord::new(id, f).expect("positive capability")
        })
        .collect()
}

/// Queries every stored vector after adding `level · n` for one fixed
/// Gaussian direction `n` per record, so all levels share the same noise
/// draws and only the magnitude changes.
pub fn noise_sweep(store: &VectorStore, user_ids: &[usize], levels: &[f64], k: usize, seed: u64) -> Result<Vec<RetrievalMetrics>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = store.dim();
    let base: Vec<(usize, EmbeddingVector, Vec<f64>)> = user_ids
        .iter()
        .map(|&id| {
            let v = store
                .vector(id)
                .ok_or_else(|| Error::Precondition(format!("user {id} is not in the store")))?;
            let n: Vec<f64> = (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt())
                .collect();
            Ok((id, v, n))
        })
        .collect::<Result<_>>()?;
    levels
        .iter()
        .map(|&level| {
            let queries = base
                .iter()
                .map(|(id, v, n)| {
                    let q = v.values().iter().zip(n).map(|(a, b)| a + level * b).collect();
                    Ok((EmbeddingVector::new(q)?, *id))
                })
                .collect::<Result<Vec<_>>>()?;
            evaluate_retrieval(store, &queries, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_relative_eq!(cosine_similarity(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap(), 0.0);
        assert_relative_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            max_relative = 1e-15
        );
        assert!(matches!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(Error::ZeroNorm)));
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn encoder_is_deterministic_and_separates_capabilities() {
        let enc = HashEncoder::default();
        let a = CapabilityRecord::new(1, 1.2e9).unwrap();
        let b = CapabilityRecord::new(1, 1.3e9).unwrap();
        assert_eq!(encode(&a, &enc).unwrap(), encode(&a, &enc).unwrap());
        assert_ne!(encode(&a, &enc).unwrap(), encode(&b, &enc).unwrap());
        assert_eq!(encode(&a, &enc).unwrap().dim(), 64);
        assert!(matches!(enc.encode_text("  "), Err(Error::ZeroNorm)));
    }

    #[test]
    fn store_semantics() {
        let store = VectorStore::new(2);
        assert!(store.top_k(&v(&[1.0, 0.0]), 3).unwrap().hits.is_empty());
        let rec = |id| CapabilityRecord::new(id, 1e9).unwrap();
        store.insert(rec(7), v(&[1.0, 0.0])).unwrap();
        store.insert(rec(3), v(&[0.0, 1.0])).unwrap();
        assert_eq!(store.len(), 2);
        store.insert(rec(3), v(&[0.0, 2.0])).unwrap();
        assert_eq!(store.len(), 2);
        assert!(store.insert(rec(4), v(&[1.0])).is_err());

        let r = store.top_k(&v(&[1.0, 0.1]), 5).unwrap();
        assert_eq!(r.hits.len(), 2);
        assert_eq!(r.hits[0].user_id, 7);
        assert_eq!(store.top_k(&v(&[1.0, 0.0]), 1).unwrap().hits[0].score, 1.0);
        assert!(store.top_k(&v(&[0.0, 0.0]), 1).is_err());
        assert!(store.top_k(&v(&[1.0, 0.0]), 0).is_err());
    }

    #[test]
    fn ties_break_by_user_id() {
        let store = VectorStore::new(2);
        for id in [9, 2, 5] {
            store.insert(CapabilityRecord::new(id, 1e9).unwrap(), v(&[1.0, 1.0])).unwrap();
        }
        let ids: Vec<_> = store.top_k(&v(&[1.0, 1.0]), 3).unwrap().hits.iter().map(|h| h.user_id).collect();
        assert_eq!(ids, vec![2, 5, 9]);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mrr(&[Some(1), Some(1)]).unwrap(), 1.0);
        assert_relative_eq!(mrr(&[Some(1), Some(2), Some(4)]).unwrap(), 7.0 / 12.0, max_relative = 1e-15);
        assert_eq!(mrr(&[None, None]).unwrap(), 0.0);
        assert!(mrr(&[]).is_err());
        assert_eq!(hit_rate(0, 4).unwrap(), 0.0);
        assert_eq!(hit_rate(4, 4).unwrap(), 1.0);
        assert_eq!(hit_rate(7, 10).unwrap(), 0.7);
        assert!(hit_rate(3, 2).is_err());
    }

    #[test]
    fn absent_labels_score_zero() {
        let store = VectorStore::from_records(&synthetic_records(5, 1), &HashEncoder::default()).unwrap();
        let q = store.vector(0).unwrap();
        let m = evaluate_retrieval(&store, &[(q, 99)], 5).unwrap();
        assert_eq!((m.hit_rate, m.mrr), (0.0, 0.0));
    }

    #[test]
    fn queries_find_their_user() {
        let records = synthetic_records(10, 4);
        let enc = HashEncoder::default();
        let store = VectorStore::from_records(&records, &enc).unwrap();
        for r in &records {
            let q = enc.encode_text(&query_text(r.user_id)).unwrap();
            assert!(store.top_k(&q, 5).unwrap().rank_of(r.user_id).is_some());
        }
    }

    #[test]
    fn knowledge_base_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.json");
        let records = synthetic_records(3, 2);
        save_knowledge_base(&path, &records).unwrap();
        assert_eq!(load_knowledge_base(&path).unwrap(), records);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 4),
            b in proptest::collection::vec(-10.0f64..10.0, 4),
            c in 0.01f64..100.0,
        ) {
            let (qa, qb) = (v(&a), v(&b));
            prop_assume!(qa.norm() > 1e-6 && qb.norm() > 1e-6);
            let s = cosine_similarity(&qa, &qb).unwrap();
            prop_assert!((s - cosine_similarity(&qb, &qa).unwrap()).abs() <= 1e-12);
            let scaled = v(&a.iter().map(|x| x * c).collect::<Vec<_>>());
            prop_assert!((s - cosine_similarity(&scaled, &qb).unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}

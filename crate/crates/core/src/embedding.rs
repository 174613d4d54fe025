//! Text embeddings behind a small provider trait.
//!
//! The default [`HashEmbedder`] needs no model files: every token is hashed
//! to four signed coordinates, a text is the mean of its token vectors, and
//! the result is L2-normalized.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::llm::{ChatClient, ChatClientConfig, DiskCache, Transport};

/// Maps text to a fixed-width vector. Implementations must be deterministic
/// for a fixed state and return finite values only.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifier used in cache keys and checkpoint echoes.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Signed coordinates per token.
pub const HASH_POSITIONS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { dim, seed }
    }

    /// Coordinates and signs for one token.
    ///
    /// The token bytes, prefixed by the seed as 8 little-endian bytes, go
    /// through 64-bit FNV-1a. Slot `j` then takes the SplitMix64 output of
    /// `h + (j + 1) * 0x9E3779B97F4A7C15`: the low bits modulo `dim` pick
    /// the coordinate and the top bit picks the sign.
    pub fn token_slots(&self, token: &str) -> [(usize, f64); HASH_POSITIONS] {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut out = [(0, 0.0); HASH_POSITIONS];
        for (j, slot) in out.iter_mut().enumerate() {
            let z = splitmix64(h.wrapping_add((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let sign = if z >> 63 == 1 { -1.0 } else { 1.0 };
            *slot = ((z % self.dim as u64) as usize, sign);
        }
        out
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let scale = 1.0 / (HASH_POSITIONS as f64).sqrt();
        for (pos, sign) in self.token_slots(token) {
            acc[pos] += sign * scale;
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hash-d{}-s{}", self.dim, self.seed)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(text);
        let mut v = vec![0.0; self.dim];
        if tokens.is_empty() {
            return Ok(v);
        }
        for t in &tokens {
            self.token_vector(t, &mut v);
        }
        let n = tokens.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        Ok(l2_normalize(&v))
    }
}

/// Per-dimension mean.
pub fn pool(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Validation("cannot pool an empty list of vectors".into()))?;
    let mut out = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != out.len() {
            return Err(Error::Validation(format!(
                "cannot pool vectors of widths {} and {}",
                out.len(),
                v.len()
            )));
        }
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `v / |v|`, or the zero vector when `|v| = 0`.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / n).collect()
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Embeddings from an HTTP endpoint taking `{model, input: [text]}` and
/// answering `{embeddings: [[f]]}` (the `data[0].embedding` shape is also
/// accepted). Results are cached on disk by provider id and text.
pub struct HttpEmbedder {
    client: ChatClient,
    dim: usize,
    cache: Option<DiskCache>,
}

impl HttpEmbedder {
    pub fn new(config: ChatClientConfig, dim: usize) -> Self {
        let cache = config.cache_dir.clone().map(DiskCache::new);
        Self {
            client: ChatClient::new(config),
            dim,
            cache,
        }
    }

    pub fn with_transport(config: ChatClientConfig, dim: usize, transport: Arc<dyn Transport>) -> Self {
        let cache = config.cache_dir.clone().map(DiskCache::new);
        Self {
            client: ChatClient::with_transport(config, transport),
            dim,
            cache,
        }
    }

    pub fn network_calls(&self) -> usize {
        self.client.network_calls()
    }

    fn parse(&self, value: &Value) -> Result<Vec<f64>> {
        let arr = value
            .pointer("/embeddings/0")
            .or_else(|| value.pointer("/data/0/embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Content("response has no embedding".into()))?;
        let v: Vec<f64> = arr.iter().filter_map(Value::as_f64).collect();
        if v.len() != self.dim || v.len() != arr.len() {
            return Err(Error::Content(format!(
                "expected {} finite numbers, got {} entries",
                self.dim,
                arr.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Content("embedding contains non-finite values".into()));
        }
        Ok(v)
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        let c = self.client.config();
        format!("http:{}:{}", c.base_url, c.model)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let key = DiskCache::key(&[&self.id(), text]);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Ok(v) = serde_json::from_str::<Value>(&hit) {
                return self.parse(&json!({ "embeddings": [v] }));
            }
        }
        let config = self.client.config();
        let url = format!("{}/embeddings", config.base_url.trim_end_matches('/'));
        let body = json!({ "model": config.model, "input": [text] });
        let v = self.parse(&self.client.post_with_retries(&url, &body)?)?;
        if let Some(cache) = &self.cache {
            cache.put(&key, &serde_json::to_string(&v).expect("vector serializes"))?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_and_lowercases() {
        assert_eq!(tokenize("Has_Pet.StuID, 18-49"), ["has", "pet", "stuid", "18", "49"]);
        assert!(tokenize(" ,.; ").is_empty());
    }

    #[test]
    fn slots_depend_on_seed() {
        let a = HashEmbedder::new(64, 1).token_slots("x");
        let b = HashEmbedder::new(64, 2).token_slots("x");
        assert_ne!(a, b);
    }
}

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use serde_json::{json, Value};
use sqltrack::embedding::*;
use sqltrack::llm::{ChatClientConfig, Transport, TransportFailure};
use sqltrack::Error;

/// The documented hashing scheme, written out independently.
fn reference_slots(seed: u64, dim: usize, token: &str) -> Vec<(usize, f64)> {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(token.as_bytes());
    let h = bytes
        .iter()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x100000001b3));
    (1..=4u64)
        .map(|j| {
            let mut z = h.wrapping_add(j.wrapping_mul(0x9E3779B97F4A7C15));
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^= z >> 31;
            ((z % dim as u64) as usize, if z >> 63 == 1 { -1.0 } else { 1.0 })
        })
        .collect()
}

fn reference_embed(seed: u64, dim: usize, text: &str) -> Vec<f64> {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    let mut v = vec![0.0; dim];
    for t in &tokens {
        for (pos, sign) in reference_slots(seed, dim, t) {
            v[pos] += sign * 0.5;
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

#[test]
fn hash_embedder_follows_documented_scheme() {
    for (seed, dim) in [(0, 64), (7, 16), (123, 256)] {
        let e = HashEmbedder::new(dim, seed);
        for text in ["Student", "has pet . StuID", "how many cars were made in 1970?"] {
            let got = e.embed(text).unwrap();
            let want = reference_embed(seed, dim, text);
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12), "{text}");
        }
        let slots: Vec<(usize, f64)> = e.token_slots("pets").to_vec();
        assert_eq!(slots, reference_slots(seed, dim, "pets"));
    }
}

#[test]
fn empty_text_embeds_to_zero() {
    let e = HashEmbedder::new(8, 0);
    assert_eq!(e.embed(" ,.").unwrap(), vec![0.0; 8]);
    assert_eq!(e.id(), "hash-d8-s0");
}

proptest! {
    #[test]
    fn hash_embeddings_are_unit_or_zero(text in ".{0,40}", seed: u64) {
        let e = HashEmbedder::new(32, seed);
        let v = e.embed(&text).unwrap();
        prop_assert_eq!(v.len(), 32);
        let n = norm(&v);
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        prop_assert_eq!(&v, &e.embed(&text).unwrap());
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6)) {
        let c = cosine(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, cosine(&b, &a));
    }
}

#[test]
fn pooling() {
    assert_eq!(pool(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![2.0, 3.0]);
    assert!(pool(&[]).is_err());
    assert!(pool(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    assert_eq!(l2_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    assert_eq!(l2_normalize(&[3.0, 4.0]), vec![0.6, 0.8]);
}

struct Fixed {
    reply: Value,
    calls: AtomicUsize,
}

impl Transport for Fixed {
    fn post_json(&self, url: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportFailure> {
        assert!(url.ends_with("/embeddings"));
        assert_eq!(body["input"][0], "list pets");
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.reply.clone())
    }
}

fn http(reply: Value, cache: Option<&std::path::Path>) -> (HttpEmbedder, Arc<Fixed>) {
    let t = Arc::new(Fixed {
        reply,
        calls: AtomicUsize::new(0),
    });
    let cfg = ChatClientConfig {
        offline_stub: false,
        cache_dir: cache.map(Into::into),
        ..Default::default()
    };
    (HttpEmbedder::with_transport(cfg, 3, t.clone()), t)
}

#[test]
fn http_embedder_parses_both_shapes_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let (e, t) = http(json!({"embeddings": [[0.1, 0.2, 0.3]]}), Some(dir.path()));
    assert_eq!(e.embed("list pets").unwrap(), vec![0.1, 0.2, 0.3]);
    assert_eq!(e.embed("list pets").unwrap(), vec![0.1, 0.2, 0.3]);
    assert_eq!(t.calls.load(Ordering::SeqCst), 1);

    let (e, _) = http(json!({"data": [{"embedding": [1.0, 0.0, 0.0]}]}), None);
    assert_eq!(e.embed("list pets").unwrap(), vec![1.0, 0.0, 0.0]);
    assert!(e.id().starts_with("http:"));
}

#[test]
fn http_embedder_rejects_bad_vectors() {
    let (e, _) = http(json!({"embeddings": [[0.1, 0.2]]}), None);
    assert!(matches!(e.embed("list pets"), Err(Error::Content(_))));
    let (e, _) = http(json!({"nothing": 1}), None);
    assert!(matches!(e.embed("list pets"), Err(Error::Content(_))));
}

//! Cached, concurrent narrative generation and the enhanced-profile store.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::client::{fallback_narrative, LlmClient};
use super::prompt::PromptBundle;
use crate::error::{Error, Result};

/// Stored narratives are cut to this many characters.
pub const MAX_NARRATIVE_CHARS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedProfile {
    pub user_id: usize,
    pub model_id: String,
    #[serde(with = "hex_u64")]
    pub prompt_hash: u64,
    pub narrative: String,
    pub fallback: bool,
    pub created_at: DateTime<Utc>,
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// Narratives keyed by `(model_id, prompt_hash)`.
#[derive(Debug, Default)]
pub struct ProfileCache {
    entries: RwLock<HashMap<(String, u64), EnhancedProfile>>,
}

impl ProfileCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, model_id: &str, prompt_hash: u64) -> Option<EnhancedProfile> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(model_id.to_string(), prompt_hash))
            .cloned()
    }

    /// Fallback narratives are never cached so a later run can retry the client.
    pub fn insert(&self, profile: EnhancedProfile) {
        if profile.fallback {
            return;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((profile.model_id.clone(), profile.prompt_hash), profile);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Warms the cache from a profile store.
    pub fn extend_from_store<R: BufRead>(&self, r: R) -> Result<usize> {
        let profiles = read_profiles(r)?;
        let n = profiles.len();
        for p in profiles {
            self.insert(p);
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceOptions {
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on every further attempt.
    pub base_backoff_ms: u64,
}

impl Default for EnhanceOptions {
    fn default() -> Self {
        EnhanceOptions {
            max_in_flight: 4,
            max_retries: 3,
            base_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnhanceStats {
    pub client_calls: usize,
    pub cache_hits: usize,
    pub fallbacks: usize,
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

/// One profile per bundle, in input order.
pub fn enhance_profiles(
    client: &dyn LlmClient,
    bundles: &[PromptBundle],
    cache: &ProfileCache,
    options: &EnhanceOptions,
) -> (Vec<EnhancedProfile>, EnhanceStats) {
    let model_id = client.model_id().to_string();
    let mut results: Vec<Option<EnhancedProfile>> = vec![None; bundles.len()];
    let mut misses = Vec::new();
    let mut stats = EnhanceStats::default();
    for (i, b) in bundles.iter().enumerate() {
        match cache.get(&model_id, b.prompt_hash) {
            Some(mut hit) => {
                hit.user_id = b.user_id;
                results[i] = Some(hit);
                stats.cache_hits += 1;
            }
            None => misses.push(i),
        }
    }

    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let generated = Mutex::new(Vec::with_capacity(misses.len()));
    let workers = options.max_in_flight.max(1).min(misses.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = misses.get(k) else { break };
                let bundle = &bundles[i];
                let profile = generate_one(client, &model_id, bundle, options, &calls);
                generated.lock().expect("result lock poisoned").push((i, profile));
            });
        }
    });

    for (i, profile) in generated.into_inner().expect("result lock poisoned") {
        if profile.fallback {
            stats.fallbacks += 1;
        }
        cache.insert(profile.clone());
        results[i] = Some(profile);
    }
    stats.client_calls = calls.load(Ordering::SeqCst);
    let profiles = results
        .into_iter()
        .map(|p| p.expect("every bundle resolved"))
        .collect();
    (profiles, stats)
}

fn generate_one(
    client: &dyn LlmClient,
    model_id: &str,
    bundle: &PromptBundle,
    options: &EnhanceOptions,
    calls: &AtomicUsize,
) -> EnhancedProfile {
    let mut last_err = None;
    for attempt in 0..=options.max_retries {
        if attempt > 0 && options.base_backoff_ms > 0 {
            let delay = options.base_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
            std::thread::sleep(Duration::from_millis(delay));
        }
        calls.fetch_add(1, Ordering::SeqCst);
        match client.complete(&bundle.rendered) {
            Ok(text) if !text.trim().is_empty() => {
                return EnhancedProfile {
                    user_id: bundle.user_id,
                    model_id: model_id.to_string(),
                    prompt_hash: bundle.prompt_hash,
                    narrative: truncate_chars(text.trim(), MAX_NARRATIVE_CHARS),
                    fallback: false,
                    created_at: Utc::now(),
                };
            }
            Ok(_) => last_err = Some(Error::Client("empty completion".into())),
            Err(e) => last_err = Some(e),
        }
    }
    if let Some(e) = last_err {
        warn!("user {}: falling back to template narrative after {e}", bundle.user_id);
    }
    EnhancedProfile {
        user_id: bundle.user_id,
        model_id: model_id.to_string(),
        prompt_hash: bundle.prompt_hash,
        narrative: truncate_chars(&fallback_narrative(&bundle.record_pairs), MAX_NARRATIVE_CHARS),
        fallback: true,
        created_at: Utc::now(),
    }
}

/// Writes one JSON object per line, preceded by a `{"provenance": ...}` line when given.
pub fn write_profiles<W: Write>(profiles: &[EnhancedProfile], provenance: Option<&Value>, mut w: W) -> Result<()> {
    if let Some(p) = provenance {
        serde_json::to_writer(&mut w, &serde_json::json!({ "provenance": p }))?;
        w.write_all(b"\n")
            .map_err(|e| Error::Format(format!("writing profile store: {e}")))?;
    }
    for p in profiles {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")
            .map_err(|e| Error::Format(format!("writing profile store: {e}")))?;
    }
    Ok(())
}

/// Reads a profile store, skipping a leading provenance line.
pub fn read_profiles<R: BufRead>(r: R) -> Result<Vec<EnhancedProfile>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 0 && line.starts_with("{\"provenance\"") {
            continue;
        }
        let p: EnhancedProfile = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("profile store line {}: {e}", lineno + 1)))?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enhance::client::MockClient;
    use crate::enhance::prompt::build_prompt;
    use crate::domain::{AttrValue, UserRecord};

    struct Failing(AtomicUsize);

    impl LlmClient for Failing {
        fn model_id(&self) -> &str {
            "broken"
        }
        fn complete(&self, _: &str) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(Error::Client("down".into()))
        }
    }

    /// Fails the first `k` calls, then delegates to the mock.
    struct Flaky(AtomicUsize, usize);

    impl LlmClient for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }
        fn complete(&self, p: &str) -> Result<String> {
            if self.0.fetch_add(1, Ordering::SeqCst) < self.1 {
                Err(Error::Client("transient".into()))
            } else {
                MockClient::default().complete(p)
            }
        }
    }

    fn bundles(n: usize) -> Vec<PromptBundle> {
        (0..n)
            .map(|i| {
                let rec = UserRecord {
                    user_id: i,
                    username: format!("u{i}"),
                    attributes: [
                        ("Name".to_string(), AttrValue::Text(format!("u{i}"))),
                        ("Gender".to_string(), if i % 2 == 0 { AttrValue::Text("Female".into()) } else { AttrValue::Unknown }),
                    ]
                    .into_iter()
                    .collect(),
                    follower_count: 0,
                    group_names: vec![],
                    mbti: None,
                    enneagram: None,
                };
                build_prompt(&rec).unwrap()
            })
            .collect()
    }

    fn fast() -> EnhanceOptions {
        EnhanceOptions { max_in_flight: 8, max_retries: 2, base_backoff_ms: 0 }
    }

    #[test]
    fn warm_cache_makes_no_calls() {
        let b = bundles(100);
        let cache = ProfileCache::new();
        let client = MockClient::default();
        let (first, s1) = enhance_profiles(&client, &b, &cache, &fast());
        assert_eq!(s1.client_calls, 100);
        let (second, s2) = enhance_profiles(&client, &b, &cache, &fast());
        assert_eq!(s2.client_calls, 0);
        assert_eq!(s2.cache_hits, 100);
        assert_eq!(first, second);
    }

    #[test]
    fn always_failing_client_falls_back() {
        let b = bundles(100);
        let client = Failing(AtomicUsize::new(0));
        let cache = ProfileCache::new();
        let (profiles, stats) = enhance_profiles(&client, &b, &cache, &fast());
        assert_eq!(profiles.len(), 100);
        assert!(profiles.iter().all(|p| p.fallback && !p.narrative.is_empty()));
        assert_eq!(stats.fallbacks, 100);
        // one attempt plus two retries each
        assert_eq!(client.0.load(Ordering::SeqCst), 300);
        assert!(cache.is_empty());
    }

    #[test]
    fn retries_recover_from_transient_failures() {
        let b = bundles(1);
        let client = Flaky(AtomicUsize::new(0), 2);
        let (p, stats) = enhance_profiles(&client, &b, &ProfileCache::new(), &fast());
        assert!(!p[0].fallback);
        assert_eq!(stats.client_calls, 3);
    }

    #[test]
    fn mock_output_is_identical_across_runs() {
        let b = bundles(20);
        let run = || {
            let (p, _) = enhance_profiles(&MockClient::default(), &b, &ProfileCache::new(), &fast());
            p.into_iter().map(|p| (p.user_id, p.narrative)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        assert_eq!(run()[7].0, 7);
    }

    #[test]
    fn store_roundtrip_and_cache_warmup() {
        let b = bundles(5);
        let (profiles, _) = enhance_profiles(&MockClient::default(), &b, &ProfileCache::new(), &fast());
        let mut buf = Vec::new();
        write_profiles(&profiles, Some(&serde_json::json!({"seed": 1})), &mut buf).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.lines().nth(1).unwrap().contains("\"prompt_hash\":\""));
        assert_eq!(read_profiles(buf.as_slice()).unwrap(), profiles);
        let cache = ProfileCache::new();
        cache.extend_from_store(buf.as_slice()).unwrap();
        let (_, s) = enhance_profiles(&MockClient::default(), &b, &cache, &fast());
        assert_eq!(s.client_calls, 0);
    }

    #[test]
    fn long_narratives_are_capped() {
        assert_eq!(truncate_chars(&"é".repeat(5000), MAX_NARRATIVE_CHARS).chars().count(), MAX_NARRATIVE_CHARS);
    }
}

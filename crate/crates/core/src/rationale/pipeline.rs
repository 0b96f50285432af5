use std::sync::Arc;

use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use super::{
    build_request, cache_key, parse_multimodal_stage, parse_single_stage, LvlmClient, LvlmEndpointConfig,
    PromptSet, RationaleBundle, RationaleCache, RationaleInput, Stage, StageResult,
};
use crate::{Error, Result};

/// Result of one `generate_bundle` call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleOutcome {
    pub bundle: RationaleBundle,
    pub cached: bool,
    /// Completions requested, including retries inside the client.
    pub attempts: usize,
}

/// Runs the selected stages as separate requests, in the order image, text,
/// multimodal, unless the cache already holds the bundle.
///
/// A stage that cannot be completed leaves the cache untouched and returns
/// [`Error::Rationale`] with the status of every stage.
pub async fn generate_bundle<C: LvlmClient>(
    client: &C,
    endpoint: &LvlmEndpointConfig,
    input: &RationaleInput,
    stages: &[Stage],
    prompts: &PromptSet,
    cache: &RationaleCache,
) -> Result<BundleOutcome> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        return Err(Error::Validation("no stages selected".into()));
    }
    if input.text.is_none() {
        return Err(Error::Input(format!("sample `{}` has no text", input.sample_id)));
    }
    let key = cache_key(&input.sample_id, &stages, prompts, client.model_name());
    if let Some(bundle) = cache.get(&key) {
        return Ok(BundleOutcome {
            bundle,
            cached: true,
            attempts: 0,
        });
    }

    let mut results: [Option<StageResult>; 3] = [None, None, None];
    let mut statuses = Vec::new();
    let mut failed = false;
    let mut attempts = 0;
    for &stage in &stages {
        if failed {
            statuses.push(format!("{stage}: skipped"));
            continue;
        }
        let outcome = match build_request(stage, input, prompts, endpoint) {
            Ok(request) => client.complete(&request).await,
            Err(e) => Err(e),
        };
        match outcome {
            Ok(c) => {
                attempts += c.attempts;
                let parsed = match stage {
                    Stage::Multimodal => parse_multimodal_stage(&c.text).into_stage_result(),
                    s => parse_single_stage(s, &c.text),
                };
                statuses.push(format!("{stage}: {}", parsed.parse_status.name()));
                results[stage as usize] = Some(parsed);
            }
            Err(e) => {
                statuses.push(format!("{stage}: error ({e})"));
                failed = true;
            }
        }
    }
    if failed {
        return Err(Error::Rationale {
            sample_id: input.sample_id.clone(),
            statuses,
        });
    }
    let [r_image, r_text, r_multi] = results;
    let bundle = RationaleBundle::new(input.sample_id.clone(), r_image, r_text, r_multi);
    cache.insert(&key, &bundle)?;
    Ok(BundleOutcome {
        bundle,
        cached: false,
        attempts,
    })
}

/// Runs `generate_bundle` for every input with at most `max_concurrency`
/// samples in flight. Results come back in input order.
pub async fn generate_all<C: LvlmClient + 'static>(
    client: Arc<C>,
    endpoint: &LvlmEndpointConfig,
    inputs: Vec<RationaleInput>,
    stages: &[Stage],
    prompts: Arc<PromptSet>,
    cache: Arc<RationaleCache>,
) -> Vec<(String, Result<BundleOutcome>)> {
    let permits = Arc::new(Semaphore::new(endpoint.max_concurrency.max(1)));
    let stages: Arc<[Stage]> = stages.into();
    let endpoint = Arc::new(endpoint.clone());
    let mut set = JoinSet::new();
    let ids: Vec<String> = inputs.iter().map(|i| i.sample_id.clone()).collect();
    for (idx, input) in inputs.into_iter().enumerate() {
        let (client, endpoint, stages, prompts, cache, permits) = (
            client.clone(),
            endpoint.clone(),
            stages.clone(),
            prompts.clone(),
            cache.clone(),
            permits.clone(),
        );
        set.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore is never closed");
            let out = generate_bundle(&*client, &endpoint, &input, &stages, &prompts, &cache).await;
            (idx, out)
        });
    }
    let mut out: Vec<Option<Result<BundleOutcome>>> = ids.iter().map(|_| None).collect();
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok((idx, r)) => out[idx] = Some(r),
            Err(e) => {
                // a panicked task leaves its slot empty and is reported below
                eprintln!("rationale task failed: {e}");
            }
        }
    }
    ids.into_iter()
        .zip(out)
        .map(|(id, r)| {
            let r = r.unwrap_or_else(|| {
                Err(Error::Rationale {
                    sample_id: id.clone(),
                    statuses: vec!["task aborted".into()],
                })
            });
            (id, r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rationale::{Completion, ImagePayload};
    use serde_json::Value;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    struct Scripted {
        calls: AtomicUsize,
        requests: Mutex<Vec<Value>>,
        fail_on: Option<usize>,
    }

    impl Scripted {
        fn new(fail_on: Option<usize>) -> Self {
            Self {
                calls: AtomicUsize::new(0),
                requests: Mutex::new(Vec::new()),
                fail_on,
            }
        }
    }

    impl LvlmClient for Scripted {
        async fn complete(&self, request: &Value) -> Result<Completion> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            self.requests.lock().unwrap().push(request.clone());
            if Some(n) == self.fail_on {
                return Err(Error::Transport {
                    attempts: vec!["refused".into()],
                });
            }
            Ok(Completion {
                text: "- **Label**: [1]\n- **Reason**: [stub]".into(),
                attempts: 1,
            })
        }

        fn model_name(&self) -> &str {
            "stub"
        }
    }

    fn input() -> RationaleInput {
        RationaleInput {
            sample_id: "s1".into(),
            text: Some("what a lovely monday".into()),
            image: Some(ImagePayload {
                media_type: "image/jpeg".into(),
                bytes: vec![9; 4],
            }),
        }
    }

    fn run<T>(f: impl std::future::Future<Output = T>) -> T {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap()
            .block_on(f)
    }

    #[test]
    fn three_separate_calls_then_cache_hit() {
        let client = Scripted::new(None);
        let cache = RationaleCache::in_memory();
        let prompts = PromptSet::shipped();
        let e = LvlmEndpointConfig::default();
        let first = run(generate_bundle(&client, &e, &input(), &Stage::ALL, &prompts, &cache)).unwrap();
        assert!(!first.cached);
        assert_eq!(client.calls.load(Ordering::SeqCst), 3);
        assert_eq!(first.bundle.r_multi.as_ref().unwrap().parse_status.name(), "failed");
        let second = run(generate_bundle(&client, &e, &input(), &Stage::ALL, &prompts, &cache)).unwrap();
        assert!(second.cached);
        assert_eq!(client.calls.load(Ordering::SeqCst), 3);
        assert_eq!(first.bundle, second.bundle);
        let reqs = client.requests.lock().unwrap();
        let first_text = reqs[0]["messages"][0]["content"][0]["text"].as_str().unwrap();
        assert!(!first_text.contains("lovely monday"));
    }

    #[test]
    fn stage_failure_is_not_cached() {
        let client = Scripted::new(Some(1));
        let cache = RationaleCache::in_memory();
        let e = LvlmEndpointConfig::default();
        let err = run(generate_bundle(&client, &e, &input(), &Stage::ALL, &PromptSet::shipped(), &cache))
            .unwrap_err();
        match err {
            Error::Rationale { sample_id, statuses } => {
                assert_eq!(sample_id, "s1");
                assert_eq!(statuses.len(), 3);
                assert!(statuses[0].starts_with("image: ok"));
                assert!(statuses[1].starts_with("text: error"));
                assert_eq!(statuses[2], "multi: skipped");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(cache.is_empty());
    }

    #[test]
    fn restricted_stages_allow_missing_image() {
        let client = Scripted::new(None);
        let mut no_image = input();
        no_image.image = None;
        let out = run(generate_bundle(
            &client,
            &LvlmEndpointConfig::default(),
            &no_image,
            &[Stage::Text],
            &PromptSet::shipped(),
            &RationaleCache::in_memory(),
        ))
        .unwrap();
        assert_eq!(out.bundle.combined, "[TXT-RAT] stub");
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn generate_all_keeps_input_order() {
        let client = Arc::new(Scripted::new(None));
        let inputs: Vec<_> = (0..5)
            .map(|i| RationaleInput {
                sample_id: format!("s{i}"),
                ..input()
            })
            .collect();
        let out = run(generate_all(
            client.clone(),
            &LvlmEndpointConfig::default(),
            inputs,
            &[Stage::Text],
            Arc::new(PromptSet::shipped()),
            Arc::new(RationaleCache::in_memory()),
        ));
        let ids: Vec<_> = out.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["s0", "s1", "s2", "s3", "s4"]);
        assert!(out.iter().all(|(_, r)| r.is_ok()));
        assert_eq!(client.calls.load(Ordering::SeqCst), 5);
    }
}

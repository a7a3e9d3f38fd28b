//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the code under test for the quantity
//! it checks.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use acsr_core::domain::HandCode;
use acsr_core::prompting::{
    build_prompt, ImageRef, PromptPayload, PromptTemplateConfig, SupportSet,
};
use rand::Rng;
use serde_json::{json, Value};

// ---------------------------------------------------------------- keyframes

/// Slow frames by direct distance test, grouped as connected components of the
/// pairwise relation `|i - j| <= theta` (breadth-first search over all pairs),
/// keyframe = lower median. Rendered in the same JSON layout as the library.
pub fn oracle_keyframes(xy: &[(f64, f64)], sigma: f64, theta: usize) -> String {
    let slow: Vec<usize> = (1..xy.len())
        .filter(|&j| {
            let (dx, dy) = (xy[j].0 - xy[j - 1].0, xy[j].1 - xy[j - 1].1);
            dx.hypot(dy) <= sigma
        })
        .collect();
    let n = slow.len();
    let mut component = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        component[start] = id;
        while let Some(a) = queue.pop_front() {
            members.push(slow[a]);
            for b in 0..n {
                if component[b] == usize::MAX && slow[a].abs_diff(slow[b]) <= theta {
                    component[b] = id;
                    queue.push_back(b);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups.sort_by_key(|g| g[0]);
    let keyframes: Vec<usize> = groups.iter().map(|g| g[(g.len() - 1) / 2]).collect();
    format!(
        "{{\"keyframes\":{},\"groups\":{}}}",
        json!(keyframes),
        json!(groups)
    )
}

/// Random walk mixing slow steps, fast steps and steps of exactly sigma.
pub fn random_trajectory(rng: &mut impl Rng, max_len: usize, sigma: f64) -> Vec<(f64, f64)> {
    let len = rng.gen_range(1..=max_len);
    let mut p = (rng.gen_range(0.0..1280.0), rng.gen_range(0.0..720.0));
    let mut out = vec![p];
    let slow_bias: f64 = rng.gen_range(0.2..0.9);
    for _ in 1..len {
        let roll: f64 = rng.gen();
        let (dx, dy) = if roll < 0.05 {
            // exactly on the threshold
            if rng.gen() {
                (sigma, 0.0)
            } else {
                (0.0, -sigma)
            }
        } else if roll < slow_bias {
            let r = rng.gen_range(0.0..sigma);
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            (r * a.cos(), r * a.sin())
        } else {
            let r = rng.gen_range(sigma * 1.0001..sigma * 8.0);
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            (r * a.cos(), r * a.sin())
        };
        p = (p.0 + dx, p.1 + dy);
        out.push(p);
    }
    out
}

// ---------------------------------------------------------------------- CTC

/// `-ln` of the total probability of every length-T path over `classes`
/// symbols that collapses to `target` (blank = 0), by explicit enumeration.
pub fn ctc_bruteforce(logits: &[Vec<f64>], target: &[usize]) -> f64 {
    let frames = logits.len();
    let classes = logits[0].len();
    let probs: Vec<Vec<f64>> = logits
        .iter()
        .map(|row| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            row.iter().map(|v| v.exp() / z).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &c in &path {
            if Some(c) != prev && c != 0 {
                collapsed.push(c);
            }
            prev = Some(c);
        }
        if collapsed == target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &c)| probs[t][c])
                .product::<f64>();
        }
        // next path in base `classes`
        let mut k = 0;
        loop {
            if k == frames {
                return -total.ln();
            }
            path[k] += 1;
            if path[k] < classes {
                break;
            }
            path[k] = 0;
            k += 1;
        }
    }
}

// ------------------------------------------------------------------- fusion

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

// ------------------------------------------------------------------ metrics

/// Word-level Levenshtein distance by memoised recursion.
pub fn word_distance(a: &[Vec<String>], b: &[Vec<String>]) -> usize {
    fn go(
        a: &[Vec<String>],
        b: &[Vec<String>],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let sub = go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]);
        let del = go(a, b, i + 1, j, memo) + 1;
        let ins = go(a, b, i, j + 1, memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// Splits a `/`-delimited token line into words of phonemes.
pub fn split_words(line: &str) -> Vec<Vec<String>> {
    line.split('/')
        .map(|w| w.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Random transcript line over `alphabet` with 0..=max_words words.
pub fn random_line(rng: &mut impl Rng, alphabet: &[&str], max_words: usize) -> String {
    let words = rng.gen_range(0..=max_words);
    (0..words)
        .map(|_| {
            let n = rng.gen_range(1..=4);
            (0..n)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(" / ")
}

// ---------------------------------------------------------------- prompting

pub fn inline_image(tag: &str) -> ImageRef {
    ImageRef::Inline {
        mime: "image/png".into(),
        bytes: tag.as_bytes().to_vec(),
    }
}

pub fn inline_support() -> SupportSet {
    SupportSet::from_entries(HandCode::all().map(|c| {
        let tag = format!("support-p{}-s{}", c.position.id(), c.shape.id());
        (c, inline_image(&tag))
    }))
    .unwrap()
}

pub fn keyframe_images(m: usize) -> Vec<(usize, ImageRef)> {
    (0..m)
        .map(|i| (10 * i + 3, inline_image(&format!("keyframe-{i}"))))
        .collect()
}

pub fn payload(m: usize) -> PromptPayload {
    build_prompt(
        &keyframe_images(m),
        &inline_support(),
        &PromptTemplateConfig::default(),
    )
    .unwrap()
}

// -------------------------------------------------------------- stub server

#[derive(Debug, Clone, Copy)]
pub enum StubMode {
    /// Valid labels (position 1, shape 1) after a delay.
    Valid { delay_ms: u64 },
    /// Always answers with this HTTP status.
    Status(u16),
    /// Well-formed chat response whose labels use position 6.
    BadPosition,
    /// Chat response whose content is not JSON.
    Garbage,
}

#[derive(Default)]
pub struct StubCounters {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
    pub authorized: AtomicUsize,
}

/// Chat-completions stand-in on 127.0.0.1 with its own runtime.
pub struct StubServer {
    pub addr: SocketAddr,
    pub counters: Arc<StubCounters>,
    _runtime: tokio::runtime::Runtime,
}

impl StubServer {
    pub fn start(mode: StubMode, expected_key: &'static str) -> Self {
        use axum::extract::State;
        use axum::http::{HeaderMap, StatusCode};
        use axum::response::IntoResponse;
        use axum::routing::post;
        use axum::{Json, Router};

        let counters = Arc::new(StubCounters::default());
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let state = (counters.clone(), mode, expected_key);
        let handler = |State((c, mode, key)): State<(
            Arc<StubCounters>,
            StubMode,
            &'static str,
        )>,
                       headers: HeaderMap,
                       Json(req): Json<Value>| async move {
            c.requests.fetch_add(1, Ordering::SeqCst);
            let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            c.max_in_flight.fetch_max(now, Ordering::SeqCst);
            if headers.get("authorization").and_then(|v| v.to_str().ok())
                == Some(&format!("Bearer {key}"))
            {
                c.authorized.fetch_add(1, Ordering::SeqCst);
            }
            let m = req
                .pointer("/response_format/json_schema/schema/properties/keyframes/minItems")
                .and_then(Value::as_u64)
                .unwrap_or(0) as usize;
            let chat = |content: String| json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]});
            let labels = |position: u8| {
                let entries: Vec<Value> = (0..m)
                    .map(|i| json!({"frame_ordinal": i, "position": position, "shape": 1}))
                    .collect();
                json!({ "keyframes": entries }).to_string()
            };
            let response = match mode {
                StubMode::Valid { delay_ms } => {
                    tokio::time::sleep(Duration::from_millis(delay_ms)).await;
                    (StatusCode::OK, Json(chat(labels(1)))).into_response()
                }
                StubMode::Status(code) => (
                    StatusCode::from_u16(code).unwrap(),
                    format!("stub status {code}"),
                )
                    .into_response(),
                StubMode::BadPosition => (StatusCode::OK, Json(chat(labels(6)))).into_response(),
                StubMode::Garbage => {
                    (StatusCode::OK, Json(chat("not json at all".into()))).into_response()
                }
            };
            c.in_flight.fetch_sub(1, Ordering::SeqCst);
            response
        };
        let app = Router::new()
            .route("/v1/chat/completions", post(handler))
            .with_state(state);
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self {
            addr,
            counters,
            _runtime: runtime,
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.counters.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.counters.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn authorized(&self) -> usize {
        self.counters.authorized.load(Ordering::SeqCst)
    }
}

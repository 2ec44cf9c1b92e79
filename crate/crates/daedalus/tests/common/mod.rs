//! Synthetic dataset directories and an in-process HTTP client.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use daedalus::service::{router, AppState};
use daedalus::synth::{generate_synthetic, write_corpus, SynthConfig};

/// A small corpus with images: 5 lots, 3 suppliers, 3 classes.
pub fn small_config(particles: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        particles,
        classes: 3,
        lots: 5,
        suppliers: 3,
        image_size: (10, 60),
        seed,
        pinned_lots: Vec::new(),
    }
}

pub fn write_small(dir: &Path, particles: usize, seed: u64, images: bool) {
    let corpus = generate_synthetic(&small_config(particles, seed)).unwrap();
    write_corpus(&corpus, dir, 32, images).unwrap();
}

pub fn open(dir: &Path, workers: usize) -> (Arc<AppState>, Router) {
    let (state, _warnings) = AppState::open(dir, workers).unwrap();
    let state = Arc::new(state);
    (state.clone(), router(state))
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn snapshot(&self) -> String {
        self.headers[daedalus::service::SNAPSHOT_HEADER]
            .to_str()
            .unwrap()
            .to_string()
    }
}

pub async fn send(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
    headers: &[(&str, &str)],
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None, &[]).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, Some(body), &[]).await
}

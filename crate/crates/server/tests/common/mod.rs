#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use cardstack_core::student::{ItemPool, LearningItem};
use cardstack_core::{Config, ItemId};
use cardstack_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn pool(n: usize) -> ItemPool {
    let topics = ["algebra", "geometry", "calculus", "statistics", "probability"];
    ItemPool::new(
        (0..n)
            .map(|k| LearningItem {
                item_id: ItemId::new(format!("item-{k:03}")),
                difficulty_b: -2.0 + 4.0 * k as f64 / n as f64,
                log_median_time_mu: 60f64.ln(),
                time_limit_s: 90.0,
                topic_tags: BTreeSet::from([topics[k % topics.len()].to_owned()]),
            })
            .collect(),
    )
    .unwrap()
}

pub fn app(n_items: usize) -> Router {
    router(AppState::in_memory(
        Arc::new(pool(n_items)),
        Arc::new(Config::default()),
    ))
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: non-JSON body ({e}): {bytes:?}"))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

pub fn keys(v: &Value) -> BTreeSet<&str> {
    v.as_object()
        .map(|o| o.keys().map(String::as_str).collect())
        .unwrap_or_default()
}

pub fn top_card_id(stack: &Value) -> String {
    stack["top"]["card_id"]
        .as_str()
        .expect("stack has a top card")
        .to_owned()
}

//! Drives the session API in-process: creates a session, submits a corner-view
//! drawing and an accidental-view refinement, fetches the prediction in all
//! three formats and checks it against an offline replay.
//! Runs with untrained weights unless a weights directory is given.
//!
//!     cargo run --release --example serve_session -- [weights_dir]

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;
use voxsketch::dataset::{grammar_shapes, render_views, DatasetConfig};
use voxsketch::fusion::Predictor;
use voxsketch::geometry::WorldGrid;
use voxsketch::network::{Network, NetworkSpec};
use voxsketch::service::{replay, router, ServiceConfig, SessionStore, Submission};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Vec<u8>) -> (u16, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::main]
async fn main() -> voxsketch::Result<()> {
    let predictor = match std::env::args().nth(1) {
        Some(dir) => Predictor::load(dir)?,
        None => Predictor::new(Network::new(NetworkSpec::toy(), 0)?, Network::new(NetworkSpec::toy().with_updater(true), 1)?)?,
    };
    let config = ServiceConfig::new(64, 16);
    let store = Arc::new(SessionStore::new(Arc::new(predictor), config.clone()));
    let app = router(store.clone());

    let data = DatasetConfig { seed: 8, ..DatasetConfig::toy() };
    let shape = render_views(&grammar_shapes(&data, 1)?[0], &data, 0);

    let (_, body) = call(&app, "POST", "/sessions", vec![]).await;
    let created: serde_json::Value = serde_json::from_slice(&body)?;
    let id = created["id"].as_str().unwrap().to_string();
    println!("session {id}");

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/drawings?view=10"), shape.views[10].drawing.to_png_bytes()).await;
    println!("first drawing from view 10: {status} {}", String::from_utf8_lossy(&body));
    let mut history = Vec::new();
    for view in [1usize, 10] {
        let png = shape.views[view].drawing.to_png_bytes();
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/drawings?view={view}"), png).await;
        println!("view {view}: {status} {}", String::from_utf8_lossy(&body));
        history.push(Submission { viewpoint: shape.views[view].viewpoint, drawing: shape.views[view].drawing.clone() });
    }

    let (_, voxels) = call(&app, "GET", &format!("/sessions/{id}/prediction?format=voxels"), vec![]).await;
    let served = WorldGrid::read_vxg(&voxels[..])?;
    let offline = replay(store.predictor(), &config, &history)?;
    println!("occupied voxels {}, identical to offline replay: {}", served.count_occupied(0.5), served == offline);
    for format in ["mesh", "preview&view=4"] {
        let (status, body) = call(&app, "GET", &format!("/sessions/{id}/prediction?format={format}"), vec![]).await;
        println!("{format}: {status}, {} bytes", body.len());
    }
    let (_, body) = call(&app, "GET", "/viewpoints", vec![]).await;
    let list: serde_json::Value = serde_json::from_slice(&body)?;
    println!("{} viewpoints", list.as_array().map_or(0, |a| a.len()));
    call(&app, "DELETE", &format!("/sessions/{id}"), vec![]).await;
    Ok(())
}

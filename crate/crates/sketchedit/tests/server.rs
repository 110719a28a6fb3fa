mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sketchedit::api::b64;
use sketchedit::checkpoint::Checkpoint;
use sketchedit::imageio::{decode_mask, decode_rgb, encode_mask_png, encode_png};
use sketchedit::server::{router, AppState};
use sketchedit_core::synth::toy_portrait;
use sketchedit_core::BinaryMask;
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    let ck = Checkpoint::initial(common::small_config()).unwrap();
    Arc::new(AppState::new(ck.edit_model().unwrap(), ck.hash()))
}

async fn call(state: &Arc<AppState>, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn mask() -> BinaryMask {
    BinaryMask::from_fn(32, 32, |x, y| (10..22).contains(&x) && (8..20).contains(&y))
}

fn edit_body() -> Value {
    json!({
        "image": b64(&encode_png(&toy_portrait(32, 1).unwrap())),
        "mask": b64(&encode_mask_png(&mask())),
        "pen": [{"points": [[11.0, 9.0], [20.0, 18.0]]}],
        "color": [{"points": [[12.0, 15.0], [19.0, 15.0]], "rgb": [0.8, 0.2, 0.2], "thickness": 2.0}],
        "iris": [{"center": [15.0, 12.0], "radius": 2.0, "rgb": [0.1, 0.3, 0.6]}],
        "noise_seed": 4
    })
}

fn image_of(v: &Value, key: &str) -> Vec<u8> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(v[key].as_str().unwrap()).unwrap()
}

#[tokio::test]
async fn health_reports_the_model_hash() {
    let s = state();
    let (status, body) = call(&s, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model"], s.model_hash.as_str());
}

#[tokio::test]
async fn edit_is_deterministic_and_keeps_unmasked_pixels() {
    let s = state();
    let (st1, a) = call(&s, "POST", "/v1/edit", Some(edit_body())).await;
    let (st2, b) = call(&s, "POST", "/v1/edit", Some(edit_body())).await;
    assert_eq!((st1, st2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a["image"], b["image"]);
    assert_eq!(s.forwards(), 2);
    let out = decode_rgb(&image_of(&a, "image"), "out").unwrap();
    let orig = decode_rgb(&encode_png(&toy_portrait(32, 1).unwrap()), "in").unwrap();
    let m = mask();
    for y in 0..32 {
        for x in 0..32 {
            if !m.get(x, y) {
                assert_eq!(out.pixel(x, y), orig.pixel(x, y));
            }
        }
    }
}

#[tokio::test]
async fn malformed_fields_are_named() {
    let s = state();
    let mut body = edit_body();
    body["color"][0]["rgb"] = json!("red");
    let (status, v) = call(&s, "POST", "/v1/edit", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "color[0].rgb");
    let mut body = edit_body();
    body["mask"] = json!("@@@");
    let (status, v) = call(&s, "POST", "/v1/edit", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "mask");
    let mut body = edit_body();
    body["extra"] = json!(1);
    assert_eq!(call(&s, "POST", "/v1/edit", Some(body)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(s.forwards(), 0);
}

#[tokio::test]
async fn semantic_errors_are_unprocessable() {
    let s = state();
    let mut body = edit_body();
    body["mask"] = json!(b64(&encode_mask_png(&BinaryMask::empty(32, 32))));
    assert_eq!(call(&s, "POST", "/v1/edit", Some(body)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let mut body = edit_body();
    body["image"] = json!(b64(&encode_png(&toy_portrait(48, 1).unwrap())));
    assert_eq!(call(&s, "POST", "/v1/edit", Some(body)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let mut body = edit_body();
    body["color"][0]["rgb"] = json!([2.0, 0.0, 0.0]);
    assert_eq!(call(&s, "POST", "/v1/edit", Some(body)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(s.forwards(), 0);
}

#[tokio::test]
async fn copy_paste_runs_one_forward_pass() {
    let s = state();
    let body = json!({
        "source": b64(&encode_png(&toy_portrait(32, 2).unwrap())),
        "source_mask": b64(&encode_mask_png(&mask())),
        "target": b64(&encode_png(&toy_portrait(32, 3).unwrap())),
        "offset": [2, -3],
    });
    let (status, v) = call(&s, "POST", "/v1/copy-paste", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s.forwards(), 1);
    assert_eq!(decode_rgb(&image_of(&v, "image"), "out").unwrap().width(), 32);
    let mut far = body;
    far["offset"] = json!([30, 0]);
    assert_eq!(call(&s, "POST", "/v1/copy-paste", Some(far)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sketch_preview_stays_inside_the_mask() {
    let s = state();
    let (status, v) = call(&s, "POST", "/v1/sketch-preview", Some(edit_body())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s.forwards(), 0);
    let sketch = decode_mask(&image_of(&v, "sketch"), "sketch").unwrap();
    assert!(!sketch.is_empty());
    assert_eq!(sketch.and(&mask()).count(), sketch.count());
    assert!(!image_of(&v, "color").is_empty());
}

#[tokio::test]
async fn unknown_routes_are_not_found() {
    let s = state();
    assert_eq!(call(&s, "GET", "/v1/nope", None).await.0, StatusCode::NOT_FOUND);
}

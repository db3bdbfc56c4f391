use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use base64::Engine;
use geoseg::image::{decode_image, encode_png_rgb};
use geoseg::ImageBuffer;
use geoseg_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BOUNDARY: &str = "geoseg-test-boundary";

fn app(config: ServiceConfig) -> (AppState, Router) {
    let state = AppState::new(config);
    (state.clone(), router(state))
}

fn multipart(bytes: &[u8]) -> Request<Body> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"img.png\"\r\nContent-Type: application/octet-stream\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/sessions")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

fn post_json(uri: &str, body: &Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn send_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

/// Left half warm red, right half cool blue.
fn split_image(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |x, _| if x < w / 2 { [210, 50, 40] } else { [40, 70, 200] })
}

async fn upload(app: &Router, img: &ImageBuffer) -> String {
    let (status, v) = send_json(app, multipart(&encode_png_rgb(img).unwrap())).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn stroke(app: &Router, id: &str, label: &str, points: Value, radius: f64) -> (StatusCode, Value) {
    let body = json!({ "strokes": [{ "label": label, "points": points, "radius": radius }] });
    send_json(app, post_json(&format!("/sessions/{id}/scribbles"), &body)).await
}

async fn seed_split(app: &Router, id: &str, w: f64, h: f64) {
    let (s, _) = stroke(app, id, "fg", json!([[w * 0.2, h * 0.3], [w * 0.2, h * 0.7]]), 2.0).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = stroke(app, id, "bg", json!([[w * 0.8, h * 0.3], [w * 0.8, h * 0.7]]), 2.0).await;
    assert_eq!(s, StatusCode::OK);
}

async fn segment(app: &Router, id: &str, overrides: Value) -> (StatusCode, Value) {
    send_json(app, post_json(&format!("/sessions/{id}/segment"), &overrides)).await
}

fn mask_bytes(v: &Value) -> Vec<u8> {
    base64::engine::general_purpose::STANDARD
        .decode(v["mask_png_base64"].as_str().unwrap())
        .unwrap()
}

#[tokio::test]
async fn upload_returns_id_and_dimensions() {
    let (_, app) = app(ServiceConfig::default());
    let (status, v) = send_json(&app, multipart(&encode_png_rgb(&split_image(30, 20)).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(30), Some(20)));
    assert!(!v["id"].as_str().unwrap().is_empty());
}

#[tokio::test]
async fn garbage_upload_is_400() {
    let (_, app) = app(ServiceConfig::default());
    let (status, v) = send_json(&app, multipart(b"0123456789")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "UnsupportedFormat");
}

#[tokio::test]
async fn oversized_upload_is_413() {
    let (_, app) = app(ServiceConfig::default());
    // Only the header is needed to reject it.
    let (status, v) = send_json(&app, multipart(b"P6 5000 4000 255\n")).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(v["error"], "TooLarge");

    let (_, small) = app_with_limit(100);
    let (status, _) = send_json(&small, multipart(&encode_png_rgb(&split_image(20, 20)).unwrap())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

fn app_with_limit(max_pixels: usize) -> (AppState, Router) {
    app(ServiceConfig { max_pixels, ..Default::default() })
}

#[tokio::test]
async fn sessions_are_isolated() {
    let (state, app) = app(ServiceConfig::default());
    let a = upload(&app, &split_image(30, 20)).await;
    let b = upload(&app, &split_image(30, 20)).await;
    assert_ne!(a, b);
    assert_eq!(state.session_count(), 2);
    let (_, v) = stroke(&app, &a, "fg", json!([[5, 5]]), 1.0).await;
    assert_eq!(v["fg"], 5);
    let (_, v) = stroke(&app, &b, "bg", json!([[5, 5]]), 0.0).await;
    assert_eq!((v["fg"].as_u64(), v["bg"].as_u64()), (Some(0), Some(1)));
}

#[tokio::test]
async fn point_stroke_counts_disk_pixels_and_erase_removes_them() {
    let (_, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(40, 40)).await;
    let disk = (-3i64..=3).flat_map(|dy| (-3i64..=3).map(move |dx| dx * dx + dy * dy)).filter(|&d| d <= 9).count();
    let (status, v) = stroke(&app, &id, "FG", json!([[20, 20]]), 3.0).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["fg"].as_u64(), Some(disk as u64));
    // Erase a single-pixel-wide column through the disk center: 7 pixels.
    let (_, v) = stroke(&app, &id, "erase", json!([[20, 10], [20, 30]]), 0.0).await;
    assert_eq!(v["fg"].as_u64(), Some(disk as u64 - 7));
    // A disk cut by the image corner.
    let (_, v) = stroke(&app, &id, "bg", json!([[0, 0]]), 3.0).await;
    let quarter = (0i64..=3).flat_map(|dy| (0i64..=3).map(move |dx| dx * dx + dy * dy)).filter(|&d| d <= 9).count();
    assert_eq!(v["bg"].as_u64(), Some(quarter as u64));
}

#[tokio::test]
async fn malformed_strokes_are_422() {
    let (_, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(20, 20)).await;
    let uri = format!("/sessions/{id}/scribbles");
    for body in [
        json!({ "strokes": [{ "label": "fg", "points": [[1, 1]] }] }),
        json!({ "strokes": [{ "label": "fg", "points": [[1, 1]], "radius": -2 }] }),
        json!({ "strokes": [{ "label": "maybe", "points": [[1, 1]], "radius": 1 }] }),
        json!({ "strokes": [{ "label": "fg", "points": [], "radius": 1 }] }),
        json!({ "strokes": [{ "label": "fg", "points": [[1]], "radius": 1 }] }),
        json!({ "lines": [] }),
    ] {
        let (status, v) = send_json(&app, post_json(&uri, &body)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(v["error"], "MalformedStroke");
    }
    let req = Request::post(&uri).body(Body::from("{not json")).unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unknown_and_expired_sessions_are_404() {
    let (state, app) = app(ServiceConfig {
        idle_timeout: Duration::from_millis(50),
        ..Default::default()
    });
    let (status, v) = stroke(&app, "not-a-session", "fg", json!([[1, 1]]), 1.0).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "UnknownSession");

    let id = upload(&app, &split_image(20, 20)).await;
    tokio::time::sleep(Duration::from_millis(120)).await;
    let (status, _) = stroke(&app, &id, "fg", json!([[1, 1]]), 1.0).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(state.session_count(), 0);

    let other = upload(&app, &split_image(20, 20)).await;
    tokio::time::sleep(Duration::from_millis(120)).await;
    assert_eq!(state.purge_expired(), 1);
    assert_eq!(segment(&app, &other, json!({})).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn segmentation_splits_color_regions() {
    let (_, app) = app(ServiceConfig::default());
    let img = split_image(48, 32);
    let id = upload(&app, &img).await;
    seed_split(&app, &id, 48.0, 32.0).await;
    let (status, v) = segment(&app, &id, json!({ "k_target": 64 })).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let mask = decode_image(&mask_bytes(&v)).unwrap();
    for y in 0..32 {
        for x in 0..48 {
            let expected = if x < 24 { [255; 3] } else { [0; 3] };
            assert_eq!(mask.pixel(x, y), expected, "pixel ({x}, {y})");
        }
    }
    let stats = &v["stats"];
    assert!(stats["outer_iters"].as_u64().unwrap() >= 1);
    assert!(stats["vertex_count"].as_u64().unwrap() >= 2);
    assert!(stats["K"].as_u64().unwrap() >= 2);
    assert!(stats["wall_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["config"]["k_target"], 64);

    let (status, raw) = send(&app, Request::get(format!("/sessions/{id}/mask")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(raw, mask_bytes(&v));
}

#[tokio::test]
async fn missing_seeds_is_409() {
    let (_, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(20, 20)).await;
    stroke(&app, &id, "fg", json!([[3, 3]]), 2.0).await;
    let (status, v) = segment(&app, &id, json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "MissingSeeds");
    let (status, v) = send_json(&app, Request::get(format!("/sessions/{id}/mask")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "NoMask");
}

#[tokio::test]
async fn bad_overrides_are_422() {
    let (_, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(20, 20)).await;
    seed_split(&app, &id, 20.0, 20.0).await;
    for (body, code) in [
        (json!({ "no_such_key": 1 }), "InvalidConfig"),
        (json!([1, 2]), "InvalidConfig"),
        (json!({ "theta": -1 }), "InvalidParameter"),
    ] {
        let (status, v) = segment(&app, &id, body.clone()).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        assert_eq!(v["error"], code);
    }
    let req = Request::post(format!("/sessions/{id}/segment")).body(Body::empty()).unwrap();
    assert_eq!(send(&app, req).await.0, StatusCode::OK);
}

#[tokio::test]
async fn repeated_runs_are_byte_identical() {
    let (_, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(40, 40)).await;
    seed_split(&app, &id, 40.0, 40.0).await;
    let (_, a) = segment(&app, &id, json!({ "k_target": 100 })).await;
    let (_, b) = segment(&app, &id, json!({ "k_target": 100 })).await;
    assert_eq!(mask_bytes(&a), mask_bytes(&b));
    assert_eq!(b["stats"]["grid_cache_hit"], true);
    assert_eq!(b["stats"]["superpixel_cache_hit"], true);
}

/// A noisy two-tone image where scribbles matter, so masks differ between
/// steps of the sequence below.
fn textured(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |x, y| {
        let n = ((x * 7 + y * 13) % 11) as u8 * 3;
        if (x as f64 - 30.0).hypot(y as f64 - 28.0) < 16.0 {
            [180 + n, 90, 60 + n]
        } else {
            [60 + n, 120 - n, 160]
        }
    })
}

#[tokio::test]
async fn caching_does_not_change_results() {
    let (_, cached) = app(ServiceConfig::default());
    let (_, cold) = app(ServiceConfig { cache_enabled: false, ..Default::default() });
    let img = textured(64, 56);
    type Step<'a> = (Option<(&'a str, Value, f64)>, Value);
    let steps: Vec<Step> = vec![
        (Some(("fg", json!([[30, 28], [34, 30]]), 2.0)), json!({ "k_target": 120 })),
        (Some(("bg", json!([[3, 3], [60, 3]]), 2.0)), json!({ "k_target": 120 })),
        (Some(("bg", json!([[3, 50], [60, 52]]), 1.0)), json!({ "k_target": 120 })),
        (None, json!({ "k_target": 120, "sigma_xy": 4.0 })),
        (None, json!({ "k_target": 60, "sigma_xy": 4.0 })),
        (Some(("erase", json!([[3, 50], [60, 52]]), 1.0)), json!({ "k_target": 60, "sigma_xy": 4.0, "unary_mode": "gaussian" })),
    ];
    let a = upload(&cached, &img).await;
    let b = upload(&cold, &img).await;
    let mut hits = Vec::new();
    for (s, cfg) in steps {
        if let Some((label, points, r)) = s {
            assert_eq!(stroke(&cached, &a, label, points.clone(), r).await, stroke(&cold, &b, label, points, r).await);
        }
        let (sa, va) = segment(&cached, &a, cfg.clone()).await;
        let (sb, vb) = segment(&cold, &b, cfg).await;
        assert_eq!(sa, sb);
        if sa == StatusCode::OK {
            assert_eq!(mask_bytes(&va), mask_bytes(&vb));
            assert_eq!(vb["stats"]["grid_cache_hit"], false);
            hits.push((va["stats"]["superpixel_cache_hit"].clone(), va["stats"]["grid_cache_hit"].clone()));
        }
    }
    // Step 1 fails (no background yet); then: hit, hit, grid rebuilt, superpixels rebuilt, no superpixels needed.
    assert_eq!(
        hits,
        [
            (json!(false), json!(false)),
            (json!(true), json!(true)),
            (json!(true), json!(false)),
            (json!(false), json!(true)),
            (json!(false), json!(true)),
        ]
    );
}

#[tokio::test]
async fn warm_runs_are_faster_than_cold_runs() {
    let (_, app) = app(ServiceConfig::default());
    let img = textured(160, 160);
    let (mut cold, mut warm) = (0.0, 0.0);
    let rounds = 3;
    for i in 0..rounds {
        let id = upload(&app, &img).await;
        seed_split(&app, &id, 160.0, 160.0).await;
        let (_, v) = segment(&app, &id, json!({ "k_target": 400 })).await;
        cold += v["stats"]["wall_ms"].as_f64().unwrap();
        let (_, _) = stroke(&app, &id, "bg", json!([[150, 150 - i]]), 2.0).await;
        let (_, v) = segment(&app, &id, json!({ "k_target": 400 })).await;
        assert_eq!(v["stats"]["grid_cache_hit"], true);
        warm += v["stats"]["wall_ms"].as_f64().unwrap();
        let mask = decode_image(&mask_bytes(&v)).unwrap();
        assert_eq!(mask.pixel(150, 150 - i), [0; 3], "seed must stay background");
    }
    assert!(warm < cold, "warm {warm:.1} ms vs cold {cold:.1} ms");
}

#[tokio::test]
async fn concurrent_sessions_do_not_interfere() {
    let (_, app) = app(ServiceConfig::default());
    let left = split_image(40, 30);
    let right = ImageBuffer::from_fn(40, 30, |_, y| if y < 15 { [20, 200, 60] } else { [220, 220, 30] });
    let a = upload(&app, &left).await;
    let b = upload(&app, &right).await;
    seed_split(&app, &a, 40.0, 30.0).await;
    stroke(&app, &b, "fg", json!([[5, 3], [35, 3]]), 1.0).await;
    stroke(&app, &b, "bg", json!([[5, 26], [35, 26]]), 1.0).await;

    let cfg = json!({ "k_target": 48 });
    let (ra, rb) = tokio::join!(segment(&app, &a, cfg.clone()), segment(&app, &b, cfg.clone()));
    let (sa, sb) = (segment(&app, &a, cfg.clone()).await, segment(&app, &b, cfg).await);
    assert_eq!(mask_bytes(&ra.1), mask_bytes(&sa.1));
    assert_eq!(mask_bytes(&rb.1), mask_bytes(&sb.1));
    let mb = decode_image(&mask_bytes(&rb.1)).unwrap();
    assert_eq!((mb.pixel(20, 2), mb.pixel(20, 28)), ([255; 3], [0; 3]));
}

#[tokio::test]
async fn delete_removes_session() {
    let (state, app) = app(ServiceConfig::default());
    let id = upload(&app, &split_image(10, 10)).await;
    let del = || Request::builder().method(Method::DELETE).uri(format!("/sessions/{id}")).body(Body::empty()).unwrap();
    assert_eq!(send(&app, del()).await.0, StatusCode::NO_CONTENT);
    assert_eq!(state.session_count(), 0);
    assert_eq!(send(&app, del()).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let (_, app) = app(ServiceConfig::default());
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/sessions")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");

    let (_, pinned) = self::app(ServiceConfig {
        cors_origin: Some("http://ui.example".into()),
        ..Default::default()
    });
    let req = Request::get("/sessions/x/mask")
        .header(header::ORIGIN, "http://ui.example")
        .body(Body::empty())
        .unwrap();
    let resp = pinned.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.example");
}

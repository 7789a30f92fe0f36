use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use smearcount::netpbm::{load_pgm, load_ppm, save_pgm};
use smearcount::pipeline::isolated_red_templates;
use smearcount::template::TemplateSpec;
use smearcount::{run_pipeline, synth_smear, AnalysisReport, GrayImage, PipelineConfig, Rect, SynthSpec};
use smearcount_cli::server::router;
use tower::ServiceExt;

fn scene(size: usize) -> (GrayImage, PipelineConfig) {
    let spec = SynthSpec {
        width: size,
        height: size,
        n_white: 1,
        n_red: size / 12,
        rng_seed: 4,
        ..SynthSpec::default()
    };
    let (img, truth) = synth_smear(&spec).unwrap();
    let img = load_pgm(&save_pgm(&img)).unwrap();
    let cfg = PipelineConfig {
        templates: isolated_red_templates(&spec, &truth, 16, 3),
        ..PipelineConfig::default()
    };
    assert!(!cfg.templates.is_empty());
    (img, cfg)
}

async fn send(app: &Router, method: Method, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

async fn upload(app: &Router, img: &GrayImage) -> String {
    let (status, body) = send(app, Method::POST, "/sessions", save_pgm(img)).await;
    assert_eq!(status, StatusCode::CREATED);
    json(&body)["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn fresh_session_has_no_run() {
    let app = router();
    let (img, _) = scene(256);
    let id = upload(&app, &img).await;

    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let v = json(&body);
    assert_eq!(v["status"], "no run yet");
    assert_eq!(v["width"], 256);
    assert_eq!(v["stages"], serde_json::json!(["original"]));

    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}/report"), vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"], "no_run_yet");

    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}/stages/original"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(load_pgm(&body).unwrap(), img);
}

#[tokio::test]
async fn run_report_equals_library_report() {
    let app = router();
    let (img, cfg) = scene(256);
    let id = upload(&app, &img).await;

    let (status, body) = send(
        &app,
        Method::POST,
        &format!("/sessions/{id}/run"),
        cfg.to_json().into_bytes(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let served: AnalysisReport = serde_json::from_slice(&body).unwrap();
    let local = run_pipeline(&img, &cfg).unwrap();
    assert_eq!(
        served.without_timings().to_json(),
        local.report.without_timings().to_json()
    );
    assert_eq!(served.white_count, 1);

    let (status, again) = send(&app, Method::GET, &format!("/sessions/{id}/report"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, body);

    let (_, body) = send(&app, Method::GET, &format!("/sessions/{id}"), vec![]).await;
    let v = json(&body);
    assert_eq!(v["status"], "done");
    let stages: Vec<&str> = v["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap())
        .collect();
    for name in [
        "original",
        "filtered",
        "equalized",
        "binary",
        "edges",
        "res_combined",
        "overlay",
    ] {
        assert!(stages.contains(&name), "{name}");
    }

    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}/stages/overlay"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(load_ppm(&body).unwrap(), local.overlay_image());
    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}/stages/filtered"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(load_pgm(&body).unwrap().width(), 256);
    let (status, body) = send(&app, Method::GET, &format!("/sessions/{id}/stages/nope"), vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json(&body)["error"], "unknown_stage");
}

#[tokio::test]
async fn unknown_session_is_404_everywhere() {
    let app = router();
    for (method, uri) in [
        (Method::GET, "/sessions/missing"),
        (Method::GET, "/sessions/missing/report"),
        (Method::GET, "/sessions/missing/stages/original"),
        (Method::DELETE, "/sessions/missing"),
    ] {
        let (status, body) = send(&app, method, uri, vec![]).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(json(&body)["error"], "unknown_session");
    }
    let (status, _) = send(&app, Method::POST, "/sessions/missing/run", b"{}".to_vec()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn delete_ends_the_session() {
    let app = router();
    let id = upload(&app, &GrayImage::filled(16, 16, 0.5)).await;
    let (status, _) = send(&app, Method::DELETE, &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = send(&app, Method::GET, &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_requests_are_4xx_with_reasons() {
    let app = router();
    let (status, body) = send(&app, Method::POST, "/sessions", b"P5 nonsense".to_vec()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json(&body)["error"], "bad_image");

    let id = upload(&app, &GrayImage::filled(32, 32, 0.5)).await;
    for bad in [
        "not json",
        r#"{"bogus": 1}"#,
        r#"{"butterworth": {"order": 0, "cutoff": 0.25}}"#,
    ] {
        let (status, body) = send(
            &app,
            Method::POST,
            &format!("/sessions/{id}/run"),
            bad.as_bytes().to_vec(),
        )
        .await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        let v = json(&body);
        assert_eq!(v["error"], "bad_config");
        assert!(!v["message"].as_str().unwrap().is_empty());
    }
}

#[tokio::test]
async fn stage_failures_are_422_with_the_stage() {
    let app = router();
    let id = upload(&app, &GrayImage::filled(32, 32, 0.5)).await;
    let cases = [("templates", Rect::new(0, 7, 0, 7)), ("config", Rect::new(0, 40, 0, 7))];
    for (stage, rect) in cases {
        let cfg = PipelineConfig {
            templates: vec![TemplateSpec {
                id: "t".into(),
                rect,
                weight: 1.0,
            }],
            ..PipelineConfig::default()
        };
        let (status, body) = send(
            &app,
            Method::POST,
            &format!("/sessions/{id}/run"),
            cfg.to_json().into_bytes(),
        )
        .await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        let v = json(&body);
        assert_eq!(v["error"], "stage_failed");
        assert_eq!(v["stage"], stage);

        let (_, body) = send(&app, Method::GET, &format!("/sessions/{id}"), vec![]).await;
        let v = json(&body);
        assert_eq!(v["status"], "failed");
        assert_eq!(v["failure"]["stage"], stage);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_run_is_rejected() {
    let app = router();
    let (img, cfg) = scene(768);
    let id = upload(&app, &img).await;
    let uri = format!("/sessions/{id}/run");

    let first = tokio::spawn({
        let (app, uri, body) = (app.clone(), uri.clone(), cfg.to_json().into_bytes());
        async move { send(&app, Method::POST, &uri, body).await }
    });
    loop {
        let (_, body) = send(&app, Method::GET, &format!("/sessions/{id}"), vec![]).await;
        if json(&body)["status"] == "running" {
            break;
        }
        assert!(
            !first.is_finished(),
            "first run finished before it was observed running"
        );
        tokio::time::sleep(Duration::from_millis(1)).await;
    }
    let (status, body) = send(&app, Method::POST, &uri, cfg.to_json().into_bytes()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(json(&body)["error"], "run_in_progress");

    let (status, _) = first.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    // the session accepts runs again afterwards
    let (status, _) = send(&app, Method::POST, &uri, cfg.to_json().into_bytes()).await;
    assert_eq!(status, StatusCode::OK);
}

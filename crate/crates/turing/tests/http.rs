use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lesionbench_turing::service::{NextResponse, ScoreResponse, DEFAULT_RUBRIC};
use lesionbench_turing::{router, AppState, CasePool, PoolCase, Store, TuringReport};
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "test-admin-token";

fn make_pool(dir: &Path, n: usize) -> CasePool {
    let img = image::RgbImage::from_pixel(2, 2, image::Rgb([9, 9, 9]));
    let cases = (0..n)
        .map(|k| {
            let paths = |tag: &str| -> Vec<PathBuf> {
                (0..3)
                    .map(|v| {
                        let p = dir.join(format!("c{k}_{tag}_{v}.png"));
                        img.save(&p).unwrap();
                        p
                    })
                    .collect()
            };
            PoolCase {
                case_id: format!("case{k:03}"),
                expert: paths("expert"),
                algorithm: paths("algorithm"),
            }
        })
        .collect();
    CasePool { cases }
}

fn app_with_state(data: &Path, pool: &CasePool) -> (Router, AppState) {
    let store = Store::open(data).unwrap();
    let state = AppState::new(store, pool.clone(), TOKEN, DEFAULT_RUBRIC);
    (router(state.clone()), state)
}

fn app(data: &Path, pool: &CasePool) -> Router {
    app_with_state(data, pool).0
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, admin: bool) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if admin {
        req = req.header(header::AUTHORIZATION, format!("Bearer {TOKEN}"));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn create(app: &Router, raters: &[&str], min: usize, max: usize, seed: u64) -> Vec<(String, usize)> {
    let (status, body) = call(
        app,
        "POST",
        "/sessions",
        Some(json!({"raters": raters, "seed": seed, "min_items": min, "max_items": max})),
        true,
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let v: Value = serde_json::from_slice(&body).unwrap();
    v["sessions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["session_id"].as_str().unwrap().to_string(), s["total"].as_u64().unwrap() as usize))
        .collect()
}

/// No key or value of a rater-facing body may reveal the source or the case.
fn assert_blind(body: &[u8]) {
    let text = String::from_utf8_lossy(body).to_lowercase();
    for word in ["source", "expert", "algorithm", "case"] {
        assert!(!text.contains(word), "`{word}` leaked in {text}");
    }
}

/// Score every item of a session, answering with `f(item index)`.
async fn complete_session(app: &Router, session: &str, mut score: impl FnMut(usize) -> (i64, i64)) -> usize {
    let mut k = 0;
    loop {
        let (status, body) = call(app, "GET", &format!("/sessions/{session}/next"), None, false).await;
        assert_eq!(status, StatusCode::OK);
        assert_blind(&body);
        let next: NextResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(next.progress.scored, k);
        let Some(item) = next.item else {
            assert!(next.complete);
            return k;
        };
        let (c, r) = score(k);
        let (status, body) = call(
            app,
            "POST",
            &format!("/sessions/{session}/scores"),
            Some(json!({"item_id": item.item_id, "completeness": c, "correctness": r})),
            false,
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        assert_blind(&body);
        let ack: ScoreResponse = serde_json::from_slice(&body).unwrap();
        assert!(!ack.overwritten);
        k += 1;
        assert_eq!(ack.progress.scored, k);
    }
}

#[tokio::test]
async fn scripted_rater_completes_forty_items() {
    let dir = tempfile::tempdir().unwrap();
    let pool = make_pool(dir.path(), 45);
    let app = app(&dir.path().join("data"), &pool);
    let sessions = create(&app, &["r1"], 40, 40, 7).await;
    let (sid, total) = &sessions[0];
    assert_eq!(*total, 40);

    let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, false).await;
    let next: NextResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(next.rubric, DEFAULT_RUBRIC);
    let item = next.item.unwrap();
    assert_eq!(item.renders.len(), 3);
    for url in &item.renders {
        let (status, png) = call(&app, "GET", url, None, false).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(&png[1..4], b"PNG");
    }

    assert_eq!(complete_session(&app, sid, |k| (1 + (k % 6) as i64, 6)).await, 40);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let pool = make_pool(dir.path(), 41);
    let app = app(&dir.path().join("data"), &pool);

    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"raters": ["a"], "seed": 1})), false).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, "GET", "/report", None, false).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, "GET", "/report", None, true).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"raters": ["a"], "seed": 1, "min_items": 42, "max_items": 42})),
        true,
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let sid = create(&app, &["a"], 40, 41, 1).await.remove(0).0;
    let (status, _) = call(&app, "GET", "/sessions/missing/next", None, false).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, false).await;
    let item = serde_json::from_slice::<NextResponse>(&body).unwrap().item.unwrap().item_id;
    let uri = format!("/sessions/{sid}/scores");
    let (status, _) = call(&app, "POST", &uri, Some(json!({"item_id": item, "completeness": 0, "correctness": 3})), false).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"item_id": "zzz", "completeness": 3, "correctness": 3})), false).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"item_id": item, "completeness": 6, "correctness": 6})), false).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "POST", &uri, Some(json!({"item_id": item, "completeness": 5, "correctness": 6})), false).await;
    assert_eq!(status, StatusCode::OK);
    assert!(serde_json::from_slice::<ScoreResponse>(&body).unwrap().overwritten);

    let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/close"), None, true).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"item_id": item, "completeness": 3, "correctness": 3})), false).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn scores_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let pool = make_pool(dir.path(), 41);
    let sid = {
        let app = app(&data, &pool);
        let sid = create(&app, &["a"], 40, 41, 3).await.remove(0).0;
        for _ in 0..3 {
            let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, false).await;
            let item = serde_json::from_slice::<NextResponse>(&body).unwrap().item.unwrap().item_id;
            call(
                &app,
                "POST",
                &format!("/sessions/{sid}/scores"),
                Some(json!({"item_id": item, "completeness": 4, "correctness": 4})),
                false,
            )
            .await;
        }
        sid
    };
    let app = app(&data, &pool);
    let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None, false).await;
    let next: NextResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(next.progress.scored, 3);
}

async fn nine_rater_report(algorithm_bonus: i64) -> TuringReport {
    let dir = tempfile::tempdir().unwrap();
    let pool = make_pool(dir.path(), 45);
    let (app, state) = app_with_state(&dir.path().join("data"), &pool);
    let raters: Vec<String> = (1..=9).map(|r| format!("rater{r}")).collect();
    let names: Vec<&str> = raters.iter().map(String::as_str).collect();
    let sessions = create(&app, &names, 40, 41, 2024).await;
    for (r, (sid, _)) in sessions.iter().enumerate() {
        // The scripted client cannot see sources, so look them up server-side.
        let items = state.store().state().sessions[sid].items.clone();
        let bonus = algorithm_bonus * (1 + (r % 3) as i64);
        complete_session(&app, sid, |k| {
            let base = 2;
            match items[k].source {
                lesionbench_turing::Source::Expert => (base, base),
                lesionbench_turing::Source::Algorithm => (base + bonus, base + bonus),
            }
        })
        .await;
    }
    let (status, body) = call(&app, "GET", "/report", None, true).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

#[tokio::test]
async fn identical_scores_give_p_one() {
    let rep = nine_rater_report(0).await;
    assert_eq!(rep.rater_count, 9);
    assert_eq!(rep.paired_by_rater.completeness.unwrap().p_value, 1.0);
    assert_eq!(rep.paired_by_rater.correctness.unwrap().p_value, 1.0);
}

#[tokio::test]
async fn strictly_ordered_raters_give_exact_p() {
    let rep = nine_rater_report(1).await;
    let p = rep.paired_by_rater.completeness.unwrap().p_value;
    assert!((p - 2.0 / 512.0).abs() < 1e-12, "{p}");
    let d = &rep.distributions[&lesionbench_turing::Source::Algorithm];
    assert!(d.completeness.as_ref().unwrap().summary.median > 2.0);
}

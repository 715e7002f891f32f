//! Drive the rating HTTP API the way the browser client does: an admin
//! creates sessions, a rater pulls items and posts scores, the admin reads
//! the report. Requests go straight into the router, no socket needed.
//!
//! ```text
//! cargo run -p lesionbench-turing --example rating_service
//! ```

use axum::body::Body;
use axum::http::{header, Method, Request};
use axum::Router;
use http_body_util::BodyExt;
use lesionbench_turing::service::{CreateSessionsResponse, NextResponse, DEFAULT_RUBRIC};
use lesionbench_turing::{router, AppState, CasePool, PoolCase, Store, TuringReport};
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "admin-secret";

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, admin: bool) -> Result<(u16, Vec<u8>), Box<dyn std::error::Error>> {
    let mut req = Request::builder().method(method).uri(uri);
    if admin {
        req = req.header(header::AUTHORIZATION, format!("Bearer {TOKEN}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string()))?,
        None => req.body(Body::empty())?,
    };
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status().as_u16();
    Ok((status, resp.into_body().collect().await?.to_bytes().to_vec()))
}

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    // Plain grey tiles stand in for real slice renderings.
    let tile = image::RgbImage::from_pixel(4, 4, image::Rgb([90, 90, 90]));
    let mut pool = CasePool::default();
    for k in 0..12 {
        let paths = |tag: &str| -> Result<Vec<_>, image::ImageError> {
            (0..3)
                .map(|v| {
                    let p = dir.path().join(format!("c{k}_{tag}_{v}.png"));
                    tile.save(&p).map(|_| p)
                })
                .collect()
        };
        pool.cases.push(PoolCase {
            case_id: format!("case{k:03}"),
            expert: paths("expert")?,
            algorithm: paths("algorithm")?,
        });
    }

    let store = Store::open(dir.path().join("data"))?;
    let app = router(AppState::new(store, pool, TOKEN, DEFAULT_RUBRIC));
    tokio::runtime::Runtime::new()?.block_on(async {
        let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({"raters": ["ann"], "seed": 1})), false).await?;
        println!("create without token -> {status}");

        let req = json!({"raters": ["ann", "ben"], "seed": 1, "min_items": 6, "max_items": 8});
        let (status, body) = call(&app, Method::POST, "/sessions", Some(req), true).await?;
        let created: CreateSessionsResponse = serde_json::from_slice(&body)?;
        println!("create -> {status}, {} sessions", created.sessions.len());

        for s in &created.sessions {
            let mut k = 0;
            loop {
                let (_, body) = call(&app, Method::GET, &format!("/sessions/{}/next", s.session_id), None, false).await?;
                let next: NextResponse = serde_json::from_slice(&body)?;
                let Some(item) = next.item else { break };
                let (status, _) = call(&app, Method::GET, &item.renders[0], None, false).await?;
                assert_eq!(status, 200);
                let score = json!({"item_id": item.item_id, "completeness": 2 + k % 5, "correctness": 6 - k % 3});
                call(&app, Method::POST, &format!("/sessions/{}/scores", s.session_id), Some(score), false).await?;
                k += 1;
            }
            call(&app, Method::POST, &format!("/sessions/{}/close", s.session_id), None, true).await?;
            println!("{} scored {k} items", s.session_id);
        }

        let (status, body) = call(&app, Method::GET, "/report", None, true).await?;
        let report: TuringReport = serde_json::from_slice(&body)?;
        println!("report -> {status}: {} raters, {} items", report.rater_count, report.scored_items);
        Ok(())
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}

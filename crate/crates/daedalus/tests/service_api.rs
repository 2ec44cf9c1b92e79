//! The HTTP API end to end over a dataset directory, in process.

mod common;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use common::{get, open, post, send, write_small};
use daedalus::coords::{CoordFile, CoordKind};
use daedalus::service::JobState;

const ATTRS: [&str; 3] = ["Elongation", "Circularity", "Area"];

fn projection_body(seed: u64, epochs: usize) -> Value {
    json!({"attributes": ATTRS, "config": {"seed": seed, "n_epochs": epochs, "n_neighbors": 10}})
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn dataset_and_attributes() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 120, 1, true);
    let (state, app) = open(dir.path(), 1);

    let r = get(&app, "/dataset").await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_eq!(body["rows"], 120);
    assert_eq!(body["ids"].as_array().unwrap().len(), 120);
    assert_eq!(r.snapshot(), format!("{}:0", state.version));

    let attrs = get(&app, "/attributes").await.json();
    let list = attrs["attributes"].as_array().unwrap();
    assert_eq!(list.len(), 12);
    let area = list.iter().find(|a| a["name"] == "Area").unwrap();
    assert!(area["bins"]["edges"].as_array().unwrap().len() >= 2);
    assert!(list
        .iter()
        .find(|a| a["name"] == "Supplier")
        .unwrap()
        .get("bins")
        .is_none());

    let missing = get(&app, "/nope").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.json()["code"], "not_found");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn labeling_round_trip_persists() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 60, 2, false);
    let (state, app) = open(dir.path(), 1);
    let ids: Vec<String> = state.dataset.ids().map(String::from).collect();

    let created = post(
        &app,
        "/alphabets",
        json!({"name": "Shape", "labels": [{"name": "round", "color": "#1F77B4"}, {"name": "flake", "color": "#ff7f0e"}], "who": "ann"}),
    )
    .await;
    assert_eq!(created.status, StatusCode::CREATED);
    let alphabet = created.json();
    assert_eq!(alphabet["labels"][0]["color"], "#1f77b4");
    assert_eq!(alphabet["created_by"], "ann");
    assert!(created.snapshot().ends_with(":1"));

    let dup = post(
        &app,
        "/alphabets",
        json!({"name": "Shape", "labels": [{"name": "x", "color": "#000000"}]}),
    )
    .await;
    assert_eq!(dup.status, StatusCode::CONFLICT);

    let assigned = post(
        &app,
        "/alphabets/Shape/assign",
        json!({"particles": &ids[..10], "label": "round"}),
    )
    .await;
    assert_eq!(assigned.status, StatusCode::OK);
    assert_eq!(assigned.json(), json!({"changed": 10, "log": 2}));
    let flake = alphabet["labels"][1]["id"].as_u64().unwrap();
    let by_id = format!("/alphabets/{}/assign", alphabet["id"]);
    let again = post(
        &app,
        &by_id,
        json!({"particles": &ids[5..15], "label": flake}),
    )
    .await;
    assert_eq!(again.json()["changed"], 10);

    let round = get(&app, "/labels/Shape/round/particles").await.json();
    assert_eq!(round["ids"], json!(&ids[..5]));
    let unlabeled = get(&app, "/labels/Shape/UNLABELED/particles").await.json();
    assert_eq!(unlabeled["count"], 45);

    let removed = post(
        &app,
        "/alphabets/Shape/unassign",
        json!({"particles": [&ids[0], "ghost"]}),
    )
    .await;
    assert_eq!(removed.json()["changed"], 1);

    let bad_label = post(
        &app,
        "/alphabets/Shape/assign",
        json!({"particles": &ids[..1], "label": "square"}),
    )
    .await;
    assert_eq!(bad_label.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_particle = post(
        &app,
        "/alphabets/Shape/assign",
        json!({"particles": ["ghost"], "label": "round"}),
    )
    .await;
    assert_eq!(bad_particle.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        bad_particle.json()["details"][0]["path"],
        "/particles/ghost"
    );
    assert_eq!(
        get(&app, "/labels/Nope/round/particles").await.status,
        StatusCode::NOT_FOUND
    );

    let listing = get(&app, "/alphabets").await.json();
    let entry = &listing["alphabets"][0];
    assert_eq!(entry["unlabeled"], 46);
    let before = get(&app, "/snapshot").await.body;
    drop(app);
    drop(state);

    // a fresh process sees the same labels
    let (state, app) = open(dir.path(), 1);
    assert_eq!(state.labels.read().unwrap().log().len(), 4);
    assert_eq!(get(&app, "/snapshot").await.body, before);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshot_export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 40, 3, false);
    let (state, app) = open(dir.path(), 1);
    let ids: Vec<String> = state.dataset.ids().map(String::from).collect();
    post(
        &app,
        "/alphabets",
        json!({"name": "Q", "labels": [{"name": "ok", "color": "#00ff00"}]}),
    )
    .await;
    post(
        &app,
        "/alphabets/Q/assign",
        json!({"particles": &ids[..7], "label": "ok"}),
    )
    .await;
    let exported = get(&app, "/snapshot").await.body;

    let other = tempfile::tempdir().unwrap();
    write_small(other.path(), 40, 3, false);
    let (_, fresh) = open(other.path(), 1);
    let doc: Value = serde_json::from_slice(&exported).unwrap();
    let imported = post(&fresh, "/snapshot", doc.clone()).await;
    assert_eq!(imported.status, StatusCode::OK);
    assert_eq!(
        imported.json(),
        json!({"alphabets": 1, "assignments": 7, "log": 2})
    );
    assert_eq!(get(&fresh, "/snapshot").await.body, exported);

    // a conflicting import is rejected by default and accepted with a policy
    post(
        &fresh,
        "/alphabets/Q/unassign",
        json!({"particles": &ids[..1]}),
    )
    .await;
    let mut theirs = doc.clone();
    theirs["assignments"].as_array_mut().unwrap().truncate(1);
    theirs["log"] = json!([]);
    let label = doc["alphabets"][0]["labels"][0]["id"].clone();
    let other_label =
        json!({"id": label.as_u64().unwrap() + 100, "name": "bad", "color": "#ff0000"});
    theirs["alphabets"][0]["labels"]
        .as_array_mut()
        .unwrap()
        .push(other_label.clone());
    theirs["assignments"][0][2] = other_label["id"].clone();
    post(
        &app,
        "/alphabets/Q/assign",
        json!({"particles": &ids[..1], "label": "ok"}),
    )
    .await;
    let _ = state;
    let conflict = post(&app, "/snapshot", theirs.clone()).await;
    assert_eq!(
        conflict.status,
        StatusCode::CONFLICT,
        "{}",
        String::from_utf8_lossy(&conflict.body)
    );
    let accepted = post(&app, "/snapshot?policy=theirs&who=bob", theirs).await;
    assert_eq!(accepted.status, StatusCode::OK);
    let bad = get(&app, "/labels/Q/bad/particles").await.json();
    assert_eq!(bad["ids"], json!([&ids[0]]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn projection_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 200, 4, false);
    let (state, app) = open(dir.path(), 2);

    let first = post(&app, "/projection", projection_body(1, 40)).await;
    assert_eq!(first.status, StatusCode::ACCEPTED);
    let id = first.json()["id"].as_str().unwrap().to_string();
    let same = post(&app, "/projection", projection_body(1, 40)).await;
    assert_eq!(same.status, StatusCode::OK);
    assert_eq!(same.json()["id"], id.as_str());

    let not_yet = get(&app, &format!("/projection/{id}?format=binary")).await;
    if state.jobs.get(&id).unwrap().state() != JobState::Done {
        assert_eq!(not_yet.status, StatusCode::CONFLICT);
    }
    let view = state.jobs.wait(&id).await.unwrap();
    assert_eq!(view.state, JobState::Done);

    let status = get(&app, &format!("/projection/{id}")).await.json();
    assert_eq!(status["state"], "done");
    assert_eq!(status["progress"], 1.0);
    assert_eq!(status["result"]["rows"], 200);

    let bin = get(&app, &format!("/projection/{id}?format=binary")).await;
    assert_eq!(bin.status, StatusCode::OK);
    let file = CoordFile::decode(&bin.body).unwrap();
    assert_eq!(file.coordinates.len(), 200);
    assert!(matches!(file.header.kind, CoordKind::Projection(_)));
    assert!(dir
        .path()
        .join("projections")
        .join(format!("{id}.bin"))
        .exists());

    // a finished job is reused; its coordinates feed the hit test
    assert_eq!(
        post(&app, "/projection", projection_body(1, 40))
            .await
            .json()["id"],
        id.as_str()
    );
    let hit = post(
        &app,
        "/selection/hit",
        json!({"geometry": {"rectangle": {"x0": -1e9, "y0": -1e9, "x1": 1e9, "y1": 1e9}}, "source": {"projection": {"job": id}}}),
    )
    .await;
    assert_eq!(hit.json()["count"], 200);

    let missing = get(&app, "/projection/ffff").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn projection_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 50, 5, false);
    let (_, app) = open(dir.path(), 1);
    let cases = [
        (json!({"attributes": ["Area"]}), "/attributes"),
        (json!({"attributes": ["Area", "Bogus"]}), "/attributes"),
        (
            json!({"attributes": ATTRS, "config": {"n_neighbors": 600}}),
            "/config/n_neighbors",
        ),
        (
            json!({"attributes": ATTRS, "config": {"min_dist": 2.0}}),
            "/config/min_dist",
        ),
        (
            json!({"attributes": ATTRS, "alphabet": "nope"}),
            "/alphabet",
        ),
    ];
    for (body, path) in cases {
        let r = post(&app, "/projection", body.clone()).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        let err = r.json();
        assert_eq!(err["code"], "validation");
        assert_eq!(err["details"][0]["path"], path, "{err}");
    }
    let malformed = send(
        &app,
        Method::POST,
        "/projection",
        None,
        &[("content-type", "application/json")],
    )
    .await;
    assert!(malformed.status.is_client_error());
    assert!(malformed.json()["message"].is_string());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cancel_and_resubmit() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 400, 6, false);
    let (state, app) = open(dir.path(), 1);
    let body = projection_body(2, 100_000);
    let id = post(&app, "/projection", body.clone()).await.json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    // let it start so cancellation interrupts a running worker
    for _ in 0..200 {
        if state.jobs.get(&id).unwrap().state() == JobState::Running {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let cancelled = send(
        &app,
        Method::DELETE,
        &format!("/projection/{id}"),
        None,
        &[],
    )
    .await;
    assert_eq!(cancelled.status, StatusCode::OK);
    assert_eq!(cancelled.json()["state"], "cancelled");
    let progress = cancelled.json()["progress"].as_f64().unwrap();
    assert!(progress < 1.0);

    let again = post(&app, "/projection", body).await;
    assert_eq!(again.status, StatusCode::ACCEPTED);
    let new_id = again.json()["id"].as_str().unwrap().to_string();
    assert_ne!(new_id, id);
    state.jobs.cancel(&new_id).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_jobs_run_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 200, 7, false);
    let (state, app) = open(dir.path(), 2);
    let a = post(&app, "/projection", projection_body(1, 30))
        .await
        .json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let b = post(&app, "/projection", projection_body(2, 30))
        .await
        .json()["id"]
        .as_str()
        .unwrap()
        .to_string();
    assert_ne!(a, b);
    let (va, vb) = tokio::join!(state.jobs.wait(&a), state.jobs.wait(&b));
    assert_eq!(va.unwrap().state, JobState::Done);
    assert_eq!(vb.unwrap().state, JobState::Done);
    let ra = state.jobs.get(&a).unwrap().result().unwrap();
    let rb = state.jobs.get(&b).unwrap().result().unwrap();
    assert_ne!(ra.coordinates, rb.coordinates);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn supervised_projection_is_pinned_to_its_label_state() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 150, 8, false);
    let (state, app) = open(dir.path(), 1);
    let ids: Vec<String> = state.dataset.ids().map(String::from).collect();
    post(&app, "/alphabets", json!({"name": "S", "labels": [{"name": "a", "color": "#111111"}, {"name": "b", "color": "#222222"}]})).await;
    post(
        &app,
        "/alphabets/S/assign",
        json!({"particles": &ids[..30], "label": "a"}),
    )
    .await;
    let mut body = projection_body(3, 20);
    body["alphabet"] = json!("S");
    let first = post(&app, "/projection", body.clone()).await.json();
    assert_eq!(first["snapshot"]["log"], 2);
    assert_eq!(
        post(&app, "/projection", body.clone()).await.status,
        StatusCode::OK
    );
    post(
        &app,
        "/alphabets/S/assign",
        json!({"particles": &ids[30..40], "label": "b"}),
    )
    .await;
    let second = post(&app, "/projection", body).await;
    assert_eq!(second.status, StatusCode::ACCEPTED);
    assert_eq!(second.json()["snapshot"]["log"], 3);
    let done = state
        .jobs
        .wait(first["id"].as_str().unwrap())
        .await
        .unwrap();
    assert_eq!(done.state, JobState::Done);
    state.jobs.wait(second.json()["id"].as_str().unwrap()).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn layout_filters_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 300, 9, false);
    let (state, app) = open(dir.path(), 1);

    let layout = post(
        &app,
        "/layout",
        json!({"attribute": {"attribute": "Lot Number"}}),
    )
    .await
    .json();
    let columns = layout["columns"].as_array().unwrap();
    assert_eq!(columns.len(), 5);
    assert_eq!(
        columns
            .iter()
            .map(|c| c["count"].as_u64().unwrap())
            .sum::<u64>(),
        300
    );
    assert_eq!(layout["cells"].as_array().unwrap().len(), 300);

    let binned = post(
        &app,
        "/layout",
        json!({"attribute": {"attribute": "Area"}, "target_bins": 4}),
    )
    .await
    .json();
    assert!(binned["bins"]["edges"].is_array());
    let bin = post(
        &app,
        "/layout?format=binary",
        json!({"attribute": {"attribute": "Supplier"}}),
    )
    .await;
    let file = CoordFile::decode(&bin.body).unwrap();
    assert_eq!(file.coordinates.len(), 300);
    let bad = post(
        &app,
        "/layout?format=xml",
        json!({"attribute": {"attribute": "Supplier"}}),
    )
    .await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown = post(
        &app,
        "/layout",
        json!({"attribute": {"attribute": "Colour"}}),
    )
    .await;
    assert_eq!(unknown.status, StatusCode::UNPROCESSABLE_ENTITY);

    let filters = json!([{"key": {"attribute": "Supplier"}, "predicate": {"include": ["A", "B"]}}]);
    let summary = post(&app, "/filters/summary", json!({"filters": filters}))
        .await
        .json();
    let expected = state
        .dataset
        .particles
        .iter()
        .filter(|p| ["A", "B"].contains(&p.category("Supplier").unwrap()))
        .count();
    assert_eq!(summary["included"], expected);
    assert_eq!(summary["total"], 300);
    for s in summary["summaries"].as_array().unwrap() {
        for b in s["bins"].as_array().unwrap() {
            let parts = ["included", "excluded_by_self", "excluded_by_others"]
                .map(|k| b[k].as_u64().unwrap());
            assert_eq!(parts.iter().sum::<u64>(), b["total"].as_u64().unwrap());
        }
    }
    let empty = post(
        &app,
        "/filters/summary",
        json!({"filters": [{"key": {"attribute": "Supplier"}, "predicate": {"include": []}}]}),
    )
    .await;
    assert_eq!(empty.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(empty.json()["details"][0]["path"], "/filters/Supplier");

    let hit = post(
        &app,
        "/selection/hit",
        json!({
            "geometry": {"rectangle": {"x0": -1e9, "y0": -1e9, "x1": 1e9, "y1": 1e9}},
            "source": {"layout": {"attribute": {"attribute": "Lot Number"}}},
            "filters": filters,
        }),
    )
    .await
    .json();
    assert_eq!(hit["count"], expected);

    let stats = post(&app, "/selection/stats", json!({"ids": hit["ids"]}))
        .await
        .json();
    assert_eq!(stats["size"], expected);
    let supplier = stats["facets"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["name"] == "Supplier")
        .unwrap();
    let c = supplier["bins"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["label"] == "C")
        .unwrap();
    assert_eq!(c["count"], 0);
    let unknown = post(&app, "/selection/stats", json!({"ids": ["ghost"]})).await;
    assert_eq!(unknown.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn thumbnails_are_cacheable() {
    let dir = tempfile::tempdir().unwrap();
    write_small(dir.path(), 20, 10, true);
    let (state, app) = open(dir.path(), 1);
    let id = state.dataset.particles[3].id.clone();

    let r = get(&app, &format!("/thumb/{id}")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "image/png");
    assert_eq!(&r.body[1..4], b"PNG");
    let tag = r.headers["etag"].to_str().unwrap().to_string();
    assert!(r.headers["cache-control"]
        .to_str()
        .unwrap()
        .contains("max-age"));

    let cached = send(
        &app,
        Method::GET,
        &format!("/thumb/{id}"),
        None,
        &[("if-none-match", &tag)],
    )
    .await;
    assert_eq!(cached.status, StatusCode::NOT_MODIFIED);
    assert!(cached.body.is_empty());

    let transparent = get(&app, &format!("/thumb/{id}?mode=transparent")).await;
    assert_eq!(transparent.status, StatusCode::OK);
    assert_ne!(transparent.headers["etag"].to_str().unwrap(), tag);
    let img = image::load_from_memory(&transparent.body)
        .unwrap()
        .to_rgba8();
    assert_eq!(img.get_pixel(0, 0)[3], 0, "corner background is keyed out");

    assert_eq!(
        get(&app, "/thumb/ghost").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        get(&app, &format!("/thumb/{id}?mode=sepia")).await.status,
        StatusCode::BAD_REQUEST
    );
}

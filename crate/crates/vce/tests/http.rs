use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use vce::geojson::{detections_to_geojson, world_to_geojson};
use vce::service::{router, SharedStore};
use vce::store::{Clock, ManualClock, Store};
use vce_core::fixtures::{capture_steps, main_street_node, scripted_world, Step, OUTSIDE_NODE};
use vce_core::{Experiment, NodeId, Session, SessionId, TaskConfig};

struct Api {
    app: Router,
    store: SharedStore,
    clock: Arc<ManualClock>,
}

impl Api {
    fn new(store: Store, clock: Arc<ManualClock>) -> Self {
        let store = Arc::new(Mutex::new(store));
        Self { app: router(store.clone()), store, clock }
    }

    fn in_memory() -> Self {
        let clock = Arc::new(ManualClock::new(0.0));
        Self::new(Store::in_memory(clock.clone()), clock)
    }

    /// Sends one request one second after the previous one.
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        self.clock.advance(1.0);
        let builder = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
            None => builder.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn ok(&self, method: &str, uri: &str, body: Option<Value>) -> Value {
        let (status, v) = self.call(method, uri, body).await;
        assert!(status.is_success(), "{method} {uri}: {status} {v}");
        v
    }

    async fn scripted_task(&self, strategy: &str, executions: u32, instances: u32) -> String {
        let body = json!({
            "task": {"strategy": strategy, "num_executions": executions, "num_instances": instances},
            "instructions": "<p>Find the bike racks.</p>",
            "world_geojson": world_to_geojson(&scripted_world()),
        });
        let (status, v) = self.call("POST", "/tasks", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn start(&self, task: &str, worker: &str, node: u32) -> u64 {
        let (status, v) = self
            .call("POST", &format!("/tasks/{task}/sessions"), Some(json!({"worker_id": worker, "start_node": node})))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["session_id"].as_u64().unwrap()
    }

    /// Plays `steps` and returns each step with the time it happened at.
    async fn play(&self, sid: u64, steps: &[Step]) -> Vec<(Step, f64)> {
        let mut done = Vec::new();
        for step in steps {
            match step {
                Step::Move(n) => self.ok("POST", &format!("/sessions/{sid}/move"), Some(json!({"target": n.0}))).await,
                Step::Shoot(h) => {
                    self.ok("POST", &format!("/sessions/{sid}/shots"), Some(json!({"heading": h.degrees()}))).await
                }
                Step::Submit => self.ok("POST", &format!("/sessions/{sid}/submit"), None).await,
            };
            done.push((*step, self.clock.now()));
        }
        done
    }

    fn session(&self, id: u64) -> Session {
        self.store.lock().unwrap().session(SessionId(id)).unwrap().session
    }
}

fn all_sites() -> Vec<Step> {
    (0..5).flat_map(capture_steps).collect()
}

#[tokio::test]
async fn scripted_session_completes_and_matches_library_replay() {
    let api = Api::in_memory();
    let task = api.scripted_task("basic", 3, 5).await;
    let sid = api.start(&task, "alice", 0).await;
    let started_at = api.session(sid).started_at;
    let transcript = api.play(sid, &all_sites()).await;

    let info = api.ok("GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(info["state"], "Completed");
    assert_eq!(info["task_id"], task.as_str());
    assert_eq!(info["detections"].as_array().unwrap().len(), 5);

    let mut exp = Experiment::new(
        Arc::new(scripted_world()),
        TaskConfig { num_executions: 3, num_instances: 5, ..Default::default() },
        None,
    )
    .unwrap();
    exp.reserve_session_ids(SessionId(sid));
    let id = exp.start_session_at("alice".into(), NodeId(0), started_at).unwrap();
    assert_eq!(id, SessionId(sid));
    for (step, t) in &transcript {
        match *step {
            Step::Move(n) => exp.move_to(id, n, *t).map(|_| ()),
            Step::Shoot(h) => exp.take_shot(id, h, *t).map(|_| ()),
            Step::Submit => exp.submit(id, *t).map(|_| ()),
        }
        .unwrap();
    }
    let served = api.session(sid);
    assert_eq!(exp.session(id).unwrap(), &served);
    assert_eq!(detections_to_geojson(&exp.session(id).unwrap().detections), detections_to_geojson(&served.detections));
    let store = api.store.lock().unwrap();
    let log: Vec<_> = store.experiment(&task).unwrap().committed_log().cloned().collect();
    assert_eq!(log, exp.session_log(id).unwrap());

    let task_state = serde_json::to_value(store.task(&task).unwrap()).unwrap();
    assert_eq!(task_state["completed_executions"], 1);
    assert_eq!(task_state["status"], "open");
}

#[tokio::test]
async fn boundary_revert_is_reported() {
    let api = Api::in_memory();
    let task = api.scripted_task("basic", 2, 5).await;
    let sid = api.start(&task, "bob", 20).await;
    let (status, v) = api.call("POST", &format!("/sessions/{sid}/move"), Some(json!({"target": OUTSIDE_NODE.0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["outcome"], "Reverted");
    assert_eq!(v["code"], "OUTSIDE_BOUNDARY");
    assert_eq!(v["to"], 20);
    assert_eq!(v["view"]["node"], 20);
    assert_eq!(v["state"], "Active");
}

#[tokio::test]
async fn shots_can_be_discarded_and_capped() {
    let api = Api::in_memory();
    let task = api.scripted_task("basic", 2, 5).await;
    let sid = api.start(&task, "carol", 0).await;
    let shots = format!("/sessions/{sid}/shots");
    for k in 0..3 {
        let v = api.ok("POST", &shots, Some(json!({"heading": 10.0 * k as f64}))).await;
        assert_eq!(v["pending_shots"], k + 1);
    }
    let (status, v) = api.call("POST", &shots, Some(json!({"heading": 1.0}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("TooManyShots")));

    let v = api.ok("DELETE", &format!("{shots}/1"), None).await;
    assert_eq!(v["pending_shots"], 2);
    let (status, v) = api.call("DELETE", &format!("{shots}/7"), None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("NoSuchShot")));

    let (status, v) = api.call("POST", &format!("/sessions/{sid}/submit"), None).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("WrongShotCount")));
}

#[tokio::test]
async fn error_statuses() {
    let api = Api::in_memory();
    let task = api.scripted_task("basic", 2, 5).await;
    let sid = api.start(&task, "dave", 0).await;

    for (method, uri) in [
        ("GET", "/tasks/t99".to_string()),
        ("GET", "/tasks/t99/map".to_string()),
        ("GET", "/sessions/999".to_string()),
        ("GET", "/sessions/abc/view".to_string()),
        ("GET", "/nowhere".to_string()),
    ] {
        let (status, v) = api.call(method, &uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
    }
    let (status, v) = api.call("POST", "/tasks/t99/sessions", Some(json!({"worker_id": "x"}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownTask")));

    let mv = format!("/sessions/{sid}/move");
    let (status, v) = api.call("POST", &mv, Some(json!({"target": main_street_node(150.0).0 + 100}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (status, v) = api.call("POST", &mv, Some(json!({"target": 25}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("IllegalTarget")));
    let (status, v) = api.call("POST", &mv, Some(json!({"destination": 1}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidBody")));
    let (status, v) = api.call("POST", &format!("/sessions/{sid}/shots"), Some(json!({"heading": "north"}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidBody")));

    let (status, v) = api.call("POST", &format!("/tasks/{task}/sessions"), Some(json!({"worker_id": "dave"}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("WorkerAlreadyParticipated")));

    let v = api.ok("POST", &format!("/sessions/{sid}/abandon"), None).await;
    assert_eq!(v["state"], "Abandoned");
    let (status, v) = api.call("POST", &mv, Some(json!({"target": 1}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("SessionNotActive")));

    let (status, v) = api.call("POST", "/tasks", Some(json!({"task": {"num_executions": 0}}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("InvalidConfig")));
    let (status, _) = api
        .call(
            "POST",
            "/tasks",
            Some(json!({"aoi": {"type": "Polygon", "coordinates": [[[11.0, 46.0], [11.0, 46.0]]]}})),
        )
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = api.call("POST", "/tasks", Some(json!({"world_geojson": {"type": "Point"}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let v = api.ok("POST", &format!("/tasks/{task}/close"), None).await;
    assert_eq!(v["status"], "closed");
    let (status, v) = api.call("POST", &format!("/tasks/{task}/sessions"), Some(json!({"worker_id": "erin"}))).await;
    assert_eq!((status, v["code"].as_str()), (StatusCode::CONFLICT, Some("ExperimentClosed")));
}

#[tokio::test]
async fn taboo_markers_reach_later_workers() {
    let api = Api::in_memory();
    let task = api.scripted_task("taboo", 6, 2).await;
    let two_sites: Vec<Step> = (0..2).flat_map(capture_steps).collect();
    for worker in ["w1", "w2", "w3"] {
        let sid = api.start(&task, worker, 0).await;
        api.play(sid, &two_sites).await;
        assert_eq!(api.ok("GET", &format!("/sessions/{sid}"), None).await["state"], "Completed");
    }

    let map = api.ok("GET", &format!("/tasks/{task}/map"), None).await;
    assert_eq!(map["type"], "FeatureCollection");
    let features = map["features"].as_array().unwrap();
    assert_eq!(features.len(), 2);
    for f in features {
        assert_eq!(f["geometry"]["type"], "Point");
        assert_eq!(f["properties"]["n_detections"], 3);
        assert_eq!(f["properties"]["distinct_workers"], 3);
    }

    let (status, started) =
        api.call("POST", &format!("/tasks/{task}/sessions"), Some(json!({"worker_id": "w4", "start_node": 0}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(started["taboo_markers"].as_array().unwrap().len(), 2);
    assert_eq!(started["instructions"], "<p>Find the bike racks.</p>");
    let sid = started["session_id"].as_u64().unwrap();
    let view = api.ok("GET", &format!("/sessions/{sid}/view"), None).await;
    let poi0 = view["pois"].as_array().unwrap().iter().find(|p| p["id"] == 0).unwrap();
    assert_eq!(poi0["taboo"], true);

    // Shooting the taboo PoI anyway is rejected.
    let steps = capture_steps(0);
    let (last, rest) = steps.split_last().unwrap();
    api.play(sid, rest).await;
    assert_eq!(*last, Step::Submit);
    let v = api.ok("POST", &format!("/sessions/{sid}/submit"), None).await;
    assert_eq!(v["outcome"], "RejectedTaboo");
    assert_eq!(v["detections"], 0);
}

#[tokio::test]
async fn idle_sessions_are_abandoned() {
    let api = Api::in_memory();
    let task = api.scripted_task("basic", 2, 5).await;
    let sid = api.start(&task, "frank", 0).await;
    api.play(sid, &capture_steps(0)).await;
    api.clock.advance(1801.0);
    let v = api.ok("GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(v["state"], "Abandoned");
    assert_eq!(v["detections"].as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0.0));
    let (task, done, partial) = {
        let api = Api::new(Store::open(dir.path(), clock.clone()).unwrap(), clock.clone());
        let task = api.scripted_task("taboo", 4, 5).await;
        let done = api.start(&task, "g1", 0).await;
        api.play(done, &all_sites()).await;
        let partial = api.start(&task, "g2", 0).await;
        api.play(partial, &capture_steps(0)).await;
        api.play(partial, &capture_steps(1)[..4]).await;
        (task, done, partial)
    };

    let api = Api::new(Store::open(dir.path(), clock.clone()).unwrap(), clock.clone());
    assert_eq!(api.ok("GET", &format!("/sessions/{done}"), None).await["state"], "Completed");
    let v = api.ok("GET", &format!("/sessions/{partial}"), None).await;
    assert_eq!(v["state"], "Active");
    assert_eq!(v["detections"].as_array().unwrap().len(), 1);
    assert_eq!(v["pending_shots"].as_array().unwrap().len(), 1);
    api.play(partial, &capture_steps(1)[4..]).await;
    assert_eq!(api.ok("GET", &format!("/sessions/{partial}/view"), None).await["detections"], 2);

    let t = api.ok("GET", &format!("/tasks/{task}"), None).await;
    assert_eq!(t["completed_executions"], 1);
    assert_eq!(t["active_sessions"], 1);
    assert_eq!(t["task"]["strategy"], "taboo");

    let next = api.start(&task, "g3", 0).await;
    assert!(next > partial);
}

#[tokio::test]
async fn generated_world_with_custom_area() {
    let api = Api::in_memory();
    let (status, v) = api
        .call(
            "POST",
            "/tasks",
            Some(json!({
                "task": {"strategy": "taboo"},
                "world": {"grid_rows": 3, "grid_cols": 3, "n_pois": 5, "seed": 4},
                "seed": 9,
            })),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["taboo"]["taboo_threshold"], 3);
    let task = v["id"].as_str().unwrap().to_string();
    let (status, started) = api.call("POST", &format!("/tasks/{task}/sessions"), Some(json!({"worker_id": "h"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(started["view"]["neighbors"].as_array().is_some_and(|n| !n.is_empty()));

    let aoi = json!({
        "type": "Feature",
        "properties": {"name": "block"},
        "geometry": {"type": "Polygon", "coordinates": [[
            [11.1200, 46.0660], [11.1300, 46.0660], [11.1300, 46.0700], [11.1200, 46.0700], [11.1200, 46.0660]
        ]]},
    });
    let (status, v) = api.call("POST", "/tasks", Some(json!({"world": {"n_pois": 5}, "aoi": aoi}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["status"], "open");
}

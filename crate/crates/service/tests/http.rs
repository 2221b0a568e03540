use std::path::PathBuf;

use multimapper_client::Client;
use multimapper_core::api::{CreateSessionRequest, DiagnoseRequest, FixtureRequest};
use multimapper_core::clustering::ClusterParams;
use multimapper_core::complex::{canonical_form, homology_betti};
use multimapper_core::cover::{CoverScheme, CoverSpec};
use multimapper_core::fixtures::Fixture;
use multimapper_core::multimapper::MagnifyRequest;
use multimapper_service::{ServiceConfig, MAX_BODY_BYTES};
use tokio::task::JoinHandle;

struct Server {
    url: String,
    handle: JoinHandle<std::io::Result<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

async fn start(data_dir: &PathBuf) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = tokio::spawn(multimapper_service::serve(listener, ServiceConfig::new(data_dir)));
    Server { url, handle }
}

fn data_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mm-service-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn cover(scheme: CoverScheme, bins_per_axis: usize, g: f64) -> CoverSpec {
    CoverSpec {
        scheme,
        bins_per_axis,
        g,
    }
}

fn fixture_request(name: &str, n: Option<usize>, spec: CoverSpec, cluster: &str) -> CreateSessionRequest {
    CreateSessionRequest {
        points_csv: None,
        fixture: Some(FixtureRequest {
            name: name.into(),
            seed: 7,
            n,
        }),
        lens: "coord:0,1".parse().unwrap(),
        cover: spec,
        cluster: cluster.parse().unwrap(),
        dim_cap: 3,
    }
}

async fn post_raw(url: &str, body: impl Into<reqwest::Body>) -> reqwest::StatusCode {
    reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap()
        .status()
}

#[tokio::test]
async fn create_session_builds_the_circle_loop() {
    let dir = data_dir("create");
    let server = start(&dir).await;
    let client = Client::new(&server.url);
    let created = client
        .create_session(&fixture_request("circle", Some(500), cover(CoverScheme::Brick, 8, 0.25), "single:auto"))
        .await
        .unwrap();
    assert_eq!(homology_betti(&created.complex, None), (1, 1));
    let snapshot = client.session(&created.session_id).await.unwrap();
    assert_eq!(canonical_form(&snapshot.session.complex), canonical_form(&created.complex));
    assert!(snapshot.session.region_log.is_empty());
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let dir = data_dir("invalid");
    let server = start(&dir).await;
    let client = Client::new(&server.url);

    let bad_overlap = fixture_request("circle", Some(200), cover(CoverScheme::Brick, 4, 1.5), "single:auto");
    let err = client.create_session(&bad_overlap).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(400));

    let mut empty = fixture_request("circle", None, cover(CoverScheme::Brick, 4, 0.25), "single:auto");
    empty.fixture = None;
    empty.points_csv = Some(String::new());
    let err = client.create_session(&empty).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(400));

    let status = post_raw(&format!("{}/sessions", server.url), "{not json").await;
    assert_eq!(status.as_u16(), 400);

    let err = client.session("0123abcd").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));
    let err = client.session("../etc").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(404));

    let created = client
        .create_session(&fixture_request("circle", Some(200), cover(CoverScheme::Brick, 4, 0.25), "single:auto"))
        .await
        .unwrap();
    let diag = DiagnoseRequest {
        method: "banana".into(),
        levels: None,
        max_dim: None,
        cluster: None,
    };
    let err = client.diagnose(&created.session_id, &diag).await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(400));
}

#[tokio::test]
async fn oversized_uploads_get_413() {
    let dir = data_dir("limit");
    let server = start(&dir).await;
    let body = vec![b' '; MAX_BODY_BYTES + 1024];
    let status = post_raw(&format!("{}/sessions", server.url), body).await;
    assert_eq!(status.as_u16(), 413);
}

#[tokio::test]
async fn magnify_and_coarsen_update_the_session() {
    let dir = data_dir("magnify");
    let server = start(&dir).await;
    let client = Client::new(&server.url);
    let created = client
        .create_session(&fixture_request("blob_ring", None, cover(CoverScheme::Brick, 6, 0.25), "single:auto"))
        .await
        .unwrap();
    let id = created.session_id;
    let before = canonical_form(&created.complex);

    let unchanged = client
        .magnify(
            &id,
            &MagnifyRequest {
                node_ids: vec![],
                cover: cover(CoverScheme::Brick, 6, 0.25),
                cluster: "single:auto".parse().unwrap(),
            },
        )
        .await
        .unwrap();
    assert_eq!(unchanged.node_delta, 0);
    assert_eq!(canonical_form(&unchanged.complex), before);

    let magnified = client
        .magnify(
            &id,
            &MagnifyRequest {
                node_ids: vec![0, 1, 2],
                cover: cover(CoverScheme::Brick, 8, 0.25),
                cluster: "single:auto".parse().unwrap(),
            },
        )
        .await
        .unwrap();
    assert!(magnified.node_delta > 0, "delta {}", magnified.node_delta);

    let coarsened = client
        .coarsen(
            &id,
            &MagnifyRequest {
                node_ids: (0..magnified.complex.nodes.len()).collect(),
                cover: cover(CoverScheme::Brick, 2, 0.25),
                cluster: ClusterParams::single(1.0),
            },
        )
        .await
        .unwrap();
    assert!(coarsened.node_delta < 0, "delta {}", coarsened.node_delta);

    let snapshot = client.session(&id).await.unwrap();
    assert_eq!(snapshot.session.region_log.len(), 3);
    assert_eq!(canonical_form(&snapshot.session.complex), canonical_form(&coarsened.complex));
}

#[tokio::test]
async fn diagnose_reports_and_records_violations() {
    let dir = data_dir("diagnose");
    let server = start(&dir).await;
    let client = Client::new(&server.url);
    let mut req = fixture_request("circle", Some(500), cover(CoverScheme::Cuboidal, 2, 0.4), "single:threshold=0.2");
    req.lens = "coord:0".parse().unwrap();
    let created = client.create_session(&req).await.unwrap();
    let diag = DiagnoseRequest {
        method: "clustering".into(),
        levels: None,
        max_dim: None,
        cluster: None,
    };
    let response = client.diagnose(&created.session_id, &diag).await.unwrap();
    assert!(response.report.bad);
    assert_eq!(response.report.violations.len(), 1);
    assert_eq!(response.suggestions.len(), 1);
    let snapshot = client.session(&created.session_id).await.unwrap();
    assert_eq!(snapshot.session.report.bad, Some(true));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_refused_not_interleaved() {
    let dir = data_dir("conflict");
    let server = start(&dir).await;
    let client = Client::new(&server.url);
    let created = client
        .create_session(&fixture_request("blob_ring", Some(8000), cover(CoverScheme::Brick, 4, 0.25), "single:auto"))
        .await
        .unwrap();
    let id = created.session_id;
    let all: Vec<usize> = (0..created.complex.nodes.len()).collect();
    let req = MagnifyRequest {
        node_ids: all,
        cover: cover(CoverScheme::Cuboidal, 1, 0.0),
        cluster: ClusterParams::single(0.3),
    };
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let client = client.clone();
            let id = id.clone();
            let req = req.clone();
            tokio::spawn(async move { client.magnify(&id, &req).await })
        })
        .collect();
    let mut ok = 0;
    let mut conflicts = 0;
    for t in tasks {
        match t.await.unwrap() {
            Ok(_) => ok += 1,
            Err(e) => {
                assert_eq!(e.status().map(|s| s.as_u16()), Some(409), "{e}");
                conflicts += 1;
            }
        }
    }
    assert!(ok >= 1 && conflicts >= 1, "ok {ok}, conflicts {conflicts}");
    let snapshot = client.session(&id).await.unwrap();
    assert_eq!(snapshot.session.region_log.len(), ok);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = data_dir("restart");
    let (id, before) = {
        let server = start(&dir).await;
        let client = Client::new(&server.url);
        let points = Fixture::TwoBlob.generate(7, None).to_csv_string();
        let mut req = fixture_request("two_blob", None, cover(CoverScheme::Cuboidal, 5, 0.3), "single:threshold=1.5");
        req.fixture = None;
        req.points_csv = Some(points);
        let created = client.create_session(&req).await.unwrap();
        client
            .magnify(
                &created.session_id,
                &MagnifyRequest {
                    node_ids: vec![0],
                    cover: cover(CoverScheme::Cuboidal, 3, 0.3),
                    cluster: ClusterParams::single(1.0),
                },
            )
            .await
            .unwrap();
        let snapshot = client.session(&created.session_id).await.unwrap();
        (created.session_id, snapshot)
    };
    let server = start(&dir).await;
    let after = Client::new(&server.url).session(&id).await.unwrap();
    assert_eq!(
        serde_json::to_value(&after).unwrap(),
        serde_json::to_value(&before).unwrap()
    );
}

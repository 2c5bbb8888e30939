//! Drives a live listener with hand-written HTTP/1.1 requests.

mod common;

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};

use common::png;
use outcrop_core::imagecore::{decode, FormatHint};
use outcrop_core::texgen::Family;
use outcrop_service::{serve, ServiceConfig};

struct Reply {
    status: u16,
    headers: String,
    body: Vec<u8>,
}

fn exchange(addr: SocketAddr, method: &str, path: &str, content_type: &str, body: &[u8]) -> Reply {
    let mut stream = TcpStream::connect(addr).unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).unwrap();
    stream.write_all(body).unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();

    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .expect("header terminator");
    let headers = String::from_utf8(raw[..split].to_vec()).unwrap();
    let status = headers.split(' ').nth(1).unwrap().parse().unwrap();
    Reply {
        status,
        headers,
        body: raw[split + 4..].to_vec(),
    }
}

fn json(r: &Reply) -> serde_json::Value {
    serde_json::from_slice(&r.body).unwrap()
}

async fn start(root: &std::path::Path) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, ServiceConfig::new(root)));
    addr
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn field_loop_over_the_wire() {
    let root = tempfile::tempdir().unwrap();
    let addr = start(root.path()).await;

    let replies = tokio::task::spawn_blocking(move || {
        let created = exchange(addr, "POST", "/sessions", "application/json", b"");
        assert_eq!(created.status, 201);
        let id = json(&created)["session_id"].as_str().unwrap().to_string();

        let first = exchange(
            addr,
            "POST",
            &format!("/sessions/{id}/images"),
            "image/png",
            &png(Family::Nodules, 1),
        );
        let dup = exchange(
            addr,
            "POST",
            &format!("/sessions/{id}/images"),
            "image/png",
            &png(Family::Nodules, 1),
        );
        let pair = exchange(addr, "GET", &format!("/sessions/{id}/pairs/2"), "text/plain", b"");
        let report = exchange(
            addr,
            "GET",
            &format!("/sessions/{id}/report?threshold=100"),
            "text/plain",
            b"",
        );
        let missing = exchange(addr, "GET", "/sessions/missing/report", "text/plain", b"");
        let bad = exchange(addr, "POST", "/sessions", "application/json", br#"{"threshold":150}"#);
        (first, dup, pair, report, missing, bad)
    })
    .await
    .unwrap();
    let (first, dup, pair, report, missing, bad) = replies;

    assert_eq!(first.status, 200);
    let body = String::from_utf8(first.body.clone()).unwrap();
    assert!(
        body.contains(r#""verdict":"novel","score":0.0000,"best_match_id":null"#),
        "{body}"
    );

    assert_eq!(dup.status, 200);
    let v = json(&dup);
    assert_eq!(
        (v["verdict"].as_str(), v["score"].as_f64(), v["best_match_id"].as_u64()),
        (Some("similar"), Some(100.0), Some(1))
    );

    assert_eq!(pair.status, 200);
    assert!(pair.headers.to_ascii_lowercase().contains("content-type: image/png"));
    assert_eq!(decode(&pair.body, FormatHint::Png).unwrap().dims(), (128, 64));

    assert_eq!(report.status, 200);
    let r = json(&report);
    assert_eq!(r["counts"]["similar"], 1);
    assert_eq!(r["counts"]["novel"], 1);

    assert_eq!(missing.status, 404);
    assert_eq!(bad.status, 400);
}

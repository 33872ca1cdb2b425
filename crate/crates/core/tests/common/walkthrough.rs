//! Headless walkthrough over HTTP: log in, stream a session, find the frames
//! in the screenome, annotate one, compile it and stream again with the mask
//! applied. Every streamed frame is compared pixel for pixel against an
//! expectation built from scene ground truth.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use reqwest::blocking::Client;
use serde_json::{json, Value};
use screenome::scene::{gen_scene, ElementKind, Platform, SceneTruth};
use screenome::service::http;
use screenome::service::{Engine, EngineConfig};
use screenome::store::{ManualClock, Store};
use screenome::{BBox, Color, Frame};

pub const DWELL_MS: u64 = 3000;

/// Region fill with the modal color, ties to the smallest RGB triple.
pub fn mode_fill(frame: &Frame, region: &BBox) -> Frame {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            *counts.entry(frame.get(x, y).to_array()).or_default() += 1;
        }
    }
    let best = counts.values().copied().max().unwrap();
    let color = counts.into_iter().filter(|(_, n)| *n == best).map(|(c, _)| c).min().unwrap();
    let mut out = frame.clone();
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            out.set(x, y, Color::new(color[0], color[1], color[2]));
        }
    }
    out
}

pub fn expected_occlusion(scene: &Frame, truth: &SceneTruth, kind: ElementKind) -> Frame {
    truth
        .placements
        .iter()
        .filter(|p| p.kind == kind)
        .fold(scene.clone(), |acc, p| mode_fill(&acc, &p.bbox))
}

fn differing(a: &Frame, b: &Frame) -> usize {
    if a.dimensions() != b.dimensions() {
        return usize::MAX;
    }
    a.pixels().chunks(3).zip(b.pixels().chunks(3)).filter(|(x, y)| x != y).count()
}

/// The first pair of consecutive seeds whose scenes share an element kind
/// that appears at scale 1.0 in the first one.
pub fn pick_feed() -> ([u64; 2], ElementKind) {
    (0u64..)
        .find_map(|s| {
            let (_, a) = gen_scene(Platform::Android, s, 640, 360).unwrap();
            let (_, b) = gen_scene(Platform::Android, s + 1, 640, 360).unwrap();
            ElementKind::ALL
                .into_iter()
                .find(|k| {
                    a.placements.iter().any(|p| p.kind == *k && p.scale == 1.0)
                        && b.placements.iter().any(|p| p.kind == *k)
                })
                .map(|k| ([s, s + 1], k))
        })
        .unwrap()
}

pub struct Report {
    pub kind: ElementKind,
    pub stored_frames: usize,
    pub occluded_scenes: usize,
}

struct Api {
    client: Client,
    server: http::ServerHandle,
    token: String,
}

impl Api {
    fn call(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> Result<reqwest::blocking::Response, String> {
        let mut req = self.client.request(method, self.server.url(path)).bearer_auth(&self.token);
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            let status = resp.status();
            return Err(format!("{path}: {status} {}", resp.text().unwrap_or_default()));
        }
        Ok(resp)
    }

    fn json(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> Result<Value, String> {
        self.call(method, path, body)?.json().map_err(|e| e.to_string())
    }

    fn frame(&self, session: &str) -> Result<Frame, String> {
        let bytes = self.call(reqwest::Method::GET, &format!("/sessions/{session}/frame"), None)?.bytes().map_err(|e| e.to_string())?;
        Frame::decode_png(&bytes).map_err(|e| e.to_string())
    }
}

pub fn run() -> Result<Report, String> {
    use reqwest::Method;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clock = Arc::new(ManualClock::new(50_000));
    let store = Arc::new(Store::open_with_clock(dir.path(), clock.clone()).map_err(|e| e.to_string())?);
    let engine = Arc::new(Engine::new(store.clone(), EngineConfig::default()));
    let (seeds, kind) = pick_feed();
    engine.register_demo_devices(&seeds, DWELL_MS, clock.clone()).map_err(|e| e.to_string())?;
    store
        .create_user("walker", "correct horse", &["android"], "community")
        .map_err(|e| e.to_string())?;
    let scenes: Vec<(Frame, SceneTruth)> = seeds
        .iter()
        .map(|&s| gen_scene(Platform::Android, s, 640, 360).unwrap())
        .collect();
    let source = scenes[0].1.placements.iter().find(|p| p.kind == kind && p.scale == 1.0).unwrap().bbox;

    let server = http::spawn(engine, dir.path().join("ui"), SocketAddr::from(([127, 0, 0, 1], 0))).map_err(|e| e.to_string())?;
    let client = Client::new();
    let login: Value = client
        .post(server.url("/auth/login"))
        .json(&json!({ "username": "walker", "password": "correct horse" }))
        .send()
        .and_then(|r| r.error_for_status())
        .and_then(|r| r.json())
        .map_err(|e| format!("login: {e}"))?;
    let token = login["token"].as_str().ok_or("login returned no token")?.to_string();
    let api = Api { client, server, token };

    let devices = api.json(Method::GET, "/devices", None)?;
    if devices != json!(["android"]) {
        return Err(format!("devices: {devices}"));
    }

    // Plain session: the stream is the capture and every frame is stored.
    let plain = api.json(Method::POST, "/sessions", Some(json!({ "device": "android", "fps": 30, "capture_every": 1 })))?;
    let plain_id = plain["id"].as_str().ok_or("session without id")?.to_string();
    for _ in 0..3 {
        let got = api.frame(&plain_id)?;
        let n = differing(&got, &scenes[0].0);
        if n != 0 {
            return Err(format!("plain stream differs from capture in {n} pixels"));
        }
    }
    let entries = api.json(Method::GET, "/screenome?device=android", None)?;
    let entries = entries.as_array().ok_or("screenome listing is not an array")?;
    if entries.len() != 3 {
        return Err(format!("expected 3 stored frames, found {}", entries.len()));
    }
    let seq = entries[0]["seq"].as_u64().ok_or("entry without seq")?;
    let stored = api.call(Method::GET, &format!("/screenome/{seq}.png"), None)?.bytes().map_err(|e| e.to_string())?;
    let stored = Frame::decode_png(&stored).map_err(|e| e.to_string())?;
    if differing(&stored, &scenes[0].0) != 0 {
        return Err("stored frame differs from the capture".into());
    }

    // Annotate and compile through the API.
    let label = format!("mask-{}", kind.name().replace('_', "-"));
    let ann = api.json(
        Method::POST,
        "/annotations",
        Some(json!({ "entry_seq": seq, "bbox": { "x": source.x, "y": source.y, "w": source.w, "h": source.h }, "label": label })),
    )?;
    let ann_id = ann["id"].as_u64().ok_or("annotation without id")?;
    let spec = api.json(Method::POST, &format!("/annotations/{ann_id}/compile"), Some(json!({})))?;
    let spec_id = spec["id"].as_str().ok_or("spec without id")?.to_string();
    let listed = api.json(Method::GET, "/interventions", None)?;
    if !listed.as_array().is_some_and(|a| a.iter().any(|s| s["id"] == spec_id.as_str())) {
        return Err(format!("{spec_id} missing from /interventions"));
    }

    // Masked session over both scenes of the feed.
    let masked = api.json(Method::POST, "/sessions", Some(json!({ "device": "android", "interventions": [spec_id] })))?;
    let masked_id = masked["id"].as_str().ok_or("session without id")?.to_string();
    let mut occluded_scenes = 0;
    for (i, (scene, truth)) in scenes.iter().enumerate() {
        let got = api.frame(&masked_id)?;
        let want = expected_occlusion(scene, truth, kind);
        let n = differing(&got, &want);
        if n != 0 {
            return Err(format!("scene {i}: masked stream differs from ground truth in {n} pixels"));
        }
        occluded_scenes += 1;
        clock.advance(DWELL_MS);
    }
    Ok(Report {
        kind,
        stored_frames: entries.len(),
        occluded_scenes,
    })
}

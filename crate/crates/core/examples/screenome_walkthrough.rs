//! End to end over HTTP against an in-process server: log in, stream a few
//! frames, browse the screenome, annotate a stored frame, compile the mask and
//! stream again with it applied. Frames are written to the output directory.
//!
//! cargo run --release --example screenome_walkthrough -- [out_dir]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use reqwest::blocking::Client;
use serde_json::{json, Value};
use screenome::scene::{gen_scene, Platform};
use screenome::service::{http, Engine, EngineConfig};
use screenome::store::{ManualClock, Store};
use screenome::Frame;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> Res<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "walkthrough".into()));
    std::fs::create_dir_all(&out)?;
    let data = tempfile::tempdir()?;

    let clock = Arc::new(ManualClock::new(1_000));
    let store = Arc::new(Store::open_with_clock(data.path(), clock.clone())?);
    let engine = Arc::new(Engine::new(store.clone(), EngineConfig::default()));
    engine.register_demo_devices(&[0], 3000, clock)?;
    store.create_user("demo", "demo", &["android"], "home")?;
    let server = http::spawn(engine, out.join("ui"), SocketAddr::from(([127, 0, 0, 1], 0)))?;
    println!("server at {}", server.url(""));

    let client = Client::new();
    let login: Value = client
        .post(server.url("/auth/login"))
        .json(&json!({ "username": "demo", "password": "demo" }))
        .send()?
        .error_for_status()?
        .json()?;
    let token = login["token"].as_str().ok_or("no token")?.to_string();
    let post = |path: &str, body: Value| -> Res<Value> {
        Ok(client.post(server.url(path)).bearer_auth(&token).json(&body).send()?.error_for_status()?.json()?)
    };
    let get = |path: &str| -> Res<reqwest::blocking::Response> {
        Ok(client.get(server.url(path)).bearer_auth(&token).send()?.error_for_status()?)
    };

    let plain = post("/sessions", json!({ "device": "android", "capture_every": 1 }))?;
    let plain_id = plain["id"].as_str().ok_or("no session id")?;
    for i in 0..2 {
        let png = get(&format!("/sessions/{plain_id}/frame"))?.bytes()?;
        std::fs::write(out.join(format!("plain-{i}.png")), &png)?;
    }
    let entries: Value = get("/screenome?device=android")?.json()?;
    println!("screenome holds {} frames", entries.as_array().map_or(0, |a| a.len()));
    let seq = entries[0]["seq"].as_u64().ok_or("no entries")?;

    // Annotate the first native-size element the generator drew.
    let (_, truth) = gen_scene(Platform::Android, 0, 640, 360)?;
    let target = truth.placements.iter().find(|p| p.scale == 1.0).ok_or("no native-size element")?;
    let b = target.bbox;
    let label = format!("mask-{}", target.kind.name().replace('_', "-"));
    let ann = post("/annotations", json!({ "entry_seq": seq, "bbox": { "x": b.x, "y": b.y, "w": b.w, "h": b.h }, "label": label }))?;
    let spec = post(&format!("/annotations/{}/compile", ann["id"]), json!({}))?;
    println!("compiled {} from {label}", spec["id"]);

    let masked = post("/sessions", json!({ "device": "android", "interventions": [spec["id"]] }))?;
    let png = get(&format!("/sessions/{}/frame", masked["id"].as_str().ok_or("no session id")?))?.bytes()?;
    let frame = Frame::decode_png(&png)?;
    frame.save_png(out.join("masked.png"))?;
    println!("masked frame {}x{} written to {}", frame.width(), frame.height(), out.display());
    Ok(())
}

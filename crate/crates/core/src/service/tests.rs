use std::sync::Arc;

use super::*;
use crate::frame::{BBox, Color, Frame};
use crate::scene::{gen_scene, ElementKind, Platform, SceneTruth};
use crate::store::{ManualClock, Share, Store};
use crate::vision::InterventionFn;

struct Fixture {
    _dir: tempfile::TempDir,
    engine: Engine,
    clock: Arc<ManualClock>,
    token: String,
    truth: SceneTruth,
    scene: Frame,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(10_000));
    let store = Arc::new(Store::open_with_clock(dir.path(), clock.clone()).unwrap());
    let engine = Engine::new(store.clone(), EngineConfig::default());
    let (scene, truth) = gen_scene(Platform::Android, 7, 640, 360).unwrap();
    let (s, c) = (scene.clone(), clock.clone());
    engine.register_device("phone", move || {
        let script = ScriptedScene::new(640, 360, Composition::from_frame(s.clone()))
            .then(Trigger::Click(BBox::new(0, 0, 10, 10)), Composition::solid(Color::WHITE));
        Ok(Box::new(scripted_backend(script, c.clone())?) as Box<dyn DeviceBackend>)
    });
    store.create_user("alice", "pw", &["phone", "tablet"], "net").unwrap();
    let token = store.authenticate("alice", "pw").unwrap();
    Fixture {
        _dir: dir,
        engine,
        clock,
        token,
        truth,
        scene,
    }
}

fn mask_spec(fx: &Fixture, kind: ElementKind, name: &str) -> (String, BBox) {
    let store = fx.engine.store();
    let placement = fx.truth.placements.iter().find(|p| p.kind == kind).unwrap();
    let entry = store.append_frame(&fx.token, "phone", &fx.scene).unwrap();
    let ann = store
        .save_annotation(&fx.token, entry.seq, placement.bbox, &format!("mask-{name}"))
        .unwrap();
    (store.compile(&fx.token, ann.id, Share::Network).unwrap().id, placement.bbox)
}

#[test]
fn latency_reproduces_reference_figures() {
    let bits = 1.0 * 1024.0 * 8.0;
    let one_way = theoretical_latency(bits, 250e6, 0.0, 1).unwrap();
    assert!((one_way - 0.033).abs() <= 0.0005, "{one_way}");
    let vision = theoretical_latency(bits, 250e6, 5.0, 1).unwrap();
    assert_eq!(format!("{vision:.2}"), "5.03");
    let terminator = theoretical_latency(bits, 250e6, 5.0, 2).unwrap();
    assert!((terminator - 5.066).abs() <= 0.0005, "{terminator}");
    assert!(matches!(theoretical_latency(bits, 0.0, 5.0, 1), Err(crate::Error::DivisionByZero)));
    assert!(theoretical_latency(-1.0, 1.0, 0.0, 1).is_err());
}

#[test]
fn identity_chain_streams_the_capture() {
    let fx = fixture();
    let info = fx.engine.create_session(&fx.token, "phone", &[], SessionConfig::default()).unwrap();
    assert_eq!((info.width, info.height), (640, 360));
    let png = fx.engine.next_frame(&fx.token, &info.id).unwrap();
    assert_eq!(Frame::decode_png(&png).unwrap().pixels(), fx.scene.pixels());
}

#[test]
fn registered_mask_is_inpainted_in_the_stream() {
    let fx = fixture();
    let (id, bbox) = mask_spec(&fx, ElementKind::ShareButton, "share");
    let info = fx
        .engine
        .create_session(&fx.token, "phone", &[id], SessionConfig::default())
        .unwrap();
    let frame = fx.engine.render(&fx.token, &info.id).unwrap();
    assert_eq!(frame.captured.pixels(), fx.scene.pixels());
    let region = frame.output.crop(&bbox).unwrap();
    let fill = region.get(0, 0);
    assert!(region.pixels().chunks_exact(3).all(|p| p == fill.to_array()));
    let chain = [crate::mask::occlusion_intervention(
        fx.engine.store().load_mask(&fx.engine.store().spec_for("alice", "mask:alice:share").unwrap()).unwrap(),
        EngineConfig::default().matching,
    )];
    assert_eq!(
        frame.output.pixels(),
        crate::vision::apply_interventions(&frame.captured, &chain).unwrap().pixels()
    );
}

#[test]
fn screenome_stores_first_and_every_kth_rendered_frame() {
    let fx = fixture();
    let cfg = SessionConfig { fps: 60, capture_every: 3 };
    let info = fx.engine.create_session(&fx.token, "phone", &[], cfg).unwrap();
    let stored: Vec<Option<u64>> = (0..7).map(|_| fx.engine.render(&fx.token, &info.id).unwrap().stored_seq).collect();
    assert_eq!(stored, vec![Some(1), None, None, Some(2), None, None, Some(3)]);
}

#[test]
fn capture_failure_stalls_once() {
    let fx = fixture();
    let slot: Arc<std::sync::Mutex<Option<Arc<std::sync::atomic::AtomicBool>>>> = Arc::default();
    let (sl, c) = (slot.clone(), fx.clock.clone());
    fx.engine.register_device("tablet", move || {
        let b = scripted_backend(ScriptedScene::new(32, 32, Composition::solid(Color::RED)), c.clone())?;
        *sl.lock().unwrap() = Some(b.failure_switch());
        Ok(Box::new(b) as Box<dyn DeviceBackend>)
    });
    let info = fx.engine.create_session(&fx.token, "tablet", &[], SessionConfig::default()).unwrap();
    let switch = slot.lock().unwrap().clone().unwrap();
    switch.store(true, std::sync::atomic::Ordering::SeqCst);
    assert!(matches!(fx.engine.next_frame(&fx.token, &info.id), Err(crate::Error::StreamStall(_))));
    assert!(fx.engine.next_frame(&fx.token, &info.id).is_ok());
}

#[test]
fn contract_violation_passes_frame_through() {
    let fx = fixture();
    fx.engine.register_plugin(
        "shrink",
        InterventionFn::new("shrink", |f: &Frame| f.crop(&BBox::new(0, 0, 1, 1)).unwrap()),
    );
    let spec = fx.engine.store().register_plugin(&fx.token, "shrink", Share::Private).unwrap();
    let info = fx
        .engine
        .create_session(&fx.token, "phone", &[spec.id], SessionConfig::default())
        .unwrap();
    let out = fx.engine.render(&fx.token, &info.id).unwrap();
    assert_eq!(out.output.pixels(), fx.scene.pixels());
    let session = fx.engine.session(&fx.token, &info.id).unwrap();
    let diags = session.lock().unwrap().diagnostics().to_vec();
    assert_eq!(diags.len(), 1);
    assert!(diags[0].message.contains("shrink"));
}

#[test]
fn rejected_input_has_no_effect() {
    let fx = fixture();
    let info = fx.engine.create_session(&fx.token, "phone", &[], SessionConfig::default()).unwrap();
    let before = fx.engine.next_frame(&fx.token, &info.id).unwrap();
    let outside = InputEvent::pointer(InputKind::PointerDown, 640, 360);
    assert!(matches!(fx.engine.send_input(&fx.token, &info.id, &outside), Err(crate::Error::Bounds { .. })));
    assert_eq!(fx.engine.next_frame(&fx.token, &info.id).unwrap(), before);
    let inside = InputEvent::pointer(InputKind::PointerDown, 0, 0);
    assert_eq!(fx.engine.send_input(&fx.token, &info.id, &inside).unwrap().scene, 1);
    assert_ne!(fx.engine.next_frame(&fx.token, &info.id).unwrap(), before);
}

#[test]
fn session_creation_checks_devices_and_visibility() {
    let fx = fixture();
    let store = fx.engine.store();
    let e = |r: crate::Result<SessionInfo>| r.unwrap_err();
    assert!(matches!(e(fx.engine.create_session(&fx.token, "laptop", &[], SessionConfig::default())), crate::Error::NotFound(_)));
    assert!(matches!(e(fx.engine.create_session(&fx.token, "tablet", &[], SessionConfig::default())), crate::Error::NotFound(_)));

    store.create_user("mallory", "pw", &["phone"], "other").unwrap();
    let m = store.authenticate("mallory", "pw").unwrap();
    let (id, _) = mask_spec(&fx, ElementKind::LikeMetric, "likes");
    assert!(matches!(e(fx.engine.create_session(&m, "phone", std::slice::from_ref(&id), SessionConfig::default())), crate::Error::AccessDenied));

    let info = fx.engine.create_session(&fx.token, "phone", &[id], SessionConfig::default()).unwrap();
    assert!(matches!(fx.engine.next_frame(&m, &info.id), Err(crate::Error::AccessDenied)));

    let entry = store.append_frame(&fx.token, "phone", &fx.scene).unwrap();
    let ann = store.save_annotation(&fx.token, entry.seq, BBox::new(0, 0, 40, 40), "image-x").unwrap();
    let stub = store.compile(&fx.token, ann.id, Share::Network).unwrap();
    assert!(matches!(e(fx.engine.create_session(&fx.token, "phone", &[stub.id], SessionConfig::default())), crate::Error::NotImplemented));
}

#[test]
fn chain_order_follows_request() {
    let fx = fixture();
    let store = fx.engine.store();
    for (name, color) in [("paint-red", Color::RED), ("paint-white", Color::WHITE)] {
        fx.engine.register_plugin(
            name,
            InterventionFn::new(name, move |f: &Frame| crate::vision::inpaint(f, &BBox::new(0, 0, 4, 4), Some(color)).unwrap()),
        );
        store.register_plugin(&fx.token, name, Share::Private).unwrap();
    }
    let ids = |a: &str, b: &str| vec![format!("plugin:alice:{a}"), format!("plugin:alice:{b}")];
    let s1 = fx.engine.create_session(&fx.token, "phone", &ids("paint-red", "paint-white"), SessionConfig::default()).unwrap();
    let s2 = fx.engine.create_session(&fx.token, "phone", &ids("paint-white", "paint-red"), SessionConfig::default()).unwrap();
    assert_eq!(fx.engine.render(&fx.token, &s1.id).unwrap().output.get(1, 1), Color::WHITE);
    assert_eq!(fx.engine.render(&fx.token, &s2.id).unwrap().output.get(1, 1), Color::RED);
}

#[test]
fn stale_specs_are_recompiled() {
    let fx = fixture();
    let store = fx.engine.store();
    let first = fx.truth.placements[0].bbox;
    let second = fx.truth.placements.iter().find(|p| p.kind != fx.truth.placements[0].kind).unwrap().bbox;
    let entry = store.append_frame(&fx.token, "phone", &fx.scene).unwrap();
    let ann = store.save_annotation(&fx.token, entry.seq, first, "mask-x").unwrap();
    let spec = store.compile(&fx.token, ann.id, Share::Network).unwrap();
    let info = fx
        .engine
        .create_session(&fx.token, "phone", std::slice::from_ref(&spec.id), SessionConfig::default())
        .unwrap();
    let untouched = |out: &Frame, b: &BBox| out.crop(b).unwrap().pixels() == fx.scene.crop(b).unwrap().pixels();
    let out = fx.engine.render(&fx.token, &info.id).unwrap().output;
    assert!(!untouched(&out, &first) && untouched(&out, &second));

    let ann = store.save_annotation(&fx.token, entry.seq, second, "mask-x").unwrap();
    assert_eq!(store.compile(&fx.token, ann.id, Share::Network).unwrap().version, spec.version + 1);
    let out = fx.engine.render(&fx.token, &info.id).unwrap().output;
    assert!(untouched(&out, &first) && !untouched(&out, &second));
}

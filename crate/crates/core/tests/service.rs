use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use screenome::font::GlyphFont;
use screenome::mask::occlusion_intervention;
use screenome::scene::{gen_scene, ElementKind, Platform};
use screenome::service::{
    scripted_backend, theoretical_latency, DeviceBackend, Engine, EngineConfig, ScriptedScene, SessionConfig,
};
use screenome::store::{InterventionSpec, ManualClock, Share, SpecKind, Store};
use screenome::text::{censor_intervention, ReferenceDetector, ReferenceRecognizer};
use screenome::vision::{apply_interventions, InterventionFn};

proptest! {
    #[test]
    fn latency_is_affine_in_every_input(
        kb in 0.0f64..1e4,
        mbps in 1.0f64..1e4,
        inference in 0.0f64..100.0,
        hops in 1u32..4,
    ) {
        let bits = kb * 1024.0 * 8.0;
        let bw = mbps * 1e6;
        let got = theoretical_latency(bits, bw, inference, hops).unwrap();
        let by_hand = hops as f64 * bits / bw * 1000.0 + inference;
        prop_assert!((got - by_hand).abs() <= 1e-9 * by_hand.max(1.0));

        let doubled = theoretical_latency(2.0 * bits, bw, inference, hops).unwrap();
        let base = theoretical_latency(0.0, bw, inference, hops).unwrap();
        prop_assert!(((doubled - base) - 2.0 * (got - base)).abs() <= 1e-9 * doubled.max(1.0));
        prop_assert!(theoretical_latency(bits, bw, inference, hops + 1).unwrap() >= got);
    }
}

struct World {
    _dir: tempfile::TempDir,
    engine: Engine,
    token: String,
    specs: Vec<InterventionSpec>,
}

/// One user with a mobile mask, a desktop mask and a text model compiled
/// from generated scenes.
fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(7_000));
        let store = Arc::new(Store::open_with_clock(dir.path(), clock).unwrap());
        store.create_user("pat", "pw", &[], "n").unwrap();
        let token = store.authenticate("pat", "pw").unwrap();
        let mut specs = Vec::new();
        for (platform, kind) in [(Platform::Ios, ElementKind::LikeMetric), (Platform::Macos, ElementKind::ShareButton)] {
            let (seed, frame, bbox) = (0u64..)
                .find_map(|s| {
                    let (f, t) = gen_scene(platform, s, 640, 360).unwrap();
                    let p = t.placements.iter().find(|p| p.kind == kind && p.scale == 1.0)?;
                    Some((s, f, p.bbox))
                })
                .unwrap();
            store.add_device("pat", &format!("{}-{seed}", platform.name())).unwrap();
            let entry = store.append_frame(&token, &format!("{}-{seed}", platform.name()), &frame).unwrap();
            let ann = store.save_annotation(&token, entry.seq, bbox, &format!("mask-{}", kind.name().replace('_', "-"))).unwrap();
            specs.push(store.compile(&token, ann.id, Share::Network).unwrap());
        }
        let (frame, truth) = gen_scene(Platform::Android, 2, 640, 360).unwrap();
        store.add_device("pat", "android-2").unwrap();
        let entry = store.append_frame(&token, "android-2", &frame).unwrap();
        for line in truth.texts.iter().filter(|t| t.label == screenome::learn::Label::Positive).take(2) {
            let pad = line.bbox;
            let ann = store.save_annotation(&token, entry.seq, pad, "text-spam").unwrap();
            store.compile(&token, ann.id, Share::Network).unwrap();
        }
        specs.push(store.visible_specs("pat").unwrap().into_iter().find(|s| s.kind == SpecKind::TextModel).unwrap());
        let engine = Engine::new(store, EngineConfig::default());
        World {
            _dir: dir,
            engine,
            token,
            specs,
        }
    })
}

/// The chain rebuilt from the stored artifacts without going through the
/// engine.
fn independent_chain(w: &World, order: &[usize]) -> Vec<InterventionFn> {
    let store = w.engine.store();
    order
        .iter()
        .map(|&i| {
            let spec = &w.specs[i];
            match spec.kind {
                SpecKind::Mask => occlusion_intervention(store.load_mask(spec).unwrap(), w.engine.config().matching.clone()),
                _ => censor_intervention(
                    Arc::new(ReferenceDetector::default()),
                    Arc::new(ReferenceRecognizer::new(GlyphFont::standard().clone())),
                    Arc::new(store.load_text_model(spec).unwrap()),
                    w.engine.config().censor_threshold,
                    None,
                ),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn streamed_frame_is_the_chain_applied_to_the_capture(
        platform in prop::sample::select(Platform::ALL.to_vec()),
        seed in 0u64..40,
        order in Just(vec![0usize, 1, 2]).prop_shuffle(),
        len in 0usize..=3,
    ) {
        let w = world();
        let device = format!("probe-{}-{seed}", platform.name());
        let script = ScriptedScene::feed(platform, &[seed], 1000, 640, 360).unwrap();
        let clock = Arc::new(ManualClock::new(0));
        w.engine.register_device(&device, move || {
            Ok(Box::new(scripted_backend(script.clone(), clock.clone())?) as Box<dyn DeviceBackend>)
        });
        let _ = w.engine.store().add_device("pat", &device);

        let order = &order[..len];
        let ids: Vec<String> = order.iter().map(|&i| w.specs[i].id.clone()).collect();
        let info = w.engine.create_session(&w.token, &device, &ids, SessionConfig::default()).unwrap();
        let rendered = w.engine.render(&w.token, &info.id).unwrap();
        let (scene, _) = gen_scene(platform, seed, 640, 360).unwrap();
        prop_assert_eq!(rendered.captured.pixels(), scene.pixels());
        let expected = apply_interventions(&scene, &independent_chain(w, order)).unwrap();
        prop_assert!(rendered.output.pixels() == expected.pixels(), "chain {:?} on {} seed {}", ids, platform.name(), seed);
        w.engine.close_session(&w.token, &info.id).unwrap();
    }
}

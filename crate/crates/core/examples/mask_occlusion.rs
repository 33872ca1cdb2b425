//! Crops one element from a generated scene, turns it into a mask and
//! occludes every match in a second scene of the same family.
//!
//! cargo run --release --example mask_occlusion -- [out_dir]

use std::path::PathBuf;

use screenome::mask::{match_template, occlusion_intervention, MaskTemplate, MatchConfig};
use screenome::scene::{gen_scene, Platform};
use screenome::vision::apply_interventions;

fn main() -> screenome::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "occlusion".into()));
    std::fs::create_dir_all(&out)?;

    // First Android seed with an element drawn at native size.
    let (source, placement) = (0u64..)
        .find_map(|s| {
            let (frame, truth) = gen_scene(Platform::Android, s, 640, 360).ok()?;
            let p = truth.placements.into_iter().find(|p| p.scale == 1.0)?;
            Some((frame, p))
        })
        .expect("some scene has a native-size element");
    let mask = MaskTemplate::new(placement.kind.name().replace('_', "-"), source.crop(&placement.bbox)?, false)?;
    println!("mask {} from {:?}", mask.name, placement.bbox);

    let cfg = MatchConfig::default();
    let (target, truth) = (1u64..)
        .filter_map(|s| gen_scene(Platform::Ios, s, 640, 360).ok())
        .find(|(_, t)| t.placements.iter().any(|p| p.kind == placement.kind))
        .expect("some iOS scene shows the same kind");
    let expected: Vec<_> = truth.placements.iter().filter(|p| p.kind == placement.kind).map(|p| p.bbox).collect();
    let found = match_template(&target, &mask, &cfg)?;
    for m in &found {
        println!("match {:?} scale {:.2} score {:.3}", m.bbox, m.scale, m.score);
    }
    println!("{} matches, {} placements of that kind in the target", found.len(), expected.len());

    let occluded = apply_interventions(&target, &[occlusion_intervention(mask, cfg)])?;
    target.save_png(out.join("before.png"))?;
    occluded.save_png(out.join("after.png"))?;
    println!("wrote {}/before.png and after.png", out.display());
    Ok(())
}

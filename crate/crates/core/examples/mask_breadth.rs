//! Mask breadth matrix: one annotated mask per device family and element
//! kind, evaluated on every scene of both families.
//!
//! cargo run --release --example mask_breadth -- --seeds 5

use clap::Parser;
use screenome::mask::{MaskTemplate, MatchConfig};
use screenome::scene::{annotation_source, corpus_matrix, evaluate_mask, ElementKind, Family, SceneParams};
use std::time::Instant;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Match on edge maps instead of colors.
    #[arg(long)]
    contour: bool,
    #[arg(long)]
    coarse: bool,
}

fn main() -> screenome::Result<()> {
    let args = Args::parse();
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let params = SceneParams::default();
    let cfg = MatchConfig {
        coarse_to_fine: args.coarse,
        ..MatchConfig::default()
    };
    let started = Instant::now();

    println!("{:<20} {:<8} {:>16} {:>16}", "element", "mask", "mobile scenes", "desktop scenes");
    for kind in ElementKind::ALL {
        for mask_family in Family::ALL {
            let (own, _) = corpus_matrix(&seeds, &mask_family.platforms(), &params)?;
            let (scene, placement) = annotation_source(&own, kind).expect("corpus places every kind at 1.0");
            let crop = scene.frame.crop(&placement.bbox)?;
            let mask = MaskTemplate::new(kind.name().replace('_', "-"), crop, args.contour)?;
            let mut cells = Vec::new();
            for scene_family in Family::ALL {
                let (scenes, _) = corpus_matrix(&seeds, &scene_family.platforms(), &params)?;
                let cell = evaluate_mask(&mask, kind, mask_family, &scenes, &cfg)?;
                cells.push(format!(
                    "{} P{:.2} R{:.2}",
                    if cell.perfect() { "pass" } else { "FAIL" },
                    cell.precision(),
                    cell.recall()
                ));
            }
            println!("{:<20} {:<8} {:>16} {:>16}", kind.name(), mask_family.name(), cells[0], cells[1]);
        }
    }
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

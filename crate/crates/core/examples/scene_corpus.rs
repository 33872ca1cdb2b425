//! Writes a small labeled corpus and prints what each scene contains.
//!
//! cargo run --example scene_corpus -- [out_dir]

use std::path::PathBuf;

use screenome::scene::{corpus_matrix, read_manifest, write_corpus, Platform, SceneParams};

fn main() -> screenome::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    let (scenes, manifest) = corpus_matrix(&[0, 1], &Platform::ALL, &SceneParams::default())?;
    write_corpus(&out, &scenes, &manifest)?;
    for scene in &scenes {
        let kinds: Vec<String> = scene
            .truth
            .placements
            .iter()
            .map(|p| format!("{}@{:.2}", p.kind.name(), p.scale))
            .collect();
        println!("{:<8} seed {}  {} text lines  {}", scene.platform.name(), scene.seed, scene.truth.texts.len(), kinds.join(" "));
    }
    let reread = read_manifest(&out)?;
    println!("{} scenes written to {}", reread.scenes.len(), out.display());
    Ok(())
}

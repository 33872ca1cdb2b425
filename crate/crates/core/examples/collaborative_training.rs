//! Simulates groups of users contributing sentences to one shared text
//! model and reports how quickly each group reaches the all-data baseline.
//!
//! cargo run --example collaborative_training [-- --seeds 5]

use std::sync::Arc;

use screenome::learn::{
    median_timesteps_to_reach, simulate_collaboration, synth_corpus, CorpusParams, SimulationConfig,
    CONVERGENCE_TOLERANCE,
};

fn main() -> screenome::Result<()> {
    let seeds: u64 = std::env::args()
        .skip_while(|a| a != "--seeds")
        .nth(1)
        .and_then(|v| v.parse().ok())
        .unwrap_or(5);
    let p = CorpusParams::default();
    let corpora: Vec<_> = (0..seeds)
        .map(|s| Arc::new(synth_corpus(s, p.n_pos, p.n_neg, p.n_test)))
        .collect();

    println!("{:>6} {:>4} {:>10} {:>10} {:>10} {:>12}", "users", "N", "baseline", "final", "steps", "sentences");
    for (users, per_user) in [(1, 1), (1, 25), (5, 5), (4, 25)] {
        let curves: Vec<_> = corpora
            .iter()
            .enumerate()
            .map(|(s, c)| simulate_collaboration(&SimulationConfig::until_exhausted(users, per_user, s as u64, c.clone())))
            .collect::<Result<_, _>>()?;
        let steps = median_timesteps_to_reach(&curves, CONVERGENCE_TOLERANCE);
        let mean = |f: &dyn Fn(&screenome::learn::AccuracyCurve) -> f64| {
            curves.iter().map(f).sum::<f64>() / curves.len() as f64
        };
        println!(
            "{:>6} {:>4} {:>10.4} {:>10.4} {:>10} {:>12}",
            users,
            per_user,
            mean(&|c| c.baseline),
            mean(&|c| c.final_accuracy().unwrap_or(f64::NAN)),
            steps,
            steps * (users * per_user) as f64
        );
    }
    Ok(())
}

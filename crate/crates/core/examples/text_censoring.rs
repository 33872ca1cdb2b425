//! Trains a category model on synthetic positives and benign negatives,
//! then censors text lines on generated scenes.
//!
//! cargo run --release --example text_censoring -- --scenes 20 --positives 200

use std::sync::Arc;

use clap::Parser;
use screenome::font::GlyphFont;
use screenome::learn::{synth_corpus_with, train_update, CorpusParams, Label, LabeledText, TextModel, TrainConfig};
use screenome::scene::{gen_scene, CensorTally, Platform};
use screenome::text::{censor_frame, MemorySink, ReferenceDetector, ReferenceRecognizer};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 20)]
    scenes: u64,
    #[arg(long, default_value_t = 200)]
    positives: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Write the first censored scene here.
    #[arg(long)]
    save: Option<std::path::PathBuf>,
}

fn main() -> screenome::Result<()> {
    let args = Args::parse();
    let corpus = synth_corpus_with(
        1,
        &CorpusParams {
            n_pos: args.positives,
            n_neg: args.positives,
            ..CorpusParams::separable()
        },
    );
    let batch: Vec<LabeledText> = corpus
        .train_pos
        .iter()
        .map(|t| LabeledText::new(t.clone(), Label::Positive))
        .chain(corpus.train_neg.iter().map(|t| LabeledText::new(t.clone(), Label::Negative)))
        .collect();
    let model = train_update(&TextModel::new("hate"), &batch, &TrainConfig::default())?;
    println!("model: {} tokens, {} examples", model.vocabulary.len(), model.examples_seen);

    let detector = ReferenceDetector::default();
    let recognizer = ReferenceRecognizer::new(GlyphFont::standard().clone());
    let sink = Arc::new(MemorySink::default());
    let mut tally = CensorTally::default();
    for i in 0..args.scenes {
        let platform = Platform::ALL[i as usize % Platform::ALL.len()];
        let (frame, truth) = gen_scene(platform, 100 + i, 640, 360)?;
        let (out, report) = censor_frame(&frame, &detector, &recognizer, &model, args.threshold);
        for (bbox, text, score) in &report.scored {
            println!("{:<11} {bbox:<18} {score:.3} {text}", platform.name());
        }
        report.diagnostics.into_iter().for_each(|d| screenome::text::DiagnosticSink::record(sink.as_ref(), d));
        tally.add(&truth, &report.censored);
        if i == 0 {
            if let Some(path) = &args.save {
                out.save_png(path)?;
            }
        }
    }
    println!(
        "positive lines censored {}/{} ({:.1}%), negative lines censored {}/{}, diagnostics {}",
        tally.positive_censored,
        tally.positive_lines,
        100.0 * tally.positive_rate(),
        tally.negative_censored,
        tally.negative_lines,
        sink.take().len()
    );
    Ok(())
}

//! Collaborative-training simulation: `users` contributors each add
//! `per_user` positive sentences per timestep to one shared model.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_update, Corpus, Label, LabeledText, TextModel, TrainConfig};
use crate::error::{Error, Result};

/// Absolute accuracy gap below the baseline that counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub users: usize,
    pub per_user: usize,
    pub timesteps: usize,
    pub seed: u64,
    pub corpus: Arc<Corpus>,
    pub train: TrainConfig,
    /// Pre-train on every negative sentence before the first timestep and
    /// contribute positives only afterwards.
    pub retain_all_negatives: bool,
}

impl SimulationConfig {
    pub fn new(users: usize, per_user: usize, timesteps: usize, seed: u64, corpus: Arc<Corpus>) -> Self {
        Self {
            users,
            per_user,
            timesteps,
            seed,
            corpus,
            train: TrainConfig::default(),
            retain_all_negatives: false,
        }
    }

    /// Config that runs until the positive training set is used up.
    pub fn until_exhausted(users: usize, per_user: usize, seed: u64, corpus: Arc<Corpus>) -> Self {
        let per_step = (users * per_user).max(1);
        let timesteps = corpus.train_pos.len() / per_step;
        Self::new(users, per_user, timesteps, seed, corpus)
    }

    pub fn per_timestep(&self) -> usize {
        self.users * self.per_user
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.per_user == 0 {
            return Err(Error::InvalidConfig("users and per_user must be at least 1".into()));
        }
        let needed = self.per_timestep() * self.timesteps;
        if needed > self.corpus.train_pos.len() {
            return Err(Error::CorpusExhausted {
                needed,
                available: self.corpus.train_pos.len(),
            });
        }
        if self.corpus.test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: u64,
    pub sentences: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub points: Vec<CurvePoint>,
    pub baseline: f64,
}

impl AccuracyCurve {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.points.last().map(|p| p.accuracy)
    }

    /// `baseline,<acc>` followed by a `timestep,sentences,accuracy` table.
    pub fn to_csv(&self) -> String {
        let mut out = format!("baseline,{}\ntimestep,sentences,accuracy\n", self.baseline);
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.timestep, p.sentences, p.accuracy);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::InvalidArgument(format!("bad curve line {line:?}"));
        let mut lines = text.lines();
        let first = lines.next().unwrap_or_default();
        let baseline = first
            .strip_prefix("baseline,")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(first))?;
        let header = lines.next().unwrap_or_default();
        if header != "timestep,sentences,accuracy" {
            return Err(bad(header));
        }
        let points = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                match f.as_slice() {
                    [t, s, a] => Ok(CurvePoint {
                        timestep: t.parse().map_err(|_| bad(line))?,
                        sentences: s.parse().map_err(|_| bad(line))?,
                        accuracy: a.parse().map_err(|_| bad(line))?,
                    }),
                    _ => Err(bad(line)),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { points, baseline })
    }
}

/// First timestep whose accuracy is within `tolerance` of the baseline.
pub fn timesteps_to_reach(curve: &AccuracyCurve, tolerance: f64) -> Option<u64> {
    let target = curve.baseline - tolerance;
    curve.points.iter().find(|p| p.accuracy >= target).map(|p| p.timestep)
}

/// Median of [`timesteps_to_reach`] over several curves; a curve that never
/// converges counts as one step past its end.
pub fn median_timesteps_to_reach(curves: &[AccuracyCurve], tolerance: f64) -> f64 {
    let mut steps: Vec<f64> = curves
        .iter()
        .map(|c| {
            timesteps_to_reach(c, tolerance)
                .unwrap_or_else(|| c.points.last().map_or(0, |p| p.timestep) + 1) as f64
        })
        .collect();
    steps.sort_by(f64::total_cmp);
    match steps.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => steps[n / 2],
        n => (steps[n / 2 - 1] + steps[n / 2]) / 2.0,
    }
}

fn labeled(texts: &[String], label: Label, contributor: &str, timestep: u64) -> Vec<LabeledText> {
    texts
        .iter()
        .map(|t| LabeledText::new(t.clone(), label).by(contributor, timestep))
        .collect()
}

/// Runs the collaboration simulation and records test accuracy after each
/// timestep. Every timestep draws `users * per_user` unseen positives plus as
/// many negatives and warm-starts from the previous model.
pub fn simulate_collaboration(cfg: &SimulationConfig) -> Result<AccuracyCurve> {
    cfg.validate()?;
    let corpus = &cfg.corpus;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positives = corpus.train_pos.clone();
    positives.shuffle(&mut rng);
    let mut negatives = corpus.train_neg.clone();
    negatives.shuffle(&mut rng);

    let baseline = {
        let n_neg = if cfg.retain_all_negatives {
            negatives.len()
        } else {
            positives.len().min(negatives.len())
        };
        let mut batch = labeled(&positives, Label::Positive, "baseline", 0);
        batch.extend(labeled(&negatives[..n_neg], Label::Negative, "baseline", 0));
        let model = train_update(&TextModel::new("baseline"), &batch, &cfg.train)?;
        evaluate(&model, &corpus.test)?
    };

    let mut model = TextModel::new("simulated");
    if cfg.retain_all_negatives && !negatives.is_empty() {
        model = train_update(&model, &labeled(&negatives, Label::Negative, "reservoir", 0), &cfg.train)?;
    }
    let per_step = cfg.per_timestep();
    let mut points = Vec::with_capacity(cfg.timesteps);
    let mut neg_cursor = 0usize;
    for t in 1..=cfg.timesteps {
        let start = (t - 1) * per_step;
        let mut batch = Vec::with_capacity(per_step * 2);
        for (k, text) in positives[start..start + per_step].iter().enumerate() {
            let user = format!("user-{}", k / cfg.per_user);
            batch.push(LabeledText::new(text.clone(), Label::Positive).by(user, t as u64));
        }
        if !cfg.retain_all_negatives && !negatives.is_empty() {
            for _ in 0..per_step {
                let text = negatives[neg_cursor % negatives.len()].clone();
                neg_cursor += 1;
                batch.push(LabeledText::new(text, Label::Negative).by("reservoir", t as u64));
            }
        }
        model = train_update(&model, &batch, &cfg.train)?;
        points.push(CurvePoint {
            timestep: t as u64,
            sentences: (per_step * t) as u64,
            accuracy: evaluate(&model, &corpus.test)?,
        });
    }
    Ok(AccuracyCurve { points, baseline })
}

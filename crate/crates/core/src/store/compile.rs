use std::fs;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{append_jsonl, parse_label, read_jsonl, write_atomic, AnnotationKind, InterventionSpec, Share, SpecKind, Store};
use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::frame::{BBox, Frame};
use crate::learn::{synth_corpus, tokenize, train_update, Label, LabeledText, TextModel, TrainConfig};
use crate::mask::MaskTemplate;
use crate::text::{chars_to_string, ReferenceDetector, ReferenceRecognizer, TextDetector, TextRecognizer};

/// Benign sentences drawn from the reservoir per user contribution.
pub const NEGATIVES_PER_CONTRIBUTION: usize = 1;
const RESERVOIR_SIZE: usize = 2048;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct MaskMeta {
    pub name: String,
    pub contour_mode: bool,
    pub annotation: u64,
    pub entry_seq: u64,
    pub bbox: BBox,
}

/// Deterministic benign sentences for a text scope (one per network).
pub fn benign_reservoir(scope: &str) -> Vec<String> {
    let h = Sha256::digest(scope.as_bytes());
    let seed = u64::from_le_bytes(h[..8].try_into().expect("digest has 32 bytes"));
    synth_corpus(seed, 1, RESERVOIR_SIZE, 1).train_neg
}

/// Recognized text of every line inside `crop`, top to bottom.
pub fn read_region_text(crop: &Frame) -> Result<String> {
    let mut lines = ReferenceDetector::default().detect(crop)?;
    lines.sort_by_key(|b| (b.y, b.x));
    let recognizer = ReferenceRecognizer::new(GlyphFont::standard().clone());
    let mut parts = Vec::new();
    for line in &lines {
        let text = chars_to_string(&recognizer.recognize(crop, line)?);
        if !text.is_empty() {
            parts.push(text);
        }
    }
    let text = parts.join(" ");
    if tokenize(&text).is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(text)
}

impl Store {
    pub fn compile(&self, token: &str, annotation_id: u64, share: Share) -> Result<InterventionSpec> {
        let user = self.user_for(token)?;
        self.compile_for(&user, annotation_id, share)
    }

    /// Turns one of `user`'s annotations into an intervention spec.
    /// Recompiling the same mask annotation updates the existing spec.
    pub fn compile_for(&self, user: &str, annotation_id: u64, share: Share) -> Result<InterventionSpec> {
        let ann = self.annotation(user, annotation_id)?;
        let entry = self.entry(user, ann.entry_seq)?;
        let network = self.account(user)?.network;
        let crop = Frame::load_png(self.root.join(&entry.frame_path))?.crop(&ann.bbox)?;
        let (kind, name) = parse_label(&ann.label)?;
        let shared_with = (share == Share::Network).then(|| network.clone());
        match kind {
            AnnotationKind::Mask => {
                let template = MaskTemplate::new(name.clone(), crop, false)?;
                let rel = format!("interventions/masks/{user}/{name}");
                let dir = self.root.join(&rel);
                write_atomic(&dir.join("template.png"), &template.image.encode_png()?)?;
                let meta = MaskMeta {
                    name: name.clone(),
                    contour_mode: template.contour_mode,
                    annotation: ann.id,
                    entry_seq: ann.entry_seq,
                    bbox: ann.bbox,
                };
                write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
                let id = format!("mask:{user}:{name}");
                self.upsert_spec(id.clone(), |prev, now| InterventionSpec {
                    id,
                    name,
                    kind: SpecKind::Mask,
                    owner: user.to_string(),
                    shared_with,
                    artifact_path: rel,
                    enabled_by: vec![user.to_string()],
                    version: prev.map_or(1, |p| p.version + 1),
                    updated_at: now,
                    stub: false,
                })
            }
            AnnotationKind::TextModel => {
                let text = read_region_text(&crop)?;
                let scope = match share {
                    Share::Network => format!("net-{network}"),
                    Share::Private => format!("user-{user}"),
                };
                let id = format!("text:{scope}:{name}");
                let lock = self.category_lock(&id);
                let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());

                let rel = format!("interventions/text/{scope}/{name}");
                let dir = self.root.join(&rel);
                let model_path = dir.join("model.json");
                let model = match fs::read_to_string(&model_path) {
                    Ok(t) => serde_json::from_str(&t)?,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => TextModel::new(name.clone()),
                    Err(e) => return Err(e.into()),
                };
                let dataset_path = dir.join("dataset.jsonl");
                let (dataset, _) = read_jsonl::<LabeledText>(&dataset_path)?;
                let used = dataset.iter().filter(|ex| ex.label == Label::Negative).count();
                let reservoir = benign_reservoir(&scope);
                let step = model.version + 1;
                let mut batch = vec![LabeledText::new(text, Label::Positive).by(user, step)];
                batch.extend((0..NEGATIVES_PER_CONTRIBUTION).map(|k| {
                    LabeledText::new(reservoir[(used + k) % reservoir.len()].clone(), Label::Negative).by("reservoir", step)
                }));
                let model = train_update(&model, &batch, &TrainConfig::default())?;
                append_jsonl(&dataset_path, &batch)?;
                write_atomic(&model_path, serde_json::to_string(&model)?.as_bytes())?;

                self.upsert_spec(id.clone(), |prev, now| {
                    let mut enabled_by = prev.map(|p| p.enabled_by.clone()).unwrap_or_default();
                    if !enabled_by.iter().any(|u| u == user) {
                        enabled_by.push(user.to_string());
                    }
                    InterventionSpec {
                        id,
                        name,
                        kind: SpecKind::TextModel,
                        owner: prev.map_or_else(|| user.to_string(), |p| p.owner.clone()),
                        shared_with,
                        artifact_path: rel,
                        enabled_by,
                        version: model.version,
                        updated_at: now,
                        stub: false,
                    }
                })
            }
            AnnotationKind::ImageModel => {
                let rel = format!("interventions/image/{user}/{name}");
                let dataset = self.root.join(&rel).join("dataset");
                write_atomic(&dataset.join(format!("{}.png", ann.id)), &crop.encode_png()?)?;
                let id = format!("image:{user}:{name}");
                self.upsert_spec(id.clone(), |prev, now| InterventionSpec {
                    id,
                    name,
                    kind: SpecKind::ImageModel,
                    owner: user.to_string(),
                    shared_with,
                    artifact_path: rel,
                    enabled_by: vec![user.to_string()],
                    version: prev.map_or(1, |p| p.version + 1),
                    updated_at: now,
                    stub: true,
                })
            }
        }
    }
}

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::frame::{BBox, Color, Frame};
use crate::scene::{gen_scene, Platform};
use crate::store::Clock;
use crate::text::render_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Key,
    PointerDown,
    PointerUp,
    PointerMove,
    Scroll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    pub kind: InputKind,
    #[serde(default)]
    pub x: i64,
    #[serde(default)]
    pub y: i64,
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub timestamp: u64,
}

impl InputEvent {
    pub fn pointer(kind: InputKind, x: i64, y: i64) -> Self {
        Self {
            kind,
            x,
            y,
            key: None,
            timestamp: 0,
        }
    }

    pub fn key(key: impl Into<String>) -> Self {
        Self {
            kind: InputKind::Key,
            x: 0,
            y: 0,
            key: Some(key.into()),
            timestamp: 0,
        }
    }

    pub fn has_coordinates(&self) -> bool {
        self.kind != InputKind::Key
    }

    /// Pointer coordinates must satisfy `0 <= x < width`, `0 <= y < height`.
    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        if !self.has_coordinates() {
            return Ok(());
        }
        if self.x < 0 || self.y < 0 || self.x >= width as i64 || self.y >= height as i64 {
            return Err(Error::Bounds {
                region: format!("({},{})", self.x, self.y),
                width,
                height,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub forwarded: bool,
    /// Index of the scene showing after the event.
    pub scene: usize,
}

pub trait DeviceBackend: Send {
    fn capture(&mut self) -> Result<Frame>;
    fn inject(&mut self, event: &InputEvent) -> Result<Ack>;
    fn display_bounds(&self) -> (u32, u32);
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Raster { frame: Frame, x: i64, y: i64 },
    Text { text: String, x: i64, y: i64, color: Color },
}

/// A background plus layers painted in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Composition {
    pub background: Color,
    pub layers: Vec<Layer>,
}

impl Composition {
    pub fn solid(background: Color) -> Self {
        Self {
            background,
            layers: Vec::new(),
        }
    }

    pub fn from_frame(frame: Frame) -> Self {
        Self {
            background: Color::BLACK,
            layers: vec![Layer::Raster { frame, x: 0, y: 0 }],
        }
    }

    pub fn with(mut self, layer: Layer) -> Self {
        self.layers.push(layer);
        self
    }

    pub fn render(&self, width: u32, height: u32) -> Result<Frame> {
        let mut out = Frame::filled(width, height, self.background);
        for layer in &self.layers {
            match layer {
                Layer::Raster { frame, x, y } => out.paste(frame, *x, *y),
                Layer::Text { text, x, y, color } => {
                    let bg = out.get((*x).clamp(0, width as i64 - 1) as u32, (*y).clamp(0, height as i64 - 1) as u32);
                    let font = GlyphFont::standard().clone().with_colors(*color, bg);
                    out.paste(&render_text(text, &font)?, *x, *y);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Trigger {
    Start,
    /// Fires on the first capture at least this long after the backend
    /// started.
    AfterMs(u64),
    /// Fires on a pointer-down inside the region.
    Click(BBox),
}

/// An ordered script: the first step must be `Start`, and each later step
/// becomes active when its trigger fires while the previous one is showing.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedScene {
    pub width: u32,
    pub height: u32,
    pub steps: Vec<(Trigger, Composition)>,
}

impl ScriptedScene {
    pub fn new(width: u32, height: u32, first: Composition) -> Self {
        Self {
            width,
            height,
            steps: vec![(Trigger::Start, first)],
        }
    }

    pub fn then(mut self, trigger: Trigger, scene: Composition) -> Self {
        self.steps.push((trigger, scene));
        self
    }

    /// Generated scenes for `platform`, one per seed, advancing every
    /// `dwell_ms`.
    pub fn feed(platform: Platform, seeds: &[u64], dwell_ms: u64, width: u32, height: u32) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, &seed) in seeds.iter().enumerate() {
            let (frame, _) = gen_scene(platform, seed, width, height)?;
            let trigger = if i == 0 { Trigger::Start } else { Trigger::AfterMs(dwell_ms * i as u64) };
            steps.push((trigger, Composition::from_frame(frame)));
        }
        let script = Self { width, height, steps };
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("display must be at least 1x1".into()));
        }
        match self.steps.first() {
            Some((Trigger::Start, _)) => {}
            _ => return Err(Error::InvalidArgument("script must begin with a start step".into())),
        }
        if self.steps[1..].iter().any(|(t, _)| *t == Trigger::Start) {
            return Err(Error::InvalidArgument("only the first step may use the start trigger".into()));
        }
        Ok(())
    }
}

pub struct ScriptedBackend {
    script: ScriptedScene,
    rendered: Vec<Frame>,
    active: usize,
    clock: Arc<dyn Clock>,
    started: u64,
    fail_next: Arc<AtomicBool>,
}

impl ScriptedBackend {
    pub fn active_scene(&self) -> usize {
        self.active
    }

    /// Setting the returned flag makes the next capture fail once.
    pub fn failure_switch(&self) -> Arc<AtomicBool> {
        self.fail_next.clone()
    }

    fn advance_time(&mut self) {
        let elapsed = self.clock.now_ms().saturating_sub(self.started);
        while let Some((Trigger::AfterMs(t), _)) = self.script.steps.get(self.active + 1) {
            if elapsed < *t {
                break;
            }
            self.active += 1;
        }
    }
}

/// Pre-renders every scene; captures are then pure lookups.
pub fn scripted_backend(script: ScriptedScene, clock: Arc<dyn Clock>) -> Result<ScriptedBackend> {
    script.validate()?;
    let rendered = script
        .steps
        .iter()
        .map(|(_, c)| c.render(script.width, script.height))
        .collect::<Result<Vec<_>>>()?;
    let started = clock.now_ms();
    Ok(ScriptedBackend {
        script,
        rendered,
        active: 0,
        clock,
        started,
        fail_next: Arc::new(AtomicBool::new(false)),
    })
}

impl DeviceBackend for ScriptedBackend {
    fn capture(&mut self) -> Result<Frame> {
        if self.fail_next.swap(false, Ordering::SeqCst) {
            return Err(Error::StreamStall("scripted capture failure".into()));
        }
        self.advance_time();
        Ok(self.rendered[self.active].clone().with_timestamp(self.clock.now_ms()))
    }

    fn inject(&mut self, event: &InputEvent) -> Result<Ack> {
        event.check_bounds(self.script.width, self.script.height)?;
        self.advance_time();
        if event.kind == InputKind::PointerDown {
            if let Some((Trigger::Click(region), _)) = self.script.steps.get(self.active + 1) {
                if region.contains_point(event.x as u32, event.y as u32) {
                    self.active += 1;
                }
            }
        }
        Ok(Ack {
            forwarded: true,
            scene: self.active,
        })
    }

    fn display_bounds(&self) -> (u32, u32) {
        (self.script.width, self.script.height)
    }
}

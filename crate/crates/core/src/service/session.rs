use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::backend::{scripted_backend, Ack, DeviceBackend, InputEvent, ScriptedScene};
use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::frame::Frame;
use crate::mask::{occlusion_intervention, MatchConfig};
use crate::scene::Platform;
use crate::store::{Clock, InterventionSpec, SpecKind, Store};
use crate::text::{censor_intervention, Diagnostic, DiagnosticSink, ReferenceDetector, ReferenceRecognizer};
use crate::vision::{apply_interventions, InterventionFn};

pub const DEFAULT_FPS: u32 = 60;

pub type BackendFactory = Box<dyn Fn() -> Result<Box<dyn DeviceBackend>> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub fps: u32,
    /// Store one of every `capture_every` rendered frames.
    pub capture_every: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            fps: DEFAULT_FPS,
            capture_every: DEFAULT_FPS,
        }
    }
}

/// Tunables shared by every session of an engine.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub matching: MatchConfig,
    pub censor_threshold: f64,
    /// Session frame rate when a request does not name one.
    pub default_fps: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig {
                coarse_to_fine: true,
                ..MatchConfig::default()
            },
            censor_threshold: 0.5,
            default_fps: DEFAULT_FPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub user: String,
    pub device: String,
    pub interventions: Vec<String>,
    pub fps: u32,
    pub capture_every: u32,
    pub width: u32,
    pub height: u32,
}

struct Compiled {
    spec_id: String,
    version: u64,
    apply: InterventionFn,
}

pub struct Session {
    info: SessionInfo,
    backend: Box<dyn DeviceBackend>,
    chain: Vec<Compiled>,
    rendered: u64,
    diagnostics: Vec<Diagnostic>,
}

impl Session {
    pub fn info(&self) -> &SessionInfo {
        &self.info
    }

    pub fn rendered(&self) -> u64 {
        self.rendered
    }

    /// Pass-through events recorded by this session.
    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }
}

/// One rendered frame: what the device showed and what the user sees.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub captured: Frame,
    pub output: Frame,
    /// Screenome sequence number when this frame was stored.
    pub stored_seq: Option<u64>,
}

struct DiagnosticBuffer(Mutex<Vec<Diagnostic>>);

impl DiagnosticSink for DiagnosticBuffer {
    fn record(&self, d: Diagnostic) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).push(d);
    }
}

/// Owns the device registry, plugin registry and live sessions.
pub struct Engine {
    store: Arc<Store>,
    config: EngineConfig,
    devices: Mutex<HashMap<String, Arc<BackendFactory>>>,
    plugins: Mutex<HashMap<String, InterventionFn>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    sink: Option<Arc<dyn DiagnosticSink>>,
    buffer: Arc<DiagnosticBuffer>,
}

impl Engine {
    pub fn new(store: Arc<Store>, config: EngineConfig) -> Self {
        Self {
            store,
            config,
            devices: Mutex::new(HashMap::new()),
            plugins: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            sink: None,
            buffer: Arc::new(DiagnosticBuffer(Mutex::new(Vec::new()))),
        }
    }

    /// Also forwards text-hook diagnostics to `sink`.
    pub fn with_sink(mut self, sink: Arc<dyn DiagnosticSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn register_device(
        &self,
        id: impl Into<String>,
        factory: impl Fn() -> Result<Box<dyn DeviceBackend>> + Send + Sync + 'static,
    ) {
        self.devices
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.into(), Arc::new(Box::new(factory)));
    }

    /// One scripted device per platform name, each cycling through
    /// generated scenes for `seeds`.
    pub fn register_demo_devices(&self, seeds: &[u64], dwell_ms: u64, clock: Arc<dyn Clock>) -> Result<()> {
        for platform in Platform::ALL {
            let script = ScriptedScene::feed(platform, seeds, dwell_ms, 640, 360)?;
            let clock = clock.clone();
            self.register_device(platform.name(), move || {
                Ok(Box::new(scripted_backend(script.clone(), clock.clone())?) as Box<dyn DeviceBackend>)
            });
        }
        Ok(())
    }

    /// Makes `InterventionFn`s available to plugin specs of this name.
    pub fn register_plugin(&self, name: impl Into<String>, f: InterventionFn) {
        self.plugins.lock().unwrap_or_else(|e| e.into_inner()).insert(name.into(), f);
    }

    fn compile_spec(&self, spec: &InterventionSpec) -> Result<InterventionFn> {
        match spec.kind {
            SpecKind::Mask => Ok(occlusion_intervention(self.store.load_mask(spec)?, self.config.matching.clone())),
            SpecKind::TextModel => {
                let model = self.store.load_text_model(spec)?;
                let sink: Arc<dyn DiagnosticSink> = match &self.sink {
                    Some(s) => s.clone(),
                    None => self.buffer.clone(),
                };
                Ok(censor_intervention(
                    Arc::new(ReferenceDetector::default()),
                    Arc::new(ReferenceRecognizer::new(GlyphFont::standard().clone())),
                    Arc::new(model),
                    self.config.censor_threshold,
                    Some(sink),
                ))
            }
            SpecKind::Plugin => self
                .plugins
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .get(&spec.name)
                .cloned()
                .ok_or_else(|| Error::NotFound(format!("plugin {:?}", spec.name))),
            SpecKind::ImageModel => Err(Error::NotImplemented),
        }
    }

    pub fn create_session(&self, token: &str, device: &str, interventions: &[String], cfg: SessionConfig) -> Result<SessionInfo> {
        let user = self.store.user_for(token)?;
        if cfg.fps == 0 || cfg.capture_every == 0 {
            return Err(Error::InvalidArgument("fps and capture_every must be positive".into()));
        }
        if !self.store.account(&user)?.devices.iter().any(|d| d == device) {
            return Err(Error::NotFound(format!("device {device:?}")));
        }
        let factory = self
            .devices
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(device)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("device {device:?}")))?;
        let mut chain = Vec::new();
        for id in interventions {
            let spec = self.store.spec_for(&user, id)?;
            chain.push(Compiled {
                spec_id: spec.id.clone(),
                version: spec.version,
                apply: self.compile_spec(&spec)?,
            });
        }
        let backend = factory()?;
        let (width, height) = backend.display_bounds();
        let info = SessionInfo {
            id: hex::encode(rand::random::<[u8; 16]>()),
            user,
            device: device.to_string(),
            interventions: interventions.to_vec(),
            fps: cfg.fps,
            capture_every: cfg.capture_every,
            width,
            height,
        };
        let session = Session {
            info: info.clone(),
            backend,
            chain,
            rendered: 0,
            diagnostics: Vec::new(),
        };
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(info.id.clone(), Arc::new(Mutex::new(session)));
        Ok(info)
    }

    /// The session if `token` belongs to its user.
    pub fn session(&self, token: &str, id: &str) -> Result<Arc<Mutex<Session>>> {
        let user = self.store.user_for(token)?;
        let session = self
            .sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id:?}")))?;
        if session.lock().unwrap_or_else(|e| e.into_inner()).info.user != user {
            return Err(Error::AccessDenied);
        }
        Ok(session)
    }

    pub fn close_session(&self, token: &str, id: &str) -> Result<()> {
        self.session(token, id)?;
        self.sessions.lock().unwrap_or_else(|e| e.into_inner()).remove(id);
        Ok(())
    }

    /// Recompiles chain entries whose spec changed since the session
    /// compiled them.
    fn refresh(&self, session: &mut Session) -> Result<()> {
        for c in &mut session.chain {
            let spec = self.store.spec_for(&session.info.user, &c.spec_id)?;
            if spec.version != c.version {
                log::info!("recompiling {} (v{} -> v{})", spec.id, c.version, spec.version);
                c.apply = self.compile_spec(&spec)?;
                c.version = spec.version;
            }
        }
        Ok(())
    }

    pub fn render(&self, token: &str, id: &str) -> Result<RenderedFrame> {
        let session = self.session(token, id)?;
        let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
        self.render_locked(&mut s)
    }

    fn render_locked(&self, s: &mut Session) -> Result<RenderedFrame> {
        self.refresh(s)?;
        let captured = s.backend.capture().map_err(|e| match e {
            Error::StreamStall(m) => Error::StreamStall(m),
            other => Error::StreamStall(other.to_string()),
        })?;
        let chain: Vec<InterventionFn> = s.chain.iter().map(|c| c.apply.clone()).collect();
        let output = match apply_interventions(&captured, &chain) {
            Ok(out) => out,
            Err(e) => {
                let d = Diagnostic {
                    timestamp: captured.timestamp,
                    region: None,
                    message: format!("passing frame through: {e}"),
                };
                log::warn!("{}", d.message);
                if let Some(sink) = &self.sink {
                    sink.record(d.clone());
                }
                s.diagnostics.push(d);
                captured.clone()
            }
        };
        s.rendered += 1;
        let stored_seq = if (s.rendered - 1).is_multiple_of(s.info.capture_every as u64) {
            Some(self.store.append_frame_for(&s.info.user, &s.info.device, &output)?.seq)
        } else {
            None
        };
        Ok(RenderedFrame {
            captured,
            output,
            stored_seq,
        })
    }

    /// Renders the next frame and PNG-encodes it.
    pub fn next_frame(&self, token: &str, id: &str) -> Result<Vec<u8>> {
        self.render(token, id)?.output.encode_png()
    }

    pub fn send_input(&self, token: &str, id: &str, event: &InputEvent) -> Result<Ack> {
        let session = self.session(token, id)?;
        let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
        let (w, h) = s.backend.display_bounds();
        event.check_bounds(w, h)?;
        s.backend.inject(event)
    }

    /// Text-hook diagnostics collected when no external sink is set.
    pub fn take_text_diagnostics(&self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.buffer.0.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

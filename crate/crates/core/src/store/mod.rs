//! File-backed per-user persistence: accounts, screenomes, annotations and
//! the intervention specs compiled from them.
//!
//! Layout under the store root:
//!
//! ```text
//! users.json
//! screenomes/<user>/index.jsonl
//! screenomes/<user>/<device>/<seq>.png
//! annotations/<user>.jsonl
//! interventions/index.json
//! interventions/masks/<owner>/<name>/{template.png, meta.json}
//! interventions/text/<scope>/<name>/{model.json, dataset.jsonl}
//! interventions/image/<owner>/<name>/dataset/<annotation>.png
//! ```
//!
//! `<scope>` is `net-<network>` for network-shared text categories and
//! `user-<owner>` for private ones.

mod auth;
mod compile;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use auth::{constant_time_eq, password_digest, Clock, ManualClock, SystemClock, TOKEN_TTL_MS};
pub use compile::{benign_reservoir, read_region_text, NEGATIVES_PER_CONTRIBUTION};

use crate::error::{Error, Result};
use crate::frame::{BBox, Frame};
use crate::mask::MaskTemplate;
use crate::learn::TextModel;

/// Usernames, device ids and network ids: `[a-z0-9_-]+`.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub username: String,
    pub salt: String,
    pub pass_digest: String,
    pub devices: Vec<String>,
    pub network: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenomeEntry {
    pub user: String,
    pub seq: u64,
    pub timestamp: u64,
    /// Relative to the store root.
    pub frame_path: String,
    pub device: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Mask,
    TextModel,
    ImageModel,
}

impl AnnotationKind {
    pub fn prefix(self) -> &'static str {
        match self {
            AnnotationKind::Mask => "mask",
            AnnotationKind::TextModel => "text",
            AnnotationKind::ImageModel => "image",
        }
    }
}

/// Parses `(mask|text|image)-[a-z0-9-]+`.
pub fn parse_label(label: &str) -> Result<(AnnotationKind, String)> {
    let err = || Error::LabelParse(label.to_string());
    let (prefix, name) = label.split_once('-').ok_or_else(err)?;
    let kind = [AnnotationKind::Mask, AnnotationKind::TextModel, AnnotationKind::ImageModel]
        .into_iter()
        .find(|k| k.prefix() == prefix)
        .ok_or_else(err)?;
    if !crate::mask::is_valid_name(name) {
        return Err(err());
    }
    Ok((kind, name.to_string()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Sequential per user, starting at 1.
    pub id: u64,
    pub user: String,
    pub entry_seq: u64,
    pub bbox: BBox,
    pub label: String,
    pub created_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Mask,
    TextModel,
    ImageModel,
    Plugin,
}

/// Who a compiled intervention is shared with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Share {
    #[default]
    Network,
    Private,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    /// `<kind>:<owner or scope>:<name>`.
    pub id: String,
    pub name: String,
    pub kind: SpecKind,
    pub owner: String,
    /// Network id, or `None` when private.
    pub shared_with: Option<String>,
    /// Relative to the store root; empty for plugins.
    pub artifact_path: String,
    pub enabled_by: Vec<String>,
    pub version: u64,
    pub updated_at: u64,
    /// Compile-only placeholder that cannot run in a session.
    pub stub: bool,
}

impl InterventionSpec {
    pub fn visible_to(&self, user: &str, network: &str) -> bool {
        self.owner == user || self.shared_with.as_deref() == Some(network)
    }
}

/// Where [`Store::inject_fault`] makes the next frame append fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultPoint {
    BeforeWrite,
    /// After the PNG is on disk, before the index records it.
    BetweenWriteAndRecord,
}

#[derive(Default)]
struct Inner {
    users: BTreeMap<String, UserAccount>,
    tokens: HashMap<String, (String, u64)>,
    screenomes: BTreeMap<String, Vec<ScreenomeEntry>>,
    annotations: BTreeMap<String, Vec<Annotation>>,
    specs: BTreeMap<String, InterventionSpec>,
    fault: Option<FaultPoint>,
}

pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
    categories: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn injected() -> Error {
    Error::Storage(io::Error::other("injected fault"))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(buf.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

/// Reads a JSONL file, skipping lines that do not parse (a torn final
/// write). Returns the records and whether any line was dropped.
pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, bool)> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), false)),
        Err(e) => return Err(e.into()),
    };
    let mut dropped = false;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| match serde_json::from_str(l) {
            Ok(r) => Some(r),
            Err(_) => {
                dropped = true;
                None
            }
        })
        .collect();
    Ok((records, dropped))
}

fn read_json<T: DeserializeOwned + Default>(path: &Path) -> Result<T> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(serde_json::from_str(&t)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(e.into()),
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with_clock(root, Arc::new(SystemClock))
    }

    /// Opens (creating if needed) the store at `root` and runs the
    /// recovery scan.
    pub fn open_with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self> {
        let root = root.into();
        for dir in ["screenomes", "annotations", "interventions/masks", "interventions/text", "interventions/image"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let mut inner = Inner::default();
        let users: Vec<UserAccount> = read_json(&root.join("users.json"))?;
        for u in users {
            let name = u.username.clone();
            let index = root.join("screenomes").join(&name).join("index.jsonl");
            let (entries, torn) = read_jsonl::<ScreenomeEntry>(&index)?;
            if torn {
                rewrite_jsonl(&index, &entries)?;
            }
            inner.screenomes.insert(name.clone(), entries);
            let path = root.join("annotations").join(format!("{name}.jsonl"));
            let (anns, torn) = read_jsonl::<Annotation>(&path)?;
            if torn {
                rewrite_jsonl(&path, &anns)?;
            }
            inner.annotations.insert(name.clone(), anns);
            inner.users.insert(name, u);
        }
        let specs: Vec<InterventionSpec> = read_json(&root.join("interventions/index.json"))?;
        inner.specs = specs.into_iter().map(|s| (s.id.clone(), s)).collect();
        let store = Self {
            root,
            clock,
            inner: Mutex::new(inner),
            categories: Mutex::new(HashMap::new()),
        };
        let removed = store.recover()?;
        if removed > 0 {
            log::warn!("recovery removed {removed} unrecorded screenome files");
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Deletes screenome files that no index entry references (left by a
    /// failure between write and record). Returns how many were removed.
    pub fn recover(&self) -> Result<usize> {
        let inner = self.lock();
        let mut removed = 0;
        let dir = self.root.join("screenomes");
        for user_dir in fs::read_dir(&dir)? {
            let user_dir = user_dir?.path();
            if !user_dir.is_dir() {
                continue;
            }
            let user = user_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let known: std::collections::HashSet<PathBuf> = inner
                .screenomes
                .get(&user)
                .into_iter()
                .flatten()
                .map(|e| self.root.join(&e.frame_path))
                .collect();
            for device_dir in fs::read_dir(&user_dir)? {
                let device_dir = device_dir?.path();
                if !device_dir.is_dir() {
                    continue;
                }
                for file in fs::read_dir(&device_dir)? {
                    let file = file?.path();
                    if !known.contains(&file) {
                        fs::remove_file(&file)?;
                        removed += 1;
                    }
                }
            }
        }
        Ok(removed)
    }

    /// Makes the next frame append fail at `point`.
    pub fn inject_fault(&self, point: FaultPoint) {
        self.lock().fault = Some(point);
    }

    fn save_users(&self, inner: &Inner) -> Result<()> {
        let users: Vec<&UserAccount> = inner.users.values().collect();
        write_atomic(&self.root.join("users.json"), serde_json::to_string_pretty(&users)?.as_bytes())
    }

    fn save_specs(&self, inner: &Inner) -> Result<()> {
        let specs: Vec<&InterventionSpec> = inner.specs.values().collect();
        write_atomic(
            &self.root.join("interventions/index.json"),
            serde_json::to_string_pretty(&specs)?.as_bytes(),
        )
    }

    pub fn create_user(&self, username: &str, password: &str, devices: &[&str], network: &str) -> Result<UserAccount> {
        for id in std::iter::once(&username).chain(devices).chain([&network]) {
            if !is_valid_id(id) {
                return Err(Error::InvalidArgument(format!("{id:?} must match [a-z0-9_-]+")));
            }
        }
        let mut inner = self.lock();
        if inner.users.contains_key(username) {
            return Err(Error::AlreadyExists(format!("user {username:?}")));
        }
        let salt = auth::random_bytes::<16>();
        let account = UserAccount {
            username: username.to_string(),
            salt: hex::encode(salt),
            pass_digest: hex::encode(password_digest(&salt, password)),
            devices: devices.iter().map(|d| d.to_string()).collect(),
            network: network.to_string(),
        };
        inner.users.insert(username.to_string(), account.clone());
        inner.screenomes.entry(username.to_string()).or_default();
        inner.annotations.entry(username.to_string()).or_default();
        self.save_users(&inner)?;
        Ok(account)
    }

    pub fn add_device(&self, username: &str, device: &str) -> Result<()> {
        if !is_valid_id(device) {
            return Err(Error::InvalidArgument(format!("{device:?} must match [a-z0-9_-]+")));
        }
        let mut inner = self.lock();
        let account = inner
            .users
            .get_mut(username)
            .ok_or_else(|| Error::NotFound(format!("user {username:?}")))?;
        if !account.devices.iter().any(|d| d == device) {
            account.devices.push(device.to_string());
        }
        self.save_users(&inner)
    }

    pub fn account(&self, username: &str) -> Result<UserAccount> {
        self.lock()
            .users
            .get(username)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("user {username:?}")))
    }

    /// Issues a 32-byte hex token valid for 24 hours. Unknown users and
    /// wrong passwords fail identically, and both pay for a digest.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<String> {
        let account = self.lock().users.get(username).cloned();
        let (salt, expected) = match &account {
            Some(a) => (
                hex::decode(&a.salt).unwrap_or_default(),
                hex::decode(&a.pass_digest).unwrap_or_default(),
            ),
            None => (vec![0u8; 16], vec![0u8; 32]),
        };
        let ok = constant_time_eq(&password_digest(&salt, password), &expected);
        if !(ok && account.is_some()) {
            return Err(Error::AuthFailure);
        }
        let token = hex::encode(auth::random_bytes::<32>());
        let expires = self.clock.now_ms() + TOKEN_TTL_MS;
        self.lock().tokens.insert(token.clone(), (username.to_string(), expires));
        Ok(token)
    }

    /// The user a token belongs to.
    pub fn user_for(&self, token: &str) -> Result<String> {
        let inner = self.lock();
        let (user, expires) = inner.tokens.get(token).ok_or(Error::AuthFailure)?;
        if self.clock.now_ms() >= *expires {
            return Err(Error::AuthExpired);
        }
        Ok(user.clone())
    }

    pub fn devices(&self, token: &str) -> Result<Vec<String>> {
        let user = self.user_for(token)?;
        Ok(self.account(&user)?.devices)
    }

    pub fn append_frame(&self, token: &str, device: &str, frame: &Frame) -> Result<ScreenomeEntry> {
        let user = self.user_for(token)?;
        self.append_frame_for(&user, device, frame)
    }

    /// Writes the PNG, then records it. Timestamps are clamped so they
    /// never decrease per device.
    pub fn append_frame_for(&self, user: &str, device: &str, frame: &Frame) -> Result<ScreenomeEntry> {
        let png = frame.encode_png()?;
        let mut inner = self.lock();
        let account = inner
            .users
            .get(user)
            .ok_or_else(|| Error::NotFound(format!("user {user:?}")))?;
        if !account.devices.iter().any(|d| d == device) {
            return Err(Error::NotFound(format!("device {device:?}")));
        }
        let entries = inner.screenomes.get(user).map(Vec::as_slice).unwrap_or_default();
        let seq = entries.last().map_or(0, |e| e.seq) + 1;
        let last_ts = entries.iter().rev().find(|e| e.device == device).map_or(0, |e| e.timestamp);
        let entry = ScreenomeEntry {
            user: user.to_string(),
            seq,
            timestamp: frame.timestamp.max(last_ts),
            frame_path: format!("screenomes/{user}/{device}/{seq}.png"),
            device: device.to_string(),
            width: frame.width(),
            height: frame.height(),
        };
        let fault = inner.fault.take();
        if fault == Some(FaultPoint::BeforeWrite) {
            return Err(injected());
        }
        let path = self.root.join(&entry.frame_path);
        write_atomic(&path, &png)?;
        if fault == Some(FaultPoint::BetweenWriteAndRecord) {
            return Err(injected());
        }
        let index = self.root.join("screenomes").join(user).join("index.jsonl");
        if let Err(e) = append_jsonl(&index, std::slice::from_ref(&entry)) {
            let _ = fs::remove_file(&path);
            return Err(e);
        }
        inner.screenomes.entry(user.to_string()).or_default().push(entry.clone());
        Ok(entry)
    }

    fn check_owner(&self, token: &str, owner: &str) -> Result<String> {
        let user = self.user_for(token)?;
        if user != owner {
            return Err(Error::AccessDenied);
        }
        Ok(user)
    }

    /// Entries of `owner` in seq order, filtered by device and an inclusive
    /// timestamp range.
    pub fn list_screenome(
        &self,
        token: &str,
        owner: &str,
        device: Option<&str>,
        from: Option<u64>,
        to: Option<u64>,
    ) -> Result<Vec<ScreenomeEntry>> {
        self.check_owner(token, owner)?;
        let inner = self.lock();
        Ok(inner
            .screenomes
            .get(owner)
            .into_iter()
            .flatten()
            .filter(|e| device.is_none_or(|d| e.device == d))
            .filter(|e| from.is_none_or(|t| e.timestamp >= t) && to.is_none_or(|t| e.timestamp <= t))
            .cloned()
            .collect())
    }

    fn entry(&self, owner: &str, seq: u64) -> Result<ScreenomeEntry> {
        self.lock()
            .screenomes
            .get(owner)
            .and_then(|es| es.iter().find(|e| e.seq == seq))
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("screenome entry {seq}")))
    }

    pub fn frame_png(&self, token: &str, owner: &str, seq: u64) -> Result<Vec<u8>> {
        self.check_owner(token, owner)?;
        let entry = self.entry(owner, seq)?;
        Ok(fs::read(self.root.join(entry.frame_path))?)
    }

    pub fn load_frame(&self, token: &str, owner: &str, seq: u64) -> Result<Frame> {
        Frame::decode_png(&self.frame_png(token, owner, seq)?)
    }

    pub fn save_annotation(&self, token: &str, entry_seq: u64, bbox: BBox, label: &str) -> Result<Annotation> {
        let user = self.user_for(token)?;
        parse_label(label)?;
        let entry = self.entry(&user, entry_seq)?;
        if bbox.is_empty() || !bbox.fits_in(entry.width, entry.height) {
            return Err(Error::Bounds {
                region: bbox.to_string(),
                width: entry.width,
                height: entry.height,
            });
        }
        let mut inner = self.lock();
        let anns = inner.annotations.entry(user.clone()).or_default();
        let ann = Annotation {
            id: anns.last().map_or(0, |a| a.id) + 1,
            user: user.clone(),
            entry_seq,
            bbox,
            label: label.to_string(),
            created_at: self.clock.now_ms(),
        };
        append_jsonl(
            &self.root.join("annotations").join(format!("{user}.jsonl")),
            std::slice::from_ref(&ann),
        )?;
        anns.push(ann.clone());
        Ok(ann)
    }

    pub fn annotations(&self, token: &str) -> Result<Vec<Annotation>> {
        let user = self.user_for(token)?;
        Ok(self.lock().annotations.get(&user).cloned().unwrap_or_default())
    }

    fn annotation(&self, user: &str, id: u64) -> Result<Annotation> {
        self.lock()
            .annotations
            .get(user)
            .and_then(|a| a.iter().find(|a| a.id == id))
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("annotation {id}")))
    }

    /// Own and network-shared specs, sorted by name then id.
    pub fn list_interventions(&self, token: &str) -> Result<Vec<InterventionSpec>> {
        let user = self.user_for(token)?;
        self.visible_specs(&user)
    }

    pub fn visible_specs(&self, user: &str) -> Result<Vec<InterventionSpec>> {
        let inner = self.lock();
        let network = &inner
            .users
            .get(user)
            .ok_or_else(|| Error::NotFound(format!("user {user:?}")))?
            .network;
        let mut specs: Vec<InterventionSpec> =
            inner.specs.values().filter(|s| s.visible_to(user, network)).cloned().collect();
        specs.sort_by(|a, b| a.name.cmp(&b.name).then_with(|| a.id.cmp(&b.id)));
        Ok(specs)
    }

    /// The spec `id` if `user` may use it.
    pub fn spec_for(&self, user: &str, id: &str) -> Result<InterventionSpec> {
        let inner = self.lock();
        let spec = inner
            .specs
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("intervention {id:?}")))?;
        let network = &inner.users.get(user).ok_or(Error::AccessDenied)?.network;
        if !spec.visible_to(user, network) {
            return Err(Error::AccessDenied);
        }
        Ok(spec.clone())
    }

    /// Registers a code-defined intervention under `name`; the service
    /// resolves it against its plugin registry.
    pub fn register_plugin(&self, token: &str, name: &str, share: Share) -> Result<InterventionSpec> {
        let user = self.user_for(token)?;
        if !crate::mask::is_valid_name(name) {
            return Err(Error::InvalidArgument(format!("plugin name {name:?} must match [a-z0-9-]+")));
        }
        let network = self.account(&user)?.network;
        self.upsert_spec(format!("plugin:{user}:{name}"), |prev, now| InterventionSpec {
            id: format!("plugin:{user}:{name}"),
            name: name.to_string(),
            kind: SpecKind::Plugin,
            owner: user.clone(),
            shared_with: (share == Share::Network).then(|| network.clone()),
            artifact_path: String::new(),
            enabled_by: vec![user.clone()],
            version: prev.map_or(1, |p| p.version + 1),
            updated_at: now,
            stub: false,
        })
    }

    fn upsert_spec(
        &self,
        id: String,
        build: impl FnOnce(Option<&InterventionSpec>, u64) -> InterventionSpec,
    ) -> Result<InterventionSpec> {
        let mut inner = self.lock();
        let spec = build(inner.specs.get(&id), self.clock.now_ms());
        inner.specs.insert(id, spec.clone());
        self.save_specs(&inner)?;
        Ok(spec)
    }

    pub fn load_mask(&self, spec: &InterventionSpec) -> Result<MaskTemplate> {
        let dir = self.root.join(&spec.artifact_path);
        let meta: compile::MaskMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        MaskTemplate::new(spec.name.clone(), Frame::load_png(dir.join("template.png"))?, meta.contour_mode)
    }

    pub fn load_text_model(&self, spec: &InterventionSpec) -> Result<TextModel> {
        let path = self.root.join(&spec.artifact_path).join("model.json");
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    fn category_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.categories
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

fn rewrite_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&serde_json::to_string(r)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

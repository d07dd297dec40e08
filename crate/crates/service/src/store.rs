use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use figtab::geometry::Rect;
use figtab::table::DataTable;
use figtab::vlm::PromptKind;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tracing::{info, warn};

use crate::ServiceError;

const SNAPSHOT: &str = "session.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureEntry {
    /// `{session_id}-{k}`, unique within the service.
    pub figure_ref: String,
    pub label: String,
    pub page_index: usize,
    pub crop: Rect,
    pub caption: String,
    pub width: u32,
    pub height: u32,
    pub dpi: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    pub filename: String,
    pub uploaded_at: DateTime<Utc>,
    pub figures: Vec<FigureEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub table: DataTable,
    pub backend: String,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub response_text: String,
    pub extracted_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub edit_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub documents: Vec<DocumentEntry>,
    /// Keyed by figure ref; every key names a figure in `documents`.
    pub tables: BTreeMap<String, TableEntry>,
    /// Figures ever added; the next ref is `{session_id}-{figure_count + 1}`.
    pub figure_count: u64,
}

impl Session {
    fn new(session_id: String) -> Self {
        let now = Utc::now();
        Session {
            session_id,
            created_at: now,
            updated_at: now,
            documents: Vec::new(),
            tables: BTreeMap::new(),
            figure_count: 0,
        }
    }

    pub fn figure(&self, figure_ref: &str) -> Option<(&DocumentEntry, &FigureEntry)> {
        self.documents
            .iter()
            .find_map(|d| d.figures.iter().find(|f| f.figure_ref == figure_ref).map(|f| (d, f)))
    }

    pub fn figures(&self) -> impl Iterator<Item = (&DocumentEntry, &FigureEntry)> {
        self.documents.iter().flat_map(|d| d.figures.iter().map(move |f| (d, f)))
    }

    pub fn next_figure_ref(&mut self) -> String {
        self.figure_count += 1;
        format!("{}-{}", self.session_id, self.figure_count)
    }

    pub fn next_doc_id(&self) -> String {
        format!("doc{}", self.documents.len() + 1)
    }

    /// Bumps `updated_at`, strictly later than before even under a coarse clock.
    pub fn touch(&mut self) -> DateTime<Utc> {
        self.updated_at = later_than(self.updated_at);
        self.updated_at
    }
}

/// `now`, or one microsecond past `prev` if the clock has not moved on.
pub fn later_than(prev: DateTime<Utc>) -> DateTime<Utc> {
    let now = Utc::now();
    if now > prev {
        now
    } else {
        prev + chrono::Duration::microseconds(1)
    }
}

/// 128 random bits, lowercase hex.
pub fn new_session_id() -> String {
    let mut b = [0u8; 16];
    rand::rng().fill_bytes(&mut b);
    hex::encode(b)
}

pub fn is_session_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Session id part of a figure ref, if well formed.
pub fn session_of_figure(figure_ref: &str) -> Option<&str> {
    let (sid, k) = figure_ref.split_once('-')?;
    (is_session_id(sid) && !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit())).then_some(sid)
}

struct Slot {
    session: Arc<Mutex<Session>>,
    last_access: DateTime<Utc>,
}

/// Sessions in memory, mirrored to `root/{id}/session.json` with figure PNGs in
/// `root/{id}/figures/`. Each session has its own lock; callers hold it across a
/// mutation and the matching [`SessionStore::persist`].
pub struct SessionStore {
    root: PathBuf,
    ttl: Duration,
    slots: StdMutex<HashMap<String, Slot>>,
}

fn storage(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::StorageFull(e.to_string())
}

impl SessionStore {
    /// Loads every snapshot under `root` and drops the expired ones.
    pub fn open(root: &Path, ttl: Duration) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(root).map_err(|e| storage(format!("{}: {e}", root.display())))?;
        let mut slots = HashMap::new();
        for entry in std::fs::read_dir(root).map_err(storage)? {
            let entry = entry.map_err(storage)?;
            let name = entry.file_name().to_string_lossy().to_string();
            if !is_session_id(&name) {
                continue;
            }
            let path = entry.path().join(SNAPSHOT);
            let session: Session = match std::fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
            {
                Ok(s) => s,
                Err(e) => {
                    warn!(path = %path.display(), "skipping unreadable session snapshot: {e}");
                    continue;
                }
            };
            if session.session_id != name {
                warn!(path = %path.display(), "snapshot id does not match its directory");
                continue;
            }
            let last_access = session.updated_at;
            slots.insert(
                name,
                Slot {
                    session: Arc::new(Mutex::new(session)),
                    last_access,
                },
            );
        }
        let store = SessionStore {
            root: root.to_path_buf(),
            ttl,
            slots: StdMutex::new(slots),
        };
        let removed = store.gc(Utc::now());
        info!(root = %root.display(), loaded = store.len(), expired = removed.len(), "session store open");
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.slots.lock().expect("store lock").keys().cloned().collect();
        v.sort();
        v
    }

    pub fn create(&self) -> Result<Session, ServiceError> {
        let session = Session::new(new_session_id());
        std::fs::create_dir_all(self.figure_dir(&session.session_id)).map_err(storage)?;
        self.persist(&session)?;
        self.slots.lock().expect("store lock").insert(
            session.session_id.clone(),
            Slot {
                session: Arc::new(Mutex::new(session.clone())),
                last_access: session.updated_at,
            },
        );
        Ok(session)
    }

    pub fn get(&self, session_id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let mut slots = self.slots.lock().expect("store lock");
        let slot = slots
            .get_mut(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        slot.last_access = Utc::now();
        Ok(slot.session.clone())
    }

    /// The session owning `figure_ref`. Existence of the figure itself is checked by the caller.
    pub fn get_for_figure(&self, figure_ref: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let sid = session_of_figure(figure_ref).ok_or_else(|| ServiceError::UnknownFigure(figure_ref.to_string()))?;
        self.get(sid).map_err(|_| ServiceError::UnknownFigure(figure_ref.to_string()))
    }

    fn session_dir(&self, session_id: &str) -> PathBuf {
        self.root.join(session_id)
    }

    pub fn figure_dir(&self, session_id: &str) -> PathBuf {
        self.session_dir(session_id).join("figures")
    }

    pub fn figure_path(&self, figure_ref: &str) -> Option<PathBuf> {
        let sid = session_of_figure(figure_ref)?;
        Some(self.figure_dir(sid).join(format!("{figure_ref}.png")))
    }

    /// Writes the snapshot through a temporary file and a rename.
    pub fn persist(&self, session: &Session) -> Result<(), ServiceError> {
        let dir = self.session_dir(&session.session_id);
        let bytes = serde_json::to_vec_pretty(session).map_err(|e| ServiceError::Internal(e.to_string()))?;
        write_atomic(&dir.join(SNAPSHOT), &bytes).map_err(storage)
    }

    pub fn write_figure(&self, figure_ref: &str, png: &[u8]) -> Result<(), ServiceError> {
        let path = self
            .figure_path(figure_ref)
            .ok_or_else(|| ServiceError::Internal(format!("bad figure ref {figure_ref}")))?;
        write_atomic(&path, png).map_err(storage)
    }

    /// Reads a snapshot from disk, bypassing memory.
    pub fn load_snapshot(&self, session_id: &str) -> Result<Session, ServiceError> {
        if !is_session_id(session_id) {
            return Err(ServiceError::UnknownSession(session_id.to_string()));
        }
        let bytes = std::fs::read(self.session_dir(session_id).join(SNAPSHOT))
            .map_err(|_| ServiceError::UnknownSession(session_id.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Removes sessions idle for longer than the TTL. Sessions whose lock is held are kept.
    pub fn gc(&self, now: DateTime<Utc>) -> Vec<String> {
        let ttl = chrono::Duration::from_std(self.ttl).unwrap_or(chrono::Duration::MAX);
        let mut removed = Vec::new();
        let mut slots = self.slots.lock().expect("store lock");
        slots.retain(|id, slot| {
            if now - slot.last_access <= ttl {
                return true;
            }
            let Ok(_guard) = slot.session.try_lock() else {
                return true;
            };
            if let Err(e) = std::fs::remove_dir_all(self.session_dir(id)) {
                warn!(session = %id, "removing expired session: {e}");
            }
            removed.push(id.clone());
            false
        });
        removed.sort();
        if !removed.is_empty() {
            info!(count = removed.len(), "expired sessions removed");
        }
        removed
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default()
    ));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_128_bit_hex_and_distinct() {
        let a = new_session_id();
        let b = new_session_id();
        assert!(is_session_id(&a) && is_session_id(&b));
        assert_ne!(a, b);
        assert!(!is_session_id("../etc"));
        assert!(!is_session_id(&a.to_uppercase()));
    }

    #[test]
    fn figure_refs_name_their_session() {
        let id = "0123456789abcdef0123456789abcdef";
        assert_eq!(session_of_figure(&format!("{id}-12")), Some(id));
        assert_eq!(session_of_figure(&format!("{id}-")), None);
        assert_eq!(session_of_figure(&format!("{id}-1/../x")), None);
        assert_eq!(session_of_figure("abc-1"), None);
    }

    #[test]
    fn snapshot_round_trip_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(3600)).unwrap();
        let mut s = store.create().unwrap();
        assert!(s.documents.is_empty());
        let fref = s.next_figure_ref();
        s.documents.push(DocumentEntry {
            doc_id: s.next_doc_id(),
            filename: "a.pdf".into(),
            uploaded_at: Utc::now(),
            figures: vec![FigureEntry {
                figure_ref: fref.clone(),
                label: "Figure 1".into(),
                page_index: 0,
                crop: Rect::new(0.0, 0.0, 10.0, 10.0),
                caption: "Figure 1: x".into(),
                width: 20,
                height: 20,
                dpi: 144,
            }],
        });
        s.touch();
        store.persist(&s).unwrap();
        assert_eq!(store.load_snapshot(&s.session_id).unwrap(), s);
        drop(store);
        let reopened = SessionStore::open(dir.path(), Duration::from_secs(3600)).unwrap();
        let got = reopened.get(&s.session_id).unwrap();
        assert_eq!(*got.try_lock().unwrap(), s);
    }

    #[test]
    fn gc_drops_idle_sessions_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(3600)).unwrap();
        let old = store.create().unwrap().session_id;
        let busy = store.create().unwrap().session_id;
        let later = Utc::now() + chrono::Duration::hours(2);
        let fresh = store.create().unwrap().session_id;
        store.slots.lock().unwrap().get_mut(&fresh).unwrap().last_access = later;
        let held = store.get(&busy).unwrap();
        let _guard = held.try_lock().unwrap();
        assert_eq!(store.gc(later), vec![old.clone()]);
        assert!(!dir.path().join(&old).exists());
        assert!(store.get(&busy).is_ok() && store.get(&fresh).is_ok());
    }

    #[test]
    fn expired_snapshots_removed_at_open() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Duration::from_secs(3600)).unwrap();
        let mut s = store.create().unwrap();
        s.updated_at = Utc::now() - chrono::Duration::hours(30);
        store.persist(&s).unwrap();
        drop(store);
        let store = SessionStore::open(dir.path(), Duration::from_secs(24 * 3600)).unwrap();
        assert!(store.is_empty());
        assert!(!dir.path().join(&s.session_id).exists());
    }

    #[test]
    fn unwritable_root_is_storage_full() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        std::fs::write(&file, b"x").unwrap();
        assert!(matches!(
            SessionStore::open(&file.join("root"), Duration::from_secs(1)),
            Err(ServiceError::StorageFull(_))
        ));
    }

    #[test]
    fn timestamps_strictly_advance() {
        let mut s = Session::new(new_session_id());
        let t0 = s.updated_at;
        let t1 = s.touch();
        let t2 = s.touch();
        assert!(t0 < t1 && t1 < t2);
    }
}

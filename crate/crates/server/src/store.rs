//! In-memory session store with idle eviction and optional file persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chromaseq::GraphicDocument;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Favorite {
    /// Content hash of the snapshot; re-marking the same state is a no-op.
    pub id: String,
    pub document: serde_json::Value,
    pub palettes: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub document: GraphicDocument,
    pub favorites: Vec<Favorite>,
}

#[derive(Serialize, Deserialize)]
struct SessionFile {
    document: serde_json::Value,
    favorites: Vec<Favorite>,
}

struct Entry {
    session: Arc<tokio::sync::Mutex<Session>>,
    touched: Instant,
}

/// Sessions keyed by document id. Each session has its own async lock, so
/// operations on one document are serialized while others proceed.
pub struct SessionStore {
    entries: Mutex<HashMap<Uuid, Entry>>,
    ttl: Option<Duration>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new(ttl: Option<Duration>, dir: Option<PathBuf>) -> std::io::Result<Self> {
        let store = Self {
            entries: Mutex::new(HashMap::new()),
            ttl,
            dir,
        };
        if let Some(dir) = &store.dir {
            std::fs::create_dir_all(dir)?;
            store.load_all(dir)?;
        }
        Ok(store)
    }

    fn load_all(&self, dir: &Path) -> std::io::Result<()> {
        let mut map = self.entries.lock().expect("store lock");
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| Uuid::parse_str(s).ok()) else {
                continue;
            };
            // unreadable files are skipped rather than failing startup
            let Ok(bytes) = std::fs::read(&path) else { continue };
            let Ok(file) = serde_json::from_slice::<SessionFile>(&bytes) else { continue };
            let Ok(document) = GraphicDocument::parse(file.document.to_string().as_bytes()) else { continue };
            map.insert(
                id,
                Entry {
                    session: Arc::new(tokio::sync::Mutex::new(Session {
                        document,
                        favorites: file.favorites,
                    })),
                    touched: Instant::now(),
                },
            );
        }
        Ok(())
    }

    fn sweep(&self, map: &mut HashMap<Uuid, Entry>) {
        let Some(ttl) = self.ttl else { return };
        let now = Instant::now();
        let expired: Vec<Uuid> = map.iter().filter(|(_, e)| now.duration_since(e.touched) > ttl).map(|(id, _)| *id).collect();
        for id in expired {
            map.remove(&id);
            if let Some(dir) = &self.dir {
                let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
            }
        }
    }

    pub fn insert(&self, document: GraphicDocument) -> (Uuid, Arc<tokio::sync::Mutex<Session>>) {
        let id = Uuid::new_v4();
        let session = Arc::new(tokio::sync::Mutex::new(Session {
            document,
            favorites: Vec::new(),
        }));
        let mut map = self.entries.lock().expect("store lock");
        self.sweep(&mut map);
        map.insert(
            id,
            Entry {
                session: session.clone(),
                touched: Instant::now(),
            },
        );
        (id, session)
    }

    pub fn get(&self, id: &str) -> Option<(Uuid, Arc<tokio::sync::Mutex<Session>>)> {
        let id = Uuid::parse_str(id).ok()?;
        let mut map = self.entries.lock().expect("store lock");
        self.sweep(&mut map);
        let e = map.get_mut(&id)?;
        e.touched = Instant::now();
        Some((id, e.session.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes a session to disk when persistence is on.
    pub fn persist(&self, id: Uuid, s: &Session) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let file = SessionFile {
            document: s.document.to_json_value(),
            favorites: s.favorites.clone(),
        };
        let tmp = dir.join(format!("{id}.json.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&file)?)?;
        std::fs::rename(tmp, dir.join(format!("{id}.json")))
    }
}

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use super::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub u64);

/// Thread-safe map from id to session. Each session sits behind its own
/// mutex, so different sessions can progress on different threads.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<Session>>>>,
    next: AtomicU64,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, session: Session) -> SessionId {
        let id = SessionId(self.next.fetch_add(1, Ordering::Relaxed));
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, Arc::new(Mutex::new(session)));
        id
    }

    pub fn get(&self, id: SessionId) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }

    pub fn remove(&self, id: SessionId) -> Option<Arc<Mutex<Session>>> {
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(&id)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut ids: Vec<_> = self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().copied().collect();
        ids.sort();
        ids
    }
}

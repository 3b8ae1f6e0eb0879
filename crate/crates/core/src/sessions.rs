//! In-memory session state. Writes to one session are serialized by its own
//! lock; different sessions proceed in parallel.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use tokio::sync::Mutex;

use crate::model::{ModelError, Session, StudentAlias};
use crate::telemetry::now_ms;

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, alias: StudentAlias, module_id: u8) -> Result<Session, ModelError> {
        let session = Session::new(uuid::Uuid::new_v4().to_string(), alias, module_id, now_ms())?;
        self.sessions
            .write()
            .expect("session map lock")
            .insert(session.id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().expect("session map lock").get(id).cloned()
    }

    /// Alias and module of a session without holding its lock.
    pub async fn lookup(&self, id: &str) -> Option<(StudentAlias, u8)> {
        let handle = self.get(id)?;
        let s = handle.lock().await;
        Some((s.alias.clone(), s.module_id))
    }

    pub async fn record_exchange(&self, id: &str, question: &str, answer: &str) {
        if let Some(handle) = self.get(id) {
            handle.lock().await.record_exchange(question, answer, now_ms());
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn concurrent_exchanges_keep_alternation() {
        let store = Arc::new(SessionStore::new());
        let s = store.create(StudentAlias::from_token("a").unwrap(), 1).unwrap();
        let mut tasks = Vec::new();
        for i in 0..32 {
            let store = Arc::clone(&store);
            let id = s.id.clone();
            tasks.push(tokio::spawn(async move { store.record_exchange(&id, &format!("q{i}"), "a").await }));
        }
        for t in tasks {
            t.await.unwrap();
        }
        let handle = store.get(&s.id).unwrap();
        let session = handle.lock().await;
        assert_eq!(session.history.len(), 64);
        session.check().unwrap();
    }
}

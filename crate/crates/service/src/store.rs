//! On-disk layout: `sessions/<id>.json` and `datasets/<hash>.csv` under the data directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::SystemTime;

use multimapper_core::api::SessionSnapshot;
use multimapper_core::geometry::PointCloud;
use multimapper_core::session::{canonical_json, dataset_hash, DatasetSource, Session};
use multimapper_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// Session ids are generated by the service; anything else is rejected
/// before it can reach the filesystem.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit() || b == b'-')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["sessions", "datasets"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    fn dataset_path(&self, hash: &str) -> PathBuf {
        self.root.join("datasets").join(format!("{hash}.csv"))
    }

    /// Stores uploaded points under their hash.
    pub fn save_dataset(&self, points: &PointCloud) -> Result<String> {
        let hash = dataset_hash(points);
        let path = self.dataset_path(&hash);
        if !path.exists() {
            write_atomic(&path, points.to_csv_string().as_bytes())?;
        }
        Ok(hash)
    }

    pub fn load_dataset(&self, hash: &str) -> Result<PointCloud> {
        if !valid_id(hash) {
            return Err(Error::CorruptSession(format!("bad dataset hash {hash:?}")));
        }
        PointCloud::from_csv_path(self.dataset_path(hash))
    }

    pub fn save_session(&self, snapshot: &SessionSnapshot) -> Result<()> {
        let text = canonical_json(snapshot)?;
        write_atomic(&self.session_path(&snapshot.session_id), text.as_bytes())
    }

    /// Reads and validates a stored session; `None` when it does not exist.
    pub fn load_session(&self, id: &str) -> Result<Option<(SessionSnapshot, Session)>> {
        let path = self.session_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let snapshot: SessionSnapshot =
            serde_json::from_str(&text).map_err(|e| Error::CorruptSession(format!("{}: {e}", path.display())))?;
        let points = match &snapshot.session.dataset.source {
            DatasetSource::Stored => self.load_dataset(&snapshot.session.dataset.hash)?,
            other => other.load()?,
        };
        let session = snapshot.session.clone().restore(points)?;
        Ok(Some((snapshot, session)))
    }

    pub fn remove_session(&self, id: &str) -> Result<()> {
        let path = self.session_path(id);
        match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&path, e)),
            _ => Ok(()),
        }
    }

    /// Ids of stored sessions last written before `cutoff`.
    pub fn sessions_older_than(&self, cutoff: SystemTime) -> Vec<String> {
        let Ok(entries) = fs::read_dir(self.root.join("sessions")) else {
            return Vec::new();
        };
        entries
            .filter_map(|e| e.ok())
            .filter(|e| e.metadata().and_then(|m| m.modified()).is_ok_and(|t| t < cutoff))
            .filter_map(|e| e.path().file_stem()?.to_str().map(str::to_string))
            .filter(|id| valid_id(id))
            .collect()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let tmp = path.with_extension(format!("tmp{}", COUNTER.fetch_add(1, Ordering::Relaxed)));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

//! On-disk memo of free-time potential values, enabled by `JMFLOW_CACHE_DIR`.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::scenario::sha256_hex;
use crate::action::{ActionOptions, MinimizeStatus};
use crate::error::{JmError, Result};
use crate::model::MassSystem;

pub const CACHE_ENV: &str = "JMFLOW_CACHE_DIR";
const CACHE_FILE: &str = "phi-cache.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSummary {
    pub value: f64,
    pub t_star: f64,
    pub status: MinimizeStatus,
    pub segments: usize,
    pub gradient_norm: f64,
    pub polished: bool,
}

/// Values keyed by a hash of the mass system, energy, endpoints (exact bits)
/// and solver options.
#[derive(Debug)]
pub struct PhiStore {
    path: PathBuf,
    map: Mutex<BTreeMap<String, PhiSummary>>,
    fresh: Mutex<BTreeMap<String, PhiSummary>>,
}

fn key(ms: &MassSystem, h: f64, x: &[f64], y: &[f64], opts: &ActionOptions) -> String {
    let mut s = String::new();
    for v in ms.masses().iter().chain([&h]).chain(x).chain(y) {
        s.push_str(&format!("{:016x},", v.to_bits()));
    }
    s.push_str(&format!("d{};", ms.dim()));
    s.push_str(&serde_json::to_string(opts).unwrap_or_default());
    sha256_hex(s.as_bytes())
}

impl PhiStore {
    pub fn open(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(CACHE_FILE);
        let map = match std::fs::read_to_string(&path) {
            Ok(t) if !t.trim().is_empty() => serde_json::from_str(&t)
                .map_err(|e| JmError::Io(format!("{}: {e}", path.display())))?,
            _ => BTreeMap::new(),
        };
        Ok(Self {
            path,
            map: Mutex::new(map),
            fresh: Mutex::new(BTreeMap::new()),
        })
    }

    /// The store named by the environment, if any.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CACHE_ENV) {
            Some(d) if !d.is_empty() => Self::open(PathBuf::from(d)).map(Some),
            _ => Ok(None),
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, ms: &MassSystem, h: f64, x: &[f64], y: &[f64], opts: &ActionOptions) -> Option<PhiSummary> {
        self.map.lock().unwrap().get(&key(ms, h, x, y, opts)).cloned()
    }

    pub fn insert(&self, ms: &MassSystem, h: f64, x: &[f64], y: &[f64], opts: &ActionOptions, v: PhiSummary) {
        let k = key(ms, h, x, y, opts);
        self.map.lock().unwrap().insert(k.clone(), v.clone());
        self.fresh.lock().unwrap().insert(k, v);
    }

    /// Merges new entries into the file under an exclusive lock, so that
    /// concurrent runs do not drop each other's values.
    pub fn save(&self) -> Result<()> {
        let fresh = self.fresh.lock().unwrap();
        if fresh.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&self.path)?;
        f.lock()?;
        let mut text = String::new();
        f.read_to_string(&mut text)?;
        let mut on_disk: BTreeMap<String, PhiSummary> = if text.trim().is_empty() {
            BTreeMap::new()
        } else {
            serde_json::from_str(&text).map_err(|e| JmError::Io(e.to_string()))?
        };
        on_disk.extend(fresh.iter().map(|(k, v)| (k.clone(), v.clone())));
        let body = serde_json::to_string(&on_disk).map_err(|e| JmError::Io(e.to_string()))?;
        f.seek(SeekFrom::Start(0))?;
        f.set_len(0)?;
        f.write_all(body.as_bytes())?;
        f.flush()?;
        f.unlock()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let ms = MassSystem::new(vec![1.0, 1.0], 2).unwrap();
        let o = ActionOptions::default();
        let (x, y) = ([-1.0, 0.0, 1.0, 0.0], [-2.0, 0.0, 2.0, 0.0]);
        let v = PhiSummary {
            value: 1.5,
            t_star: 2.0,
            status: MinimizeStatus::Converged,
            segments: 128,
            gradient_norm: 1e-10,
            polished: true,
        };
        let s = PhiStore::open(dir.path().to_path_buf()).unwrap();
        assert!(s.get(&ms, 0.5, &x, &y, &o).is_none());
        s.insert(&ms, 0.5, &x, &y, &o, v.clone());
        s.save().unwrap();
        let back = PhiStore::open(dir.path().to_path_buf()).unwrap();
        assert_eq!(back.get(&ms, 0.5, &x, &y, &o), Some(v));
        assert!(back.get(&ms, 0.25, &x, &y, &o).is_none());
    }
}

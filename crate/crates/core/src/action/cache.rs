use std::collections::HashMap;
use std::sync::RwLock;

use super::potential::{phi_free, ActionOptions};
use crate::error::Result;
use crate::model::MassSystem;

type Key = (Vec<u64>, Vec<u64>, u64);

/// Shared memo of free-time potential values keyed by the exact bits of the
/// endpoints and energy. One cache belongs to one mass system and option set.
#[derive(Debug, Default)]
pub struct PhiCache {
    map: RwLock<HashMap<Key, f64>>,
}

fn key(x: &[f64], y: &[f64], h: f64) -> Key {
    (
        x.iter().map(|v| v.to_bits()).collect(),
        y.iter().map(|v| v.to_bits()).collect(),
        h.to_bits(),
    )
}

impl PhiCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, x: &[f64], y: &[f64], h: f64) -> Option<f64> {
        self.map.read().unwrap().get(&key(x, y, h)).copied()
    }

    /// `phi_h(x, y)`, computed once.
    pub fn phi(
        &self,
        ms: &MassSystem,
        h: f64,
        x: &[f64],
        y: &[f64],
        opts: &ActionOptions,
    ) -> Result<f64> {
        if let Some(v) = self.get(x, y, h) {
            return Ok(v);
        }
        let v = phi_free(ms, h, x, y, opts)?.value;
        self.map
            .write()
            .unwrap()
            .entry(key(x, y, h))
            .or_insert(v);
        Ok(v)
    }
}

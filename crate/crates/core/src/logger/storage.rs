//! In-memory file system with open-handle accounting.

use std::collections::{BTreeMap, BTreeSet};

use super::SimFault;

#[derive(Debug, Clone, Default)]
pub struct Storage {
    files: BTreeMap<String, Vec<u8>>,
    open: BTreeSet<String>,
    limit: usize,
    max_open: usize,
}

impl Storage {
    pub fn new(limit: usize) -> Self {
        Self {
            limit,
            ..Self::default()
        }
    }

    pub fn open(&mut self, name: &str) -> Result<(), SimFault> {
        if self.open.contains(name) {
            return Ok(());
        }
        if self.open.len() >= self.limit {
            return Err(SimFault::TooManyOpenFiles {
                limit: self.limit,
                requested: name.to_string(),
                open: self.open.iter().cloned().collect(),
            });
        }
        self.open.insert(name.to_string());
        self.max_open = self.max_open.max(self.open.len());
        self.files.entry(name.to_string()).or_default();
        Ok(())
    }

    pub fn append(&mut self, name: &str, bytes: &[u8]) {
        debug_assert!(self.open.contains(name), "write to closed file {name}");
        self.files.entry(name.to_string()).or_default().extend_from_slice(bytes);
    }

    /// Replaces the file body (used for writers that back-patch headers).
    pub fn replace(&mut self, name: &str, bytes: Vec<u8>) {
        debug_assert!(self.open.contains(name), "write to closed file {name}");
        self.files.insert(name.to_string(), bytes);
    }

    pub fn close(&mut self, name: &str) {
        self.open.remove(name);
    }

    pub fn exists(&self, name: &str) -> bool {
        self.files.contains_key(name)
    }

    pub fn open_count(&self) -> usize {
        self.open.len()
    }

    pub fn max_open(&self) -> usize {
        self.max_open
    }

    pub fn into_files(self) -> BTreeMap<String, Vec<u8>> {
        self.files
    }
}

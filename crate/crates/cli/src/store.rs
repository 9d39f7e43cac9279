//! Single-file event store: one sealed event per line, append-only.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rcp_core::config::EngineConfig;
use rcp_core::engine::Engine;

use crate::CliError;

pub struct Store {
    path: PathBuf,
    file: File,
    pub engine: Engine,
    persisted: usize,
}

impl Store {
    /// Opens and replays the store. Writers take an exclusive advisory
    /// lock and create the file if missing; readers share the lock.
    pub fn open(path: &Path, config: EngineConfig, write: bool) -> Result<Store, CliError> {
        let io = |e: std::io::Error| CliError::Failed(format!("{}: {e}", path.display()));
        let mut file = if write {
            OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io)?
        } else {
            File::open(path).map_err(io)?
        };
        if write {
            file.lock().map_err(io)?;
        } else {
            file.lock_shared().map_err(io)?;
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        let engine = Engine::replay_bytes(config, &bytes)?;
        let persisted = engine.log().len();
        Ok(Store {
            path: path.to_path_buf(),
            file,
            engine,
            persisted,
        })
    }

    /// Raw bytes of a store without replaying it.
    pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
        let io = |e: std::io::Error| CliError::Failed(format!("{}: {e}", path.display()));
        let mut file = File::open(path).map_err(io)?;
        file.lock_shared().map_err(io)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io)?;
        Ok(bytes)
    }

    /// Appends events sealed since open.
    pub fn save(&mut self) -> Result<(), CliError> {
        let mut out = String::new();
        for event in &self.engine.log().events()[self.persisted..] {
            out.push_str(&event.to_line());
            out.push('\n');
        }
        if out.is_empty() {
            return Ok(());
        }
        let io = |e: std::io::Error| CliError::Failed(format!("{}: {e}", self.path.display()));
        self.file.write_all(out.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.persisted = self.engine.log().len();
        Ok(())
    }
}

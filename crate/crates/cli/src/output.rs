//! Failure-safe output tracking: every file a command creates is
//! registered here and removed again unless the command commits, so a
//! failed run never leaves partial artifacts behind.

use std::path::{Path, PathBuf};

pub struct OutputGuard {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        OutputGuard { paths: Vec::new(), committed: false }
    }

    pub fn register(&mut self, path: &Path) -> PathBuf {
        self.paths.push(path.to_path_buf());
        path.to_path_buf()
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for path in &self.paths {
            let _ = std::fs::remove_file(path);
        }
    }
}

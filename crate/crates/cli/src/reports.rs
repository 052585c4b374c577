//! CSV emission with provenance headers and failure cleanup.
//!
//! Every file starts with `# config-hash:` and `# version:` comment lines so
//! an archived report can be matched to the exact configuration that produced
//! it. The writer tracks everything it creates; if a command fails midway the
//! partial outputs are removed so a results directory is either complete or
//! absent.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Tracks files and directories created by one command run.
pub struct OutputSet {
    root: PathBuf,
    config_hash: String,
    created: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(root: &Path, canonical_config: &str) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        let mut hasher = Sha256::new();
        hasher.update(canonical_config.as_bytes());
        let config_hash = format!("{:x}", hasher.finalize());
        Ok(OutputSet {
            root: root.to_path_buf(),
            config_hash,
            created: Vec::new(),
        })
    }

    #[cfg(test)]
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn header(&self) -> String {
        format!(
            "# config-hash: {}\n# version: {}\n",
            self.config_hash,
            env!("CARGO_PKG_VERSION")
        )
    }

    /// Write a CSV file under the output root: provenance comments, a header
    /// row, then the data rows.
    pub fn csv<I>(&mut self, name: &str, columns: &[&str], rows: I) -> std::io::Result<PathBuf>
    where
        I: IntoIterator<Item = String>,
    {
        let path = self.root.join(name);
        let mut body = self.header();
        body.push_str(&columns.join(","));
        body.push('\n');
        for row in rows {
            body.push_str(&row);
            body.push('\n');
        }
        fs::write(&path, body)?;
        self.created.push(path.clone());
        Ok(path)
    }

    /// Reserve a subdirectory for artifacts written by library savers.
    pub fn subdir(&mut self, name: &str) -> std::io::Result<PathBuf> {
        let path = self.root.join(name);
        fs::create_dir_all(&path)?;
        self.created.push(path.clone());
        Ok(path)
    }

    /// Write a plain text file (run log) under the root.
    pub fn text(&mut self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, format!("{}{}", self.header(), contents))?;
        self.created.push(path.clone());
        Ok(path)
    }

    /// Remove everything created during this run, deepest entries last.
    pub fn cleanup(&self) {
        for path in self.created.iter().rev() {
            if path.is_dir() {
                let _ = fs::remove_dir_all(path);
            } else {
                let _ = fs::remove_file(path);
            }
        }
    }
}

/// Deterministic shortest-roundtrip formatting for a float cell.
pub fn cell(x: f64) -> String {
    format!("{x}")
}

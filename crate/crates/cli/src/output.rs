use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::Config;
use crate::CliError;

pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Out {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `name` through `f`.
    pub fn write<F>(&self, name: &str, f: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p)?);
        f(&mut w)?;
        w.flush()?;
        Ok(p)
    }

    /// JSON sidecar `<command>.json` with the resolved config and command results.
    pub fn sidecar<T: Serialize>(
        &self,
        command: &str,
        cfg: &Config,
        results: &T,
    ) -> Result<PathBuf, CliError> {
        let doc = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "results": serde_json::to_value(results).map_err(|e| CliError::Other(e.into()))?,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Other(e.into()))?;
        self.write(&format!("{command}.json"), |w| writeln!(w, "{text}"))
    }
}

/// A JSON object built from `(key, value)` pairs.
pub fn object<I: IntoIterator<Item = (&'static str, Value)>>(items: I) -> Value {
    Value::Object(items.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

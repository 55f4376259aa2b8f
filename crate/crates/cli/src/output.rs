use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::Failure;

/// Six significant digits for human-readable output.
pub fn sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&e) {
        format!("{x:.5e}")
    } else {
        format!("{x:.*}", (5 - e).max(0) as usize)
    }
}

pub fn opt_sig(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), sig)
}

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub code_version: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
}

/// Results directory of one run; every file written through it is listed in the manifest.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
    started: String,
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Output {
    pub fn create(dir: Option<PathBuf>, command: &str) -> Result<Self, Failure> {
        let dir = dir.unwrap_or_else(|| {
            PathBuf::from("results").join(format!("{command}-{}", chrono::Local::now().format("%Y%m%dT%H%M%S")))
        });
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Self { dir, files: Vec::new(), started: now() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| io(&p, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Invalid(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    /// Appends CSV rows, writing the header when the file is new.
    pub fn append_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<(), Failure> {
        let p = self.path(name);
        let fresh = !p.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&p).map_err(|e| io(&p, e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(header);
            text.push('\n');
        }
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        f.write_all(text.as_bytes()).map_err(|e| io(&p, e))
    }

    /// Writes `manifest.json` with checksums of everything written so far.
    pub fn finish(self, command: &str, parameters: serde_json::Value) -> Result<PathBuf, Failure> {
        let mut outputs = Vec::new();
        for name in &self.files {
            let p = self.dir.join(name);
            let bytes = fs::read(&p).map_err(|e| io(&p, e))?;
            outputs.push(OutputFile { path: name.clone(), sha256: hex::encode(Sha256::digest(&bytes)) });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            parameters,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: now(),
            outputs,
        };
        let p = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Invalid(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(|e| io(&p, e))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig(3.414213562), "3.41421");
        assert_eq!(sig(0.798247917), "0.798248");
        assert_eq!(sig(255.7476686), "255.748");
        assert_eq!(sig(160.0), "160.000");
        assert_eq!(sig(-0.5), "-0.500000");
        assert_eq!(sig(1.5e-7), "1.50000e-7");
        assert_eq!(sig(0.0), "0");
    }
}

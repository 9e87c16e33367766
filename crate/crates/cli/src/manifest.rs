//! Run manifests: the command, its effective parameters and the SHA-256 of
//! every file read or written. No timestamps, so reruns are byte-identical.

use std::fmt::{Display, Write as _};
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Manifest {
    lines: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    Ok(s)
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize) -> Self {
        Manifest {
            lines: vec![
                format!("tool=pidtc {}", env!("CARGO_PKG_VERSION")),
                format!("command={command}"),
                format!("seed={seed}"),
                format!("threads={threads}"),
            ],
        }
    }

    pub fn param(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("param.{key}={value}"));
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        let h = sha256_file(path)?;
        self.lines.push(format!("input.{}={h}", path.display()));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self> {
        let h = sha256_file(path)?;
        self.lines.push(format!("output.{}={h}", path.display()));
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}

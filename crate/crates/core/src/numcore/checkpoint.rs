//! Plain-text archive of named tensors.
//!
//! ```text
//! PIDTC-CKPT v1
//! <name> <ndims> <d1> <d2> ...
//! <values separated by spaces>
//! ...
//! END
//! ```
//!
//! Values use the shortest decimal form that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "PIDTC-CKPT v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("invalid tensor name {name:?}")));
        }
        if self.get(name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor name {name}")));
        }
        if !tensor.is_finite() {
            return Err(Error::Checkpoint(format!("tensor {name} has non-finite values")));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        for (name, t) in &self.entries {
            write!(out, "{name} {}", t.shape().len()).unwrap();
            for d in t.shape() {
                write!(out, " {d}").unwrap();
            }
            out.push('\n');
            for (i, v) in t.data().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out.push_str("END\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == CHECKPOINT_MAGIC => {}
            Some((n, _)) => return Err(Error::parse(n, format!("expected `{CHECKPOINT_MAGIC}`"))),
            None => return Err(Error::parse(1, "empty checkpoint")),
        }
        let mut ckpt = Checkpoint::new();
        loop {
            let Some((n, header)) = lines.next() else {
                return Err(Error::parse(text.lines().count(), "missing END"));
            };
            let header = header.trim();
            if header == "END" {
                return Ok(ckpt);
            }
            let mut parts = header.split_whitespace();
            let name = parts.next().ok_or_else(|| Error::parse(n, "empty header"))?;
            let ndims: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(n, "bad ndims"))?;
            let shape: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| Error::parse(n, format!("bad extent {s:?}"))))
                .collect::<Result<_>>()?;
            if shape.len() != ndims {
                return Err(Error::parse(n, format!("expected {ndims} extents, got {}", shape.len())));
            }
            let (vn, values) = lines.next().ok_or_else(|| Error::parse(n + 1, "missing values"))?;
            let data: Vec<f64> = values
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::parse(vn, format!("bad value {s:?}"))))
                .collect::<Result<_>>()?;
            let tensor = Tensor::new(shape, data).map_err(|e| Error::parse(vn, e.to_string()))?;
            ckpt.push(name, tensor).map_err(|e| Error::parse(n, e.to_string()))?;
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_layout() {
        let mut c = Checkpoint::new();
        c.push("w", Tensor::matrix(2, 2, vec![1.0, 0.1, -2.5, 1e-300]).unwrap()).unwrap();
        c.push("b", Tensor::new(vec![3], vec![0.0, 1.0, 2.0]).unwrap()).unwrap();
        let text = c.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "PIDTC-CKPT v1");
        assert_eq!(lines[1], "w 2 2 2");
        assert_eq!(lines[3], "b 1 3");
        assert_eq!(lines[4], "0.0 1.0 2.0");
        assert_eq!(*lines.last().unwrap(), "END");
        assert_eq!(Checkpoint::from_text(&text).unwrap(), c);
    }

    #[test]
    fn rejects_duplicates_and_bad_files() {
        let mut c = Checkpoint::new();
        c.push("a", Tensor::scalar(1.0)).unwrap();
        assert!(c.push("a", Tensor::scalar(2.0)).is_err());
        assert!(c.push("has space", Tensor::scalar(2.0)).is_err());
        assert!(matches!(Checkpoint::from_text("nope\n"), Err(Error::Parse { line: 1, .. })));
        let err = Checkpoint::from_text("PIDTC-CKPT v1\nw 1 2\n1.0 x\nEND\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(Checkpoint::from_text("PIDTC-CKPT v1\nw 1 2\n1.0 2.0\n").is_err());
    }
}

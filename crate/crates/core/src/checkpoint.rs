//! Network checkpoint file format.
//!
//! One file: a text manifest (architecture descriptor plus tensor names and
//! shapes) terminated by an `end` line, followed by little-endian 32-bit
//! float blobs, one per tensor, in manifest order.

use std::fs;
use std::path::Path;

use crate::error::{Result, SdrError};

const MAGIC: &str = "SDRCKPT 1";

#[derive(Debug, Clone)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Serialized parameters plus architecture descriptor for a classifier or
/// inpainter. Plain data: safe to share across threads and rebuild models
/// from on each.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub arch: Vec<(String, String)>,
    pub tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Checkpoint {
        Checkpoint {
            kind: kind.to_string(),
            arch: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn set_arch(&mut self, key: &str, value: impl ToString) {
        self.arch.push((key.to_string(), value.to_string()));
    }

    pub fn arch_get(&self, key: &str) -> Result<&str> {
        self.arch
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| SdrError::Input(format!("checkpoint missing arch key '{}'", key)))
    }

    pub fn arch_usize(&self, key: &str) -> Result<usize> {
        self.arch_get(key)?
            .parse()
            .map_err(|_| SdrError::Input(format!("checkpoint arch key '{}' is not an integer", key)))
    }

    pub fn push_tensor(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(TensorEntry {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| SdrError::Input(format!("checkpoint missing tensor '{}'", name)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        header.push_str(&format!("kind {}\n", self.kind));
        for (k, v) in &self.arch {
            header.push_str(&format!("arch {} {}\n", k, v));
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            header.push_str(&format!("tensor {} {}\n", t.name, dims.join("x")));
        }
        header.push_str("end\n");

        let mut bytes = header.into_bytes();
        for t in &self.tensors {
            bytes.reserve(t.data.len() * 4);
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| SdrError::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| SdrError::io(path.display().to_string(), e))?;
        let bad = |msg: &str| SdrError::Input(format!("{}: {}", path.display(), msg));

        // Header is ASCII up to and including the "end\n" line.
        let end_marker = b"\nend\n";
        let end_pos = bytes
            .windows(end_marker.len())
            .position(|w| w == end_marker)
            .ok_or_else(|| bad("missing manifest terminator"))?;
        let header = std::str::from_utf8(&bytes[..end_pos])
            .map_err(|_| bad("manifest is not valid UTF-8"))?;
        let mut blob = &bytes[end_pos + end_marker.len()..];

        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let mut ckpt = Checkpoint::new("");
        for line in lines {
            let mut parts = line.splitn(3, ' ');
            match parts.next() {
                Some("kind") => {
                    ckpt.kind = parts.next().ok_or_else(|| bad("kind line broken"))?.to_string();
                }
                Some("arch") => {
                    let k = parts.next().ok_or_else(|| bad("arch line broken"))?;
                    let v = parts.next().ok_or_else(|| bad("arch line broken"))?;
                    ckpt.arch.push((k.to_string(), v.to_string()));
                }
                Some("tensor") => {
                    let name = parts.next().ok_or_else(|| bad("tensor line broken"))?;
                    let dims = parts.next().ok_or_else(|| bad("tensor line broken"))?;
                    let shape: Vec<usize> = dims
                        .split('x')
                        .map(|d| d.parse().map_err(|_| bad("bad tensor shape")))
                        .collect::<Result<_>>()?;
                    ckpt.tensors.push(TensorEntry {
                        name: name.to_string(),
                        shape,
                        data: Vec::new(),
                    });
                }
                Some(other) => return Err(bad(&format!("unknown manifest line '{}'", other))),
                None => {}
            }
        }

        for t in &mut ckpt.tensors {
            let n: usize = t.shape.iter().product();
            if blob.len() < n * 4 {
                return Err(bad(&format!("blob truncated at tensor '{}'", t.name)));
            }
            t.data = blob[..n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            blob = &blob[n * 4..];
        }
        if !blob.is_empty() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut c = Checkpoint::new("classifier");
        c.set_arch("stages", 4);
        c.set_arch("channels", "8,16,32,64");
        c.push_tensor("a.weight", vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 5.5, -6.0]);
        c.push_tensor("a.bias", vec![2], vec![0.25, -0.75]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        c.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.kind, "classifier");
        assert_eq!(back.arch_usize("stages").unwrap(), 4);
        assert_eq!(back.tensors.len(), 2);
        assert_eq!(back.tensor("a.weight").unwrap().data, c.tensors[0].data);
        assert_eq!(back.tensor("a.bias").unwrap().shape, vec![2]);
    }

    #[test]
    fn load_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}

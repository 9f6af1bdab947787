//! Checkpoint files: a `key=value` text header holding the `ModelSpec` and a
//! tensor index (`tensor=<name>\t<shape>\t<byte offset>`), terminated by an
//! `end` line, followed by the concatenated little-endian f32 blobs.

use std::fs;
use std::path::Path;

use super::{ModelSpec, ModelState, Tensor};
use crate::error::{Error, Result};

const MAGIC: &str = "gradeseg-checkpoint v1";

pub fn save_checkpoint(state: &ModelState<f32>, path: &Path) -> Result<()> {
    let spec = state.spec();
    let mut header = format!(
        "{MAGIC}\nin_channels={}\nn_classes={}\nbase_width={}\nn_levels={}\ndense_block_dilations={}\nseed={}\n",
        spec.in_channels,
        spec.n_classes,
        spec.base_width,
        spec.n_levels,
        join(&spec.dense_block_dilations),
        spec.seed
    );
    let mut blob = Vec::with_capacity(state.parameter_count() * 4);
    for t in state.parameters() {
        header.push_str(&format!("tensor={}\t{}\t{}\n", t.name, join(&t.shape), blob.len()));
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    bytes.extend_from_slice(&blob);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let marker = b"\nend\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::format("checkpoint header", "missing end marker"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::format("checkpoint header", "not UTF-8"))?;
    let blob = &bytes[split + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::format("checkpoint header", format!("expected {MAGIC:?}")));
    }
    let mut spec = ModelSpec::default();
    let mut index = Vec::new();
    for line in lines {
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::format("checkpoint header", format!("bad line {line:?}")))?;
        let num = |v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::format(format!("checkpoint.{key}"), format!("invalid value {v:?}")))
        };
        match key {
            "in_channels" => spec.in_channels = num(value)? as usize,
            "n_classes" => spec.n_classes = num(value)? as usize,
            "base_width" => spec.base_width = num(value)? as usize,
            "n_levels" => spec.n_levels = num(value)? as usize,
            "seed" => spec.seed = num(value)?,
            "dense_block_dilations" => {
                spec.dense_block_dilations =
                    value.split(',').map(|v| num(v).map(|n| n as usize)).collect::<Result<_>>()?
            }
            "tensor" => {
                let parts: Vec<&str> = value.split('\t').collect();
                let [name, shape, offset] = parts[..] else {
                    return Err(Error::format("checkpoint.tensor", format!("bad entry {value:?}")));
                };
                let shape: Vec<usize> = shape.split(',').map(|v| num(v).map(|n| n as usize)).collect::<Result<_>>()?;
                index.push((name.to_string(), shape, num(offset)? as usize));
            }
            other => return Err(Error::format("checkpoint header", format!("unknown key {other:?}"))),
        }
    }
    let mut tensors = Vec::with_capacity(index.len());
    for (name, shape, offset) in index {
        let len: usize = shape.iter().product();
        let end = offset + len * 4;
        let raw = blob.get(offset..end).ok_or_else(|| {
            Error::format(format!("checkpoint.{name}"), format!("blob range {offset}..{end} out of bounds"))
        })?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        tensors.push(Tensor { name, shape, data });
    }
    ModelState::from_parameters(&spec, tensors)
}

fn join(values: &[usize]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch_1.ckpt");
        let spec = ModelSpec { in_channels: 5, base_width: 3, seed: 11, ..ModelSpec::default() };
        let state = init_model(&spec).unwrap();
        save_checkpoint(&state, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), state);
        let text = fs::read(&path).unwrap();
        let header = String::from_utf8_lossy(&text[..200]);
        assert!(header.starts_with("gradeseg-checkpoint v1\nin_channels=5\n"));
        assert!(header.contains("tensor=stem.weight\t3,5,3,3\t0\n"));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&init_model(&ModelSpec::default()).unwrap(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("head.bias"), "{err}");
    }
}

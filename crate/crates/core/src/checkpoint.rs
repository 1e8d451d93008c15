//! Model checkpoints: a JSON manifest next to a raw little-endian f64 payload.
//!
//! The manifest lists every tensor in order as `(name, shape, offset)` where
//! `offset` counts f64 values into the payload. Batch-norm running statistics are
//! stored as extra tensors named `norm<i>.running_mean` / `norm<i>.running_var`.

use crate::error::{Error, Result};
use crate::spnet::{ModelConfig, SpNetModel};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FORMAT: &str = "spnet-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    /// Payload file name, relative to the manifest.
    pub payload: String,
    pub tensors: Vec<TensorEntry>,
    /// BN update counters, keyed by norm index.
    #[serde(default)]
    pub running_updates: Vec<(usize, u64)>,
}

fn payload_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn flatten(model: &SpNetModel) -> (Vec<TensorEntry>, Vec<f64>, Vec<(usize, u64)>) {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[f64]| {
        entries.push(TensorEntry { name, shape, offset: data.len() });
        data.extend_from_slice(values);
    };
    for p in model.store.iter() {
        push(p.name.clone(), p.value.shape().to_vec(), p.value.data());
    }
    let mut updates = Vec::new();
    for (i, n) in model.norms.iter().enumerate() {
        if let Some(r) = &n.running {
            push(format!("norm{i}.running_mean"), vec![r.mean.len()], &r.mean);
            push(format!("norm{i}.running_var"), vec![r.var.len()], &r.var);
            updates.push((i, r.updates));
        }
    }
    (entries, data, updates)
}

/// Write `<path>` (manifest) and `<path>.bin` (payload, `.bin` replacing any extension).
pub fn save(model: &SpNetModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bin = payload_path(path);
    let (tensors, data, running_updates) = flatten(model);
    let mut bytes = Vec::with_capacity(8 * data.len());
    for v in &data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bin, bytes)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        config: model.config.clone(),
        payload: bin.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
        tensors,
        running_updates,
    };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if m.format != FORMAT {
        return Err(Error::Checkpoint(format!("unknown format {:?}", m.format)));
    }
    Ok(m)
}

/// Rebuild the model described by a checkpoint and restore every tensor bit-exactly.
pub fn load(path: impl AsRef<Path>) -> Result<SpNetModel> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let bin = path.parent().unwrap_or(Path::new(".")).join(&manifest.payload);
    let bytes = std::fs::read(&bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("payload length {} is not a multiple of 8", bytes.len())));
    }
    let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();

    let mut model = SpNetModel::build(manifest.config.clone())?;
    let (expected, _, _) = flatten(&model);
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} tensors, model expects {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let slice = |e: &TensorEntry| -> Result<&[f64]> {
        let len: usize = e.shape.iter().product();
        data.get(e.offset..e.offset + len)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past the payload", e.name)))
    };
    for (want, got) in expected.iter().zip(&manifest.tensors) {
        if want.name != got.name || want.shape != got.shape {
            return Err(Error::Checkpoint(format!(
                "expected {} {:?}, found {} {:?}",
                want.name, want.shape, got.name, got.shape
            )));
        }
    }
    let mut entries = manifest.tensors.iter();
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let e = entries.next().expect("length checked");
        model.store.get_mut(id).data_mut().copy_from_slice(slice(e)?);
    }
    for (i, n) in model.norms.iter_mut().enumerate() {
        if let Some(r) = &mut n.running {
            let m = entries.next().expect("length checked");
            r.mean.copy_from_slice(slice(m)?);
            let v = entries.next().expect("length checked");
            r.var.copy_from_slice(slice(v)?);
            r.updates = manifest.running_updates.iter().find(|(k, _)| *k == i).map_or(0, |(_, u)| *u);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::{BatchStats, NormKind};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = SpNetModel::new(ModelConfig::micro(), 17).unwrap();
        save(&model, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, model);
        for (a, b) in model.store.iter().zip(back.store.iter()) {
            assert!(a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn running_stats_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bn.json");
        let mut model = SpNetModel::new(ModelConfig::micro().with_norm(NormKind::Bn), 3).unwrap();
        let c = model.norms[0].channels;
        model.apply_batch_stats(&[(0, BatchStats { mean: vec![0.1; c], var: vec![2.0 / 3.0; c] })]);
        save(&model, &path).unwrap();
        assert_eq!(load(&path).unwrap(), model);
    }

    #[test]
    fn corrupt_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save(&SpNetModel::new(ModelConfig::micro(), 1).unwrap(), &path).unwrap();
        let bin = dir.path().join("m.bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&bin, &bytes).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
        assert!(matches!(load(dir.path().join("missing.json")), Err(Error::Io(_))));
    }
}

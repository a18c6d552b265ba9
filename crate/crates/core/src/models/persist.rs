//! Model container: `SALAUD01`, little-endian `u64` manifest length, UTF-8
//! JSON manifest, then every parameter tensor as little-endian `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_network, ModelBundle, NetworkSpec, Provenance};
use crate::error::{Error, Result};
use crate::netcore::Tensor;

pub const MAGIC: &[u8; 8] = b"SALAUD01";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    layer_id: usize,
    role: TensorRole,
    shape: Vec<usize>,
    /// Offset into the blob, in `f32` elements.
    offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TensorRole {
    Weight,
    Bias,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: NetworkSpec,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
}

pub fn model_to_bytes(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    let mut offset = 0;
    for (layer_id, layer) in bundle.network.layers().iter().enumerate() {
        let Some((w, b)) = layer.parameters() else { continue };
        for (role, t) in [(TensorRole::Weight, w), (TensorRole::Bias, b)] {
            tensors.push(TensorEntry {
                layer_id,
                role,
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.len();
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let manifest = serde_json::to_vec(&Manifest {
        format_version: FORMAT_VERSION,
        spec: bundle.spec.clone(),
        provenance: bundle.provenance.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&blob);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing SALAUD01 header".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(Error::Format(format!(
            "manifest declares {len} bytes, only {} present",
            body.len()
        )));
    }
    let manifest: Manifest =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::Format(format!("manifest is not valid JSON: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let blob = &body[len..];
    if !blob.len().is_multiple_of(4) {
        return Err(Error::Format(
            "parameter blob is not a whole number of f32 values".into(),
        ));
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut network = build_network(&manifest.spec).map_err(|e| Error::Format(format!("bad spec: {e}")))?;
    let expected = network.parameterized_layers();
    if manifest.tensors.len() != 2 * expected.len() {
        return Err(Error::Format(format!(
            "manifest lists {} tensors, spec has {} parameterized layers",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut consumed = 0;
    for (pair, &layer_id) in manifest.tensors.chunks_exact(2).zip(&expected) {
        let (w, b) = network.layer_mut(layer_id).parameters_mut().unwrap();
        for (entry, (role, target)) in pair.iter().zip([(TensorRole::Weight, w), (TensorRole::Bias, b)]) {
            if entry.layer_id != layer_id || entry.role != role || entry.shape != target.shape() {
                return Err(Error::Format(format!(
                    "tensor entry {entry:?} disagrees with layer {layer_id} {role:?} {:?}",
                    target.shape()
                )));
            }
            let end = entry.offset + target.len();
            if entry.offset != consumed || end > floats.len() {
                return Err(Error::Format(format!(
                    "tensor for layer {layer_id} lies outside the blob"
                )));
            }
            *target = Tensor::new(entry.shape.clone(), floats[entry.offset..end].to_vec())
                .map_err(|e| Error::Format(format!("layer {layer_id}: {e}")))?;
            consumed = end;
        }
    }
    if consumed != floats.len() {
        return Err(Error::Format(format!(
            "blob holds {} values, manifest accounts for {consumed}",
            floats.len()
        )));
    }
    Ok(ModelBundle {
        spec: manifest.spec,
        network,
        provenance: manifest.provenance,
    })
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(bundle)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::randomize_layer;

    fn bundle() -> ModelBundle {
        let mut b = ModelBundle::initialized(NetworkSpec::toy(24, 4), "m0").unwrap();
        // give the biases non-zero content
        b.network = randomize_layer(&b.network, 0, 1).unwrap();
        b.provenance.train_seed = 42;
        b.provenance.subsample_id = Some(3);
        b
    }

    #[test]
    fn round_trip_is_exact() {
        let b = bundle();
        let bytes = model_to_bytes(&b).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(model_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn save_load_save_is_identical_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.salaud"), dir.path().join("b.salaud"));
        save_model(&bundle(), &p1).unwrap();
        save_model(&load_model(&p1).unwrap(), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let bytes = model_to_bytes(&bundle()).unwrap();
        let err = model_from_bytes(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(model_from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn tensor_count_mismatch_is_rejected() {
        let bytes = model_to_bytes(&bundle()).unwrap();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut manifest: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        manifest["tensors"].as_array_mut().unwrap().pop();
        let new_manifest = serde_json::to_vec(&manifest).unwrap();
        let mut forged = MAGIC.to_vec();
        forged.extend_from_slice(&(new_manifest.len() as u64).to_le_bytes());
        forged.extend_from_slice(&new_manifest);
        forged.extend_from_slice(&bytes[16 + len..]);
        assert!(matches!(model_from_bytes(&forged), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let bytes = model_to_bytes(&bundle()).unwrap();
        let text = String::from_utf8_lossy(&bytes[16..]).into_owned();
        assert!(text.starts_with("{\"format_version\":1"));
        let mut forged = bytes.clone();
        // format_version is the first manifest field
        forged[16 + "{\"format_version\":".len()] = b'7';
        assert!(matches!(model_from_bytes(&forged), Err(Error::Format(_))));
    }
}

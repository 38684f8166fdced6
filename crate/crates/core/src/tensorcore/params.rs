use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_mvt1_file, write_mvt1_file};
use super::{Tensor, TensorError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

/// Named `f32` tensors, stored on disk as one MVT1 file per tensor plus a
/// JSON manifest of names and shapes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>, TensorError> {
        self.tensors
            .get(name)
            .ok_or_else(|| TensorError::Param(format!("missing parameter {name}")))
    }

    /// Like [`ParamStore::get`] but also checks the shape.
    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> Result<Tensor<f32>, TensorError> {
        let t = self.get(name)?;
        if t.shape() != shape {
            return Err(TensorError::Param(format!(
                "{name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t.clone())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<f32>)> {
        self.tensors.iter_mut()
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<(), TensorError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let file = format!("{name}.mvt");
            write_mvt1_file(t, dir.join(&file))?;
            manifest.push(ManifestEntry {
                name: name.clone(),
                file,
                shape: t.shape().to_vec(),
            });
        }
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| TensorError::Param(e.to_string()))?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, TensorError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| TensorError::Param(e.to_string()))?;
        let mut store = Self::new();
        for entry in manifest {
            let t: Tensor<f32> = read_mvt1_file(dir.join(&entry.file))?;
            if t.shape() != entry.shape.as_slice() {
                return Err(TensorError::Param(format!(
                    "{} holds shape {:?}, manifest says {:?}",
                    entry.file,
                    t.shape(),
                    entry.shape
                )));
            }
            store.insert(entry.name, t);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert("level1.w_q", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.5));
        store.insert("head.b", Tensor::from_fn(&[3], |i| -(i as f32)));
        store.save_dir(dir.path()).unwrap();
        let back = ParamStore::load_dir(dir.path()).unwrap();
        assert_eq!(back, store);
        assert!(back.get_shaped("head.b", &[4]).is_err());
        assert!(back.get("nope").is_err());
    }

    #[test]
    fn manifest_shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ParamStore::new();
        store.insert("a", Tensor::<f32>::zeros(&[2, 2]));
        store.save_dir(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut manifest: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        manifest[0].shape = vec![4, 1];
        std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(ParamStore::load_dir(dir.path()).is_err());
    }
}

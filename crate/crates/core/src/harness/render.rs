use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{create_dir, io_err, write_json, ExperimentConfig, HarnessError, Result};
use crate::imageio::{write_pfm_file, write_ppm_file};
use crate::synthscene::{make_dataset, Scene};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewFiles {
    pub view: String,
    /// Paths relative to the dataset directory.
    pub color: String,
    pub depth: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub index: usize,
    pub seed: u64,
    pub scene: Scene,
    pub views: Vec<ViewFiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub resolution: usize,
    pub ortho_scale: f64,
    pub dataset_seed: u64,
    pub scenes: Vec<SceneEntry>,
}

impl RenderManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn files(&self) -> Vec<String> {
        self.scenes
            .iter()
            .flat_map(|s| s.views.iter().flat_map(|v| [v.color.clone(), v.depth.clone()]))
            .collect()
    }
}

/// Renders the training dataset of `cfg` into `out_dir`: one directory per
/// scene holding `<view>.ppm` color and `<view>.pfm` depth, plus a manifest.
pub fn cmd_render(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RenderManifest> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let samples = make_dataset(cfg.n_scenes, cfg.dataset_seed, cfg.resolution, cfg.ortho_scale);
    let mut scenes = Vec::with_capacity(samples.len());
    for (index, sample) in samples.iter().enumerate() {
        let dir = format!("scene_{index:03}");
        create_dir(&out_dir.join(&dir))?;
        let mut views = Vec::new();
        for view in &sample.views {
            let name = view.camera.view_id.name();
            let files = ViewFiles {
                view: name.to_string(),
                color: format!("{dir}/{name}.ppm"),
                depth: format!("{dir}/{name}.pfm"),
            };
            write_ppm_file(&view.color, out_dir.join(&files.color))?;
            write_pfm_file(&view.depth, out_dir.join(&files.depth))?;
            views.push(files);
        }
        scenes.push(SceneEntry {
            index,
            seed: sample.seed,
            scene: sample.scene.clone(),
            views,
        });
    }
    let manifest = RenderManifest {
        resolution: cfg.resolution,
        ortho_scale: cfg.ortho_scale,
        dataset_seed: cfg.dataset_seed,
        scenes,
    };
    write_json(&out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

fn scan(dir: &Path, root: &Path, out: &mut BTreeSet<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path: PathBuf = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            scan(&path, root, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("scanned below root");
            out.insert(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

/// Checks that the manifest and the directory contents agree exactly.
pub fn verify_render_dir(dir: &Path) -> Result<RenderManifest> {
    let manifest = RenderManifest::load(dir)?;
    let mut on_disk = BTreeSet::new();
    scan(dir, dir, &mut on_disk)?;
    on_disk.remove(MANIFEST_NAME);
    let listed: BTreeSet<String> = manifest.files().into_iter().collect();
    if listed != on_disk {
        let missing: Vec<_> = listed.difference(&on_disk).collect();
        let extra: Vec<_> = on_disk.difference(&listed).collect();
        return Err(HarnessError::Dataset(format!("missing {missing:?}, unlisted {extra:?}")));
    }
    Ok(manifest)
}

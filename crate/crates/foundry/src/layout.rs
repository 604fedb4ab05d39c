//! Input tree layout: `<input_root>/cameras/<camera_id>/` holds the frames
//! (`<image_id>.png`), one detection sidecar per frame (`<image_id>.det`)
//! and the camera's `embeddings.amem`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use patchfoundry_core::gate::{DetectionSidecar, LoadedImage};
use patchfoundry_core::GrayImage;

use crate::formats::{parse_sidecar, read_amem, EmbeddingFile};
use crate::imageio::{is_image_path, load_gray};

pub const CAMERAS_DIR: &str = "cameras";
pub const EMBEDDINGS_FILE: &str = "embeddings.amem";
pub const SIDECAR_EXT: &str = "det";

#[derive(Debug, Clone)]
pub struct CameraDir {
    pub camera_id: String,
    pub dir: PathBuf,
    /// Image id (file stem) to path, ordered by id.
    pub images: BTreeMap<String, PathBuf>,
}

impl CameraDir {
    pub fn scan(dir: &Path) -> Result<Self> {
        let camera_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .context("camera directory name is not UTF-8")?
            .to_string();
        let mut images = BTreeMap::new();
        for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_file() && is_image_path(&path) {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .context("image name is not UTF-8")?
                    .to_string();
                if let Some(prev) = images.insert(stem.clone(), path.clone()) {
                    anyhow::bail!(
                        "image id {stem} is ambiguous: {} and {}",
                        prev.display(),
                        path.display()
                    );
                }
            }
        }
        Ok(Self {
            camera_id,
            dir: dir.to_path_buf(),
            images,
        })
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.images.keys().cloned().collect()
    }

    pub fn image_path(&self, id: &str) -> Result<&Path> {
        self.images
            .get(id)
            .map(PathBuf::as_path)
            .with_context(|| format!("camera {} has no image {id}", self.camera_id))
    }

    pub fn load_image(&self, id: &str) -> Result<GrayImage> {
        load_gray(self.image_path(id)?)
    }

    pub fn sidecar_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{SIDECAR_EXT}"))
    }

    /// `Ok(None)` when the sidecar does not exist.
    pub fn load_sidecar(&self, id: &str) -> Result<Option<DetectionSidecar>> {
        let path = self.sidecar_path(id);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        Ok(Some(parse_sidecar(id, &text).with_context(|| format!("parsing {}", path.display()))?))
    }

    /// Image plus clipped sidecar, in the shape camera selection expects.
    /// An unreadable sidecar is reported like a missing one.
    pub fn load_for_gate(&self, id: &str) -> LoadedImage {
        let img = self.load_image(id).map_err(|e| format!("{e:#}"))?;
        let sidecar = match self.load_sidecar(id) {
            Ok(s) => s.map(|mut s| {
                s.clip_to(img.width(), img.height());
                s
            }),
            Err(e) => {
                log::warn!("{}/{id}: {e:#}", self.camera_id);
                None
            }
        };
        Ok((img, sidecar))
    }

    pub fn embeddings(&self) -> Result<EmbeddingFile> {
        let path = self.dir.join(EMBEDDINGS_FILE);
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        read_amem(&mut BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
    }
}

/// All camera directories under the input root, ordered by camera id.
pub fn list_cameras(input_root: &Path) -> Result<Vec<CameraDir>> {
    let root = input_root.join(CAMERAS_DIR);
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
        .with_context(|| format!("listing {}", root.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    dirs.iter().map(|d| CameraDir::scan(d)).collect()
}

pub fn find_camera(input_root: &Path, camera_id: &str) -> Result<CameraDir> {
    CameraDir::scan(&input_root.join(CAMERAS_DIR).join(camera_id))
}

/// Every regular file under the cameras directory, relative to the input
/// root with `/` separators, sorted.
pub fn input_files(input_root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![input_root.join(CAMERAS_DIR)];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(input_root)?;
                let parts: Vec<&str> = rel
                    .components()
                    .map(|c| c.as_os_str().to_str().context("non UTF-8 path"))
                    .collect::<Result<_>>()?;
                out.push(parts.join("/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

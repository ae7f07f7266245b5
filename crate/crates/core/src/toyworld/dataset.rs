//! Clip collections: deterministic generation, static biasing, disk layout.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::diffusion::Video;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, hash_f64_slice, salt};
use crate::Tensor;

use super::scene::{generate_clip_with, GroundTruth, SceneSpec};

/// One clip with its provenance. `truth` is present on freshly generated
/// clips and absent after a disk round trip, which stores frames only.
#[derive(Debug, Clone)]
pub struct Clip {
    pub id: u64,
    pub video: Video,
    pub truth: Option<GroundTruth>,
    pub is_static: bool,
}

impl Clip {
    /// Content hash of the frames, for cheap identity checks across runs.
    pub fn content_hash(&self) -> u64 {
        hash_f64_slice(self.video.frames().data())
    }
}

/// An ordered, deterministic collection of clips.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn content_hashes(&self) -> Vec<u64> {
        self.clips.iter().map(Clip::content_hash).collect()
    }

    /// Splits indices into train and validation sets. Validation takes
    /// `val_fraction` of the clips, spread evenly over the collection; the
    /// two sets are disjoint and together cover every clip.
    pub fn train_val_split(&self, val_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..=1.0).contains(&val_fraction) {
            return Err(Error::config(format!(
                "val_fraction {val_fraction} must lie inside [0, 1]"
            )));
        }
        let n = self.len();
        let n_val = ((n as f64) * val_fraction).round() as usize;
        let val: Vec<usize> = (0..n_val).map(|k| k * n / n_val.max(1)).collect();
        let train: Vec<usize> = (0..n).filter(|i| !val.contains(i)).collect();
        Ok((train, val))
    }
}

/// Generates `n_clips` scenes, each from its own substream of `seed`, so the
/// result is identical regardless of how the work is scheduled.
pub fn make_dataset(spec: &SceneSpec, n_clips: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let clips = (0..n_clips as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = derive_rng(seed, &[salt::DATASET, id]);
            let (video, truth) = generate_clip_with(spec, &mut rng)?;
            Ok(Clip {
                id,
                video,
                truth: Some(truth),
                is_static: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { clips })
}

/// Freezes each clip to its first frame with probability `freeze_prob`,
/// marking it static and zeroing its ground-truth motion. The per-clip
/// decision depends only on (seed, clip id).
pub fn static_bias(dataset: &Dataset, freeze_prob: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&freeze_prob) {
        return Err(Error::config(format!(
            "freeze_prob {freeze_prob} must lie inside [0, 1]"
        )));
    }
    let clips = dataset
        .clips
        .iter()
        .map(|clip| {
            let mut rng = derive_rng(seed, &[salt::STATIC_BIAS, clip.id]);
            if rng.gen::<f64>() >= freeze_prob {
                return Ok(clip.clone());
            }
            let (t, h, w) = (clip.video.t(), clip.video.h(), clip.video.w());
            let frozen: Vec<f64> = clip
                .video
                .frame(0)
                .iter()
                .copied()
                .cycle()
                .take(t * h * w)
                .collect();
            let video = Video::new(Tensor::from_vec(&[t, h, w], frozen)?)?;
            let truth = clip.truth.as_ref().map(|gt| {
                let mut gt = gt.clone();
                for obj in &mut gt.objects {
                    obj.velocity = [0.0, 0.0];
                }
                gt
            });
            Ok(Clip {
                id: clip.id,
                video,
                truth,
                is_static: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { clips })
}

const CLIP_FORMAT_VERSION: u32 = 1;
const INDEX_FILE: &str = "index.csv";

fn clip_file_name(id: u64) -> String {
    format!("clip-{id:05}.bin")
}

/// Writes the dataset as one frame file per clip plus an index listing clip
/// ids and static flags. Frames are stored as little-endian f32 after a
/// (height, width, frames, version) u32 header; ground truth is not stored.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::from("id,static\n");
    for clip in &dataset.clips {
        index.push_str(&format!("{},{}\n", clip.id, u8::from(clip.is_static)));
        save_clip_file(&dir.join(clip_file_name(clip.id)), &clip.video)?;
    }
    fs::write(dir.join(INDEX_FILE), index)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`]. Frame values round-trip
/// through f32; ground truth comes back as `None`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index_path = dir.join(INDEX_FILE);
    if !index_path.is_file() {
        return Err(Error::missing_artifact(
            format!("dataset index {}", index_path.display()),
            "generate-data",
        ));
    }
    let index = fs::read_to_string(&index_path)?;
    let mut clips = Vec::new();
    for line in index.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (id_text, static_text) = line.split_once(',').ok_or_else(|| {
            Error::contract(format!("malformed index line {line:?} in {INDEX_FILE}"))
        })?;
        let id: u64 = id_text
            .trim()
            .parse()
            .map_err(|_| Error::contract(format!("bad clip id {id_text:?} in {INDEX_FILE}")))?;
        let is_static = static_text.trim() == "1";
        let video = load_clip_file(&dir.join(clip_file_name(id)))?;
        clips.push(Clip {
            id,
            video,
            truth: None,
            is_static,
        });
    }
    Ok(Dataset { clips })
}

fn save_clip_file(path: &Path, video: &Video) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for dim in [video.h(), video.w(), video.t()] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    out.write_all(&CLIP_FORMAT_VERSION.to_le_bytes())?;
    for &value in video.frames().data() {
        out.write_all(&(value as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn load_clip_file(path: &Path) -> Result<Video> {
    let mut input = BufReader::new(File::open(path)?);
    let mut word = [0u8; 4];
    let mut header = [0u32; 4];
    for slot in &mut header {
        input.read_exact(&mut word)?;
        *slot = u32::from_le_bytes(word);
    }
    let [h, w, t, version] = header.map(|x| x as usize);
    if version != CLIP_FORMAT_VERSION as usize {
        return Err(Error::contract(format!(
            "clip file {} has format version {version}, expected {CLIP_FORMAT_VERSION}",
            path.display()
        )));
    }
    let mut data = Vec::with_capacity(t * h * w);
    for _ in 0..t * h * w {
        input.read_exact(&mut word)?;
        data.push(f32::from_le_bytes(word) as f64);
    }
    Video::new(Tensor::from_vec(&[t, h, w], data)?)
}

/// Writes one grayscale frame as binary PGM, mapping [0, 1] to [0, 255].
pub fn write_pgm(path: &Path, frame: &[f64], height: usize, width: usize) -> Result<()> {
    if frame.len() != height * width {
        return Err(Error::dim(format!(
            "frame has {} values, expected {height}x{width}",
            frame.len()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = frame
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Dumps every frame of a video as `<stem>-t03.pgm` files and returns the
/// written paths.
pub fn export_pgm_frames(dir: &Path, video: &Video, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(video.t());
    for t in 0..video.t() {
        let path = dir.join(format!("{stem}-t{t:02}.pgm"));
        write_pgm(&path, video.frame(t), video.h(), video.w())?;
        paths.push(path);
    }
    Ok(paths)
}

//! Deterministic frame acquisition for multimodal calls.
//!
//! A source is either a directory of pre-extracted frames or a video file
//! that an external command splits into frames. Either way the decodable
//! images are sorted by file name and sampled uniformly.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::ImageFormat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::ContentPart;

pub const DEFAULT_FRAME_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSource {
    Directory(PathBuf),
    Video(PathBuf),
}

impl FrameSource {
    pub fn path(&self) -> &Path {
        match self {
            FrameSource::Directory(p) | FrameSource::Video(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub count: usize,
    pub strategy: SamplingStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Index into the sorted list of decodable frames.
    pub index: usize,
    pub bytes: Vec<u8>,
    pub media_type: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    pub source: PathBuf,
    pub sampling: Sampling,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn content_parts(&self) -> Vec<ContentPart> {
        self.frames
            .iter()
            .map(|f| ContentPart::image(f.media_type, f.bytes.clone()))
            .collect()
    }
}

/// `floor(i * available / count)` for `i in 0..count`.
///
/// With at least as many frames as requested the indices are distinct. With
/// fewer, every frame appears and the extra slots repeat the nearest lower
/// index, so the list stays nondecreasing.
pub fn uniform_indices(available: usize, count: usize) -> Vec<usize> {
    if available == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|i| ((i as u128 * available as u128) / count as u128) as usize)
        .collect()
}

/// Configuration for splitting video files into frames.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// Whitespace-separated command line with `{input}` and `{outdir}`
    /// placeholders, for example `ffmpeg -loglevel error -i {input} {outdir}/f%05d.png`.
    pub command: Option<String>,
}

pub fn sample_frames(source: &FrameSource, count: usize, extractor: &ExtractorConfig) -> Result<FrameSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("frame count must be positive".into()));
    }
    match source {
        FrameSource::Directory(dir) => sample_directory(dir, dir, count),
        FrameSource::Video(path) => {
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "video file not found"),
                ));
            }
            let template = extractor
                .command
                .as_deref()
                .ok_or_else(|| Error::Config("no extractor_command configured for video inputs".into()))?;
            let tmp = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            run_extractor(template, path, tmp.path())?;
            sample_directory(tmp.path(), path, count)
        }
    }
}

fn run_extractor(template: &str, input: &Path, outdir: &Path) -> Result<()> {
    let input_s = input.to_string_lossy();
    let outdir_s = outdir.to_string_lossy();
    let args: Vec<String> = template
        .split_whitespace()
        .map(|tok| tok.replace("{input}", &input_s).replace("{outdir}", &outdir_s))
        .collect();
    let (program, rest) = args
        .split_first()
        .ok_or_else(|| Error::Config("extractor_command is empty".into()))?;
    let output = Command::new(program)
        .args(rest)
        .output()
        .map_err(|e| Error::FrameExtraction {
            status: "spawn failed".into(),
            output: format!("{program}: {e}"),
        })?;
    if !output.status.success() {
        let mut text = String::from_utf8_lossy(&output.stdout).into_owned();
        text.push_str(&String::from_utf8_lossy(&output.stderr));
        return Err(Error::FrameExtraction {
            status: output.status.to_string(),
            output: text,
        });
    }
    Ok(())
}

fn media_type_for(path: &Path) -> Option<(&'static str, ImageFormat)> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "png" => Some(("image/png", ImageFormat::Png)),
        "jpg" | "jpeg" => Some(("image/jpeg", ImageFormat::Jpeg)),
        _ => None,
    }
}

fn decodable(bytes: &[u8], format: ImageFormat) -> bool {
    image::ImageReader::with_format(Cursor::new(bytes), format)
        .into_dimensions()
        .map(|(w, h)| w > 0 && h > 0)
        .unwrap_or(false)
}

fn sample_directory(dir: &Path, reported_source: &Path, count: usize) -> Result<FrameSet> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && media_type_for(p).is_some())
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut decoded: Vec<(Vec<u8>, &'static str)> = Vec::with_capacity(files.len());
    for path in &files {
        let (media_type, format) = media_type_for(path).expect("filtered above");
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if decodable(&bytes, format) {
            decoded.push((bytes, media_type));
        } else {
            log::warn!("skipping undecodable frame {}", path.display());
        }
    }
    if decoded.is_empty() {
        return Err(Error::EmptyVideo(reported_source.to_path_buf()));
    }
    let frames = uniform_indices(decoded.len(), count)
        .into_iter()
        .map(|index| Frame {
            index,
            bytes: decoded[index].0.clone(),
            media_type: decoded[index].1,
        })
        .collect();
    Ok(FrameSet {
        frames,
        source: reported_source.to_path_buf(),
        sampling: Sampling {
            count,
            strategy: SamplingStrategy::Uniform,
        },
    })
}

/// Writes `n` tiny solid-colour PNG frames named `frame_000.png`, ...
/// Used by fixtures and tests.
pub fn write_synthetic_frames(dir: &Path, n: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..n {
        let shade = (i * 37 % 256) as u8;
        let img = image::RgbImage::from_pixel(4, 4, image::Rgb([shade, 255 - shade, 128]));
        let path = dir.join(format!("frame_{i:03}.png"));
        img.save_with_format(&path, ImageFormat::Png)
            .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
    }
    Ok(())
}

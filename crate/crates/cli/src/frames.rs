//! 8-bit RGB PNG frames on disk, `[0, 1]` tensors in memory.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use rvf_core::Tensor;

use crate::error::{CliError, Result};

/// PNG files of `dir` in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

pub fn frame_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        CliError::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut t = Tensor::zeros(&[3, h, w]);
    let d = t.data_mut();
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            d[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Ok(t)
}

pub fn load_frame(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_png(&bytes, path)
}

/// Frames of `dir` with their file names; an empty directory is an error.
pub fn load_frames(dir: &Path) -> Result<Vec<(String, Tensor)>> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(CliError::EmptyCorpus(dir.to_path_buf()));
    }
    paths
        .iter()
        .map(|p| Ok((frame_name(p), load_frame(p)?)))
        .collect()
}

/// Rounds to 8 bits and encodes as PNG.
pub fn encode_png(t: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = t.chw()?;
    if c != 3 {
        return Err(rvf_core::Error::Dimension {
            op: "encode_png",
            lhs: t.shape().to_vec(),
            rhs: vec![3, h, w],
        }
        .into());
    }
    let d = t.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb(std::array::from_fn(|k| quantize(d[k * h * w + i])))
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| CliError::Image {
            path: PathBuf::from("<memory>"),
            reason: e.to_string(),
        })?;
    Ok(out.into_inner())
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `frames` as PNGs named by `names`; returns the encoded bytes of each.
pub fn save_frames(dir: &Path, names: &[String], frames: &[Tensor]) -> Result<Vec<Vec<u8>>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    names
        .iter()
        .zip(frames)
        .map(|(name, f)| {
            let bytes = encode_png(f)?;
            let path = dir.join(name);
            std::fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
            Ok(bytes)
        })
        .collect()
}

/// `frame_0000.png`, `frame_0001.png`, …
pub fn numbered_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("frame_{i:04}.png")).collect()
}

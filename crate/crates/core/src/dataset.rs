//! TUM RGB-D style sequences: `rgb.txt` / `depth.txt` indices, timestamp
//! association, 8-bit color images and 16-bit depth PNGs.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DepthMap, GrayImage, Intrinsics};

pub const DEFAULT_MAX_TIME_DIFF: f64 = 0.02;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{0}")]
    Decode(String),
    #[error("{path}: image is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    SizeMismatch {
        path: PathBuf,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("{path}: no rgb frame could be associated with a depth frame")]
    NoFrames { path: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameIndexEntry {
    pub timestamp: f64,
    pub path: PathBuf,
}

/// Parses an index file body: one `timestamp path` per line, `#` comments
/// and blank lines ignored. `origin` is only used in error messages.
pub fn parse_index(text: &str, origin: &Path) -> Result<Vec<FrameIndexEntry>, DatasetError> {
    let mut out: Vec<FrameIndexEntry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| DatasetError::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let mut parts = line.split_whitespace();
        let (Some(ts), Some(path)) = (parts.next(), parts.next()) else {
            return Err(err("expected `timestamp path`".into()));
        };
        let timestamp: f64 = ts
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| err(format!("bad timestamp {ts:?}")))?;
        if out.last().is_some_and(|p| timestamp < p.timestamp) {
            return Err(err("timestamps must be non-decreasing".into()));
        }
        out.push(FrameIndexEntry {
            timestamp,
            path: PathBuf::from(path),
        });
    }
    Ok(out)
}

pub fn read_index(path: &Path) -> Result<Vec<FrameIndexEntry>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_index(&text, path)
}

/// Greedy association in rgb order: each rgb entry takes the nearest depth
/// entry not yet taken, if it lies within `max_time_diff`. Ties go to the
/// earlier depth entry. Returns `(rgb index, depth index)` pairs.
pub fn associate(rgb: &[f64], depth: &[f64], max_time_diff: f64) -> Vec<(usize, usize)> {
    let mut taken = vec![false; depth.len()];
    let mut out = Vec::new();
    for (i, &t) in rgb.iter().enumerate() {
        let best = depth
            .iter()
            .enumerate()
            .filter(|&(j, &d)| !taken[j] && (d - t).abs() <= max_time_diff)
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()));
        if let Some((j, _)) = best {
            taken[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// `round(0.299 R + 0.587 G + 0.114 B)` per pixel of packed 8-bit RGB.
pub fn to_gray(width: usize, height: usize, rgb: &[u8]) -> Result<GrayImage, DatasetError> {
    if rgb.len() != width * height * 3 {
        return Err(DatasetError::Decode(format!(
            "rgb buffer has {} bytes, expected {}",
            rgb.len(),
            width * height * 3
        )));
    }
    let luma = rgb
        .chunks_exact(3)
        .map(|p| {
            let s = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((s + 500) / 1000).min(255) as u8
        })
        .collect();
    Ok(GrayImage::new(width, height, luma).expect("length checked"))
}

/// Decodes an 8-bit color or gray PNG to luma.
pub fn decode_gray_png(bytes: &[u8]) -> Result<GrayImage, DatasetError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| DatasetError::Decode(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => {
            Ok(GrayImage::new(w, h, g.into_raw()).expect("sized buffer"))
        }
        DynamicImage::ImageRgb8(rgb) => to_gray(w, h, rgb.as_raw()),
        DynamicImage::ImageRgba8(_) => to_gray(w, h, img.to_rgb8().as_raw()),
        other => Err(DatasetError::Decode(format!(
            "expected an 8-bit image, got {:?}",
            other.color()
        ))),
    }
}

/// Decodes a 16-bit single-channel PNG; meters = raw / `depth_scale`.
pub fn decode_depth_png(bytes: &[u8], depth_scale: f64) -> Result<DepthMap, DatasetError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| DatasetError::Decode(e.to_string()))?;
    let DynamicImage::ImageLuma16(raw) = img else {
        return Err(DatasetError::Decode(format!(
            "expected a 16-bit single-channel depth image, got {:?}",
            img.color()
        )));
    };
    let (w, h) = (raw.width() as usize, raw.height() as usize);
    let data = raw
        .into_raw()
        .into_iter()
        .map(|r| r as f64 / depth_scale)
        .collect();
    Ok(DepthMap::new(w, h, data).expect("non-negative finite"))
}

/// Encodes `depth` as raw = round(meters · `depth_scale`), saturating at
/// `u16::MAX`. Invalid pixels are written as 0.
pub fn encode_depth_png(depth: &DepthMap, depth_scale: f64) -> Vec<u8> {
    let raw: Vec<u16> = depth
        .data()
        .iter()
        .map(|&z| (z * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("sized buffer");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}

/// Encodes an 8-bit gray image as PNG.
pub fn encode_gray_png(img: &GrayImage) -> Vec<u8> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("sized buffer");
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma8(buf)
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}

/// An rgb frame with its associated depth map. The pipeline treats the
/// depth as the measurement available when the sensor fires, and as ground
/// truth otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociatedFrame {
    pub rgb_timestamp: f64,
    pub depth_timestamp: f64,
    pub image: GrayImage,
    pub depth: DepthMap,
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(io_err(path))
}

fn check_size(path: &Path, w: usize, h: usize, k: &Intrinsics) -> Result<(), DatasetError> {
    if w != k.width || h != k.height {
        return Err(DatasetError::SizeMismatch {
            path: path.to_path_buf(),
            got_w: w,
            got_h: h,
            want_w: k.width,
            want_h: k.height,
        });
    }
    Ok(())
}

fn image_err(path: &Path) -> impl FnOnce(DatasetError) -> DatasetError + '_ {
    move |e| match e {
        DatasetError::Decode(msg) => DatasetError::Image {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    }
}

/// Loads up to `limit` associated frames from `root`, ordered by rgb
/// timestamp. Images are decoded in parallel.
pub fn load_sequence(
    root: &Path,
    k: &Intrinsics,
    max_time_diff: f64,
    limit: usize,
) -> Result<Vec<AssociatedFrame>, DatasetError> {
    let rgb = read_index(&root.join("rgb.txt"))?;
    let depth = read_index(&root.join("depth.txt"))?;
    let rgb_t: Vec<f64> = rgb.iter().map(|e| e.timestamp).collect();
    let depth_t: Vec<f64> = depth.iter().map(|e| e.timestamp).collect();
    let pairs: Vec<(usize, usize)> = associate(&rgb_t, &depth_t, max_time_diff)
        .into_iter()
        .take(limit)
        .collect();
    if pairs.is_empty() {
        return Err(DatasetError::NoFrames {
            path: root.to_path_buf(),
        });
    }
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let rgb_path = root.join(&rgb[i].path);
            let depth_path = root.join(&depth[j].path);
            let image = decode_gray_png(&read_file(&rgb_path)?).map_err(image_err(&rgb_path))?;
            check_size(&rgb_path, image.width(), image.height(), k)?;
            let d = decode_depth_png(&read_file(&depth_path)?, k.depth_scale)
                .map_err(image_err(&depth_path))?;
            check_size(&depth_path, d.width(), d.height(), k)?;
            Ok(AssociatedFrame {
                rgb_timestamp: rgb[i].timestamp,
                depth_timestamp: depth[j].timestamp,
                image,
                depth: d,
            })
        })
        .collect()
}

/// Per-dataset camera configuration (`key = value` lines, `#` comments).
///
/// Required keys: `fx fy cx cy depth_scale`. Optional: `max_time_diff`
/// (default 0.02 s), `width`, `height` (default 640x480).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub intrinsics: Intrinsics,
    pub max_time_diff: f64,
}

pub fn parse_config(text: &str, origin: &Path) -> Result<DatasetConfig, DatasetError> {
    let mut vals: std::collections::HashMap<&str, (usize, f64)> = Default::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DatasetError::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let key = key.trim();
        if !matches!(
            key,
            "fx" | "fy" | "cx" | "cy" | "depth_scale" | "max_time_diff" | "width" | "height"
        ) {
            return Err(err(format!("unknown key {key:?}")));
        }
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| err(format!("bad number for {key}: {:?}", value.trim())))?;
        vals.insert(key, (n + 1, v));
    }
    let missing = |key: &str| DatasetError::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: format!("missing key {key}"),
    };
    let get = |key: &str| vals.get(key).map(|v| v.1).ok_or_else(|| missing(key));
    let dim = |key: &str, default: usize| -> Result<usize, DatasetError> {
        match vals.get(key) {
            None => Ok(default),
            Some(&(_, v)) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(&(line, _)) => Err(DatasetError::Parse {
                path: origin.to_path_buf(),
                line,
                msg: format!("{key} must be a positive integer"),
            }),
        }
    };
    let intrinsics = Intrinsics::new(
        get("fx")?,
        get("fy")?,
        get("cx")?,
        get("cy")?,
        dim("width", 640)?,
        dim("height", 480)?,
        get("depth_scale")?,
    )
    .map_err(|e| DatasetError::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let max_time_diff = vals
        .get("max_time_diff")
        .map_or(DEFAULT_MAX_TIME_DIFF, |v| v.1);
    if !(max_time_diff >= 0.0 && max_time_diff.is_finite()) {
        return Err(DatasetError::Parse {
            path: origin.to_path_buf(),
            line: vals["max_time_diff"].0,
            msg: "max_time_diff must be non-negative".into(),
        });
    }
    Ok(DatasetConfig {
        intrinsics,
        max_time_diff,
    })
}

pub fn read_config(path: &Path) -> Result<DatasetConfig, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}

/// Writes a sequence in the layout [`load_sequence`] reads: `rgb/` and
/// `depth/` PNGs plus both index files. Images are stored as gray PNGs.
pub fn write_sequence(
    root: &Path,
    frames: &[AssociatedFrame],
    depth_scale: f64,
) -> Result<(), DatasetError> {
    for dir in [root.join("rgb"), root.join("depth")] {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut rgb_idx = String::from("# timestamp filename\n");
    let mut depth_idx = rgb_idx.clone();
    for f in frames {
        let rgb_name = format!("rgb/{:.6}.png", f.rgb_timestamp);
        let depth_name = format!("depth/{:.6}.png", f.depth_timestamp);
        let p = root.join(&rgb_name);
        fs::write(&p, encode_gray_png(&f.image)).map_err(io_err(&p))?;
        let p = root.join(&depth_name);
        fs::write(&p, encode_depth_png(&f.depth, depth_scale)).map_err(io_err(&p))?;
        rgb_idx.push_str(&format!("{:.6} {rgb_name}\n", f.rgb_timestamp));
        depth_idx.push_str(&format!("{:.6} {depth_name}\n", f.depth_timestamp));
    }
    for (name, body) in [("rgb.txt", rgb_idx), ("depth.txt", depth_idx)] {
        let p = root.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn association_examples() {
        assert_eq!(
            associate(&[0.0, 0.033], &[0.01, 0.04], 0.02),
            vec![(0, 0), (1, 1)]
        );
        assert!(associate(&[0.0], &[0.05], 0.02).is_empty());
    }

    #[test]
    fn association_is_injective() {
        // Both rgb frames are nearest to the same depth frame.
        let pairs = associate(&[0.0, 0.004], &[0.002, 0.015], 0.02);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn parse_index_skips_comments() {
        let text = "# color images\n# file: x\n1305031102.175304 rgb/1305031102.175304.png\n\n1305031102.211214 rgb/b.png\n";
        let idx = parse_index(text, Path::new("rgb.txt")).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx[1].path, PathBuf::from("rgb/b.png"));
        assert!((idx[0].timestamp - 1305031102.175304).abs() < 1e-6);
    }

    #[test]
    fn parse_index_errors_name_line() {
        let e = parse_index("1.0 a\nnope\n", Path::new("rgb.txt")).unwrap_err();
        assert!(e.to_string().starts_with("rgb.txt:2:"), "{e}");
        let e = parse_index("2.0 a\n1.0 b\n", Path::new("d.txt")).unwrap_err();
        assert!(e.to_string().contains("non-decreasing"));
    }

    #[test]
    fn luma_examples() {
        let g = to_gray(3, 1, &[255, 255, 255, 255, 0, 0, 128, 128, 128]).unwrap();
        assert_eq!(g.data(), &[255, 76, 128]);
        assert!(to_gray(2, 1, &[0; 5]).is_err());
    }

    #[test]
    fn depth_scale_examples() {
        let mut d = DepthMap::empty(3, 1);
        d.set(0, 0, 1.0);
        d.set(1, 0, 13107.0 / 5000.0);
        let png = encode_depth_png(&d, 5000.0);
        let back = decode_depth_png(&png, 5000.0).unwrap();
        assert_eq!(back.get(0, 0), 1.0);
        assert_eq!(back.get(1, 0), 2.6214);
        assert!(!back.is_valid(2, 0));
    }

    #[test]
    fn depth_rejects_eight_bit() {
        let g = GrayImage::filled(4, 4, 9);
        let e = decode_depth_png(&encode_gray_png(&g), 5000.0).unwrap_err();
        assert!(e.to_string().contains("16-bit"));
    }

    #[test]
    fn config_parsing() {
        let text = "# fr1\nfx = 517.3\nfy=516.5\ncx = 318.6\ncy = 255.3\ndepth_scale = 5000\n";
        let c = parse_config(text, Path::new("c.cfg")).unwrap();
        assert_eq!(c.intrinsics.fx, 517.3);
        assert_eq!((c.intrinsics.width, c.intrinsics.height), (640, 480));
        assert_eq!(c.max_time_diff, 0.02);
        let e = parse_config("fx = 1\n", Path::new("c.cfg")).unwrap_err();
        assert!(e.to_string().contains("missing key fy"));
        assert!(parse_config("fx = a\n", Path::new("c.cfg")).is_err());
        assert!(parse_config("zoom = 1\n", Path::new("c.cfg")).is_err());
        let small = parse_config(
            "fx=1\nfy=1\ncx=1\ncy=1\ndepth_scale=1000\nwidth=32\nheight=24\nmax_time_diff=0.05",
            Path::new("c.cfg"),
        )
        .unwrap();
        assert_eq!((small.intrinsics.width, small.intrinsics.height), (32, 24));
        assert_eq!(small.max_time_diff, 0.05);
    }
}

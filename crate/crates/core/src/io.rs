//! Flow, image and manifest formats.
//!
//! * `.flo`: little-endian `202021.25` magic, `i32` width and height, then
//!   row-major interleaved `f32` (u, v). Components with magnitude above
//!   1e9 mark unknown flow.
//! * KITTI flow PNG: 16-bit RGB, `u = (R - 2^15) / 64`, `v = (G - 2^15) / 64`,
//!   valid where `B > 0`.
//! * Frames: 8-bit PNG (gray or RGB) and binary PPM (`P6`).
//! * Manifest: `{"samples":[{"id","frame1","frame2","gt","group"}]}` with
//!   paths relative to the manifest file.

use std::collections::HashSet;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, FlowField, Image, Sample};

pub const FLO_MAGIC: f32 = 202021.25;
/// Magnitude above which a `.flo` component means "unknown".
pub const FLO_UNKNOWN_THRESHOLD: f64 = 1e9;
/// Written for invalid pixels that carry no sentinel of their own.
pub const FLO_UNKNOWN_VALUE: f32 = 1e10;

pub const KITTI_OFFSET: f64 = 32768.0;
pub const KITTI_SCALE: f64 = 64.0;

const FLO_HEADER: usize = 12;

fn unknown(v: f64) -> bool {
    !(v.abs() <= FLO_UNKNOWN_THRESHOLD)
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < FLO_HEADER {
        return Err(Error::Truncated {
            needed: FLO_HEADER,
            available: bytes.len(),
        });
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(Error::InvalidDimensions {
            width: width as i64,
            height: height as i64,
        });
    }
    let (w, h) = (width as usize, height as usize);
    let needed = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(FLO_HEADER))
        .ok_or(Error::InvalidDimensions {
            width: width as i64,
            height: height as i64,
        })?;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::InvalidFlow(format!("{} trailing bytes after payload", bytes.len() - needed)));
    }

    let mut uv = Vec::with_capacity(2 * w * h);
    let mut valid = Vec::with_capacity(w * h);
    for p in 0..w * h {
        let u = f32::from_le_bytes(word(FLO_HEADER + 8 * p)) as f64;
        let v = f32::from_le_bytes(word(FLO_HEADER + 8 * p + 4)) as f64;
        let ok = !unknown(u) && !unknown(v);
        valid.push(ok);
        // finite sentinels are kept so that writing reproduces the input
        let keep = |x: f64| if x.is_finite() { x } else { FLO_UNKNOWN_VALUE as f64 };
        uv.push(keep(u));
        uv.push(keep(v));
    }
    let valid = if valid.iter().all(|&b| b) { None } else { Some(valid) };
    FlowField::new(w, h, uv, valid)
}

pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(FLO_HEADER + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let pair = if flow.is_valid(x, y) || unknown(u) || unknown(v) {
                [u as f32, v as f32]
            } else {
                [FLO_UNKNOWN_VALUE, FLO_UNKNOWN_VALUE]
            };
            for c in pair {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

fn decode_png(bytes: &[u8], transformations: png::Transformations) -> Result<(png::OutputInfo, Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(transformations);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::UnsupportedFormat("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(data)?;
        writer.finish()?;
    }
    Ok(out)
}

pub fn read_kitti_flow_png(bytes: &[u8]) -> Result<FlowField> {
    let (info, buf) = decode_png(bytes, png::Transformations::IDENTITY)?;
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Rgb {
        return Err(Error::UnsupportedFormat(format!(
            "KITTI flow needs 16-bit RGB PNG, got {:?} {:?}",
            info.bit_depth, info.color_type
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut uv = Vec::with_capacity(2 * w * h);
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            let ch = |c: usize| u16::from_be_bytes([row[6 * x + 2 * c], row[6 * x + 2 * c + 1]]) as f64;
            uv.push((ch(0) - KITTI_OFFSET) / KITTI_SCALE);
            uv.push((ch(1) - KITTI_OFFSET) / KITTI_SCALE);
            valid.push(ch(2) > 0.0);
        }
    }
    FlowField::new(w, h, uv, Some(valid))
}

/// Components are rounded to 1/64 px and clamped to the 16-bit range
/// (about -512 to +512 px). Invalid pixels are written as all zeros.
pub fn write_kitti_flow_png(flow: &FlowField) -> Result<Vec<u8>> {
    let (w, h) = flow.dims();
    let mut data = Vec::with_capacity(6 * w * h);
    let quantize = |d: f64| (d * KITTI_SCALE + KITTI_OFFSET).round().clamp(0.0, 65535.0) as u16;
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let px = if flow.is_valid(x, y) {
                [quantize(u), quantize(v), 1]
            } else {
                [0, 0, 0]
            };
            for c in px {
                data.extend_from_slice(&c.to_be_bytes());
            }
        }
    }
    encode_png(w, h, png::ColorType::Rgb, png::BitDepth::Sixteen, &data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") => Ok(ImageFormat::Ppm),
            _ => Err(Error::UnsupportedFormat(format!("{}: expected .png or .ppm", path.display()))),
        }
    }
}

/// Decode an 8-bit PNG (gray or RGB; alpha is dropped) or a binary PPM.
pub fn read_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"\x89PNG") {
        read_png_image(bytes)
    } else if bytes.starts_with(b"P6") {
        read_ppm(bytes)
    } else {
        Err(Error::UnsupportedFormat("not a PNG or binary PPM".into()))
    }
}

fn read_png_image(bytes: &[u8]) -> Result<Image> {
    let (info, buf) = decode_png(bytes, png::Transformations::EXPAND)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("{:?} PNG, expected 8-bit", info.bit_depth)));
    }
    let (stride, channels) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(Error::UnsupportedFormat(format!("PNG color type {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * channels);
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            for c in 0..channels {
                data.push(row[x * stride + c] as f64 / 255.0);
            }
        }
    }
    Image::new(w, h, channels, data)
}

fn read_ppm(bytes: &[u8]) -> Result<Image> {
    // header: magic, width, height, maxval, separated by whitespace and comments
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::UnsupportedFormat("malformed PPM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::UnsupportedFormat("malformed PPM header".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PPM maxval {maxval}, expected 255")));
    }
    if w == 0 || h == 0 {
        return Err(Error::InvalidDimensions {
            width: w as i64,
            height: h as i64,
        });
    }
    let needed = pos + 3 * w * h;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let data = bytes[pos..needed].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(w, h, 3, data)
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encode with 8-bit quantization. PPM output of a gray image repeats the
/// channel three times.
pub fn write_image(img: &Image, format: ImageFormat) -> Result<Vec<u8>> {
    let (w, h) = img.dims();
    match format {
        ImageFormat::Png => {
            let color = if img.channels() == 1 {
                png::ColorType::Grayscale
            } else {
                png::ColorType::Rgb
            };
            let data: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
            encode_png(w, h, color, png::BitDepth::Eight, &data)
        }
        ImageFormat::Ppm => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            for y in 0..h {
                for x in 0..w {
                    let px = img.pixel(x, y);
                    for c in 0..3 {
                        out.push(to_u8(px[c.min(px.len() - 1)]));
                    }
                }
            }
            Ok(out)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: &Path) -> Result<Image> {
    read_image(&read_file(path)?)
}

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    write_file(path, &write_image(img, ImageFormat::from_path(path)?)?)
}

/// `.flo` or KITTI `.png`, chosen by extension.
pub fn load_flow(path: &Path) -> Result<FlowField> {
    let bytes = read_file(path)?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("flo") => read_flo(&bytes),
        Some("png") => read_kitti_flow_png(&bytes),
        _ => Err(Error::UnsupportedFormat(format!("{}: expected .flo or .png", path.display()))),
    }
}

pub fn save_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("flo") => write_flo(flow),
        Some("png") => write_kitti_flow_png(flow)?,
        _ => return Err(Error::UnsupportedFormat(format!("{}: expected .flo or .png", path.display()))),
    };
    write_file(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub frame1: String,
    pub frame2: String,
    pub gt: Option<String>,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    fn check_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.samples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id `{}`", e.id)));
            }
        }
        Ok(())
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.samples.iter().find(|e| e.id == id)
    }
}

pub fn read_manifest(bytes: &[u8]) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(bytes)?;
    m.check_ids()?;
    Ok(m)
}

pub fn write_manifest(m: &Manifest) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(m)?;
    out.push(b'\n');
    Ok(out)
}

/// Manifest read from disk; relative paths resolve against its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base: PathBuf,
}

impl LoadedManifest {
    /// Reads the manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest = read_manifest(&read_file(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { manifest, base };
        for e in &loaded.manifest.samples {
            for p in [Some(&e.frame1), Some(&e.frame2), e.gt.as_ref()].into_iter().flatten() {
                let full = loaded.resolve(p);
                if !full.is_file() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                    ));
                }
            }
        }
        Ok(loaded)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    pub fn load_sample(&self, e: &ManifestEntry) -> Result<Sample> {
        let frame1 = load_image(&self.resolve(&e.frame1))?;
        let frame2 = load_image(&self.resolve(&e.frame2))?;
        let label = e.gt.as_ref().map(|g| load_flow(&self.resolve(g))).transpose()?;
        Sample::new(e.id.clone(), frame1, frame2, label, e.group.clone())
    }

    /// All samples, labels included where the manifest names one.
    pub fn load_dataset(&self) -> Result<Dataset> {
        use rayon::prelude::*;
        let samples = self
            .manifest
            .samples
            .par_iter()
            .map(|e| self.load_sample(e))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }
}

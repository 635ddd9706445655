//! File formats: PFM images, PGM renders, measurement vectors and flat
//! `key = value` parameter files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Encodes a grayscale little-endian PFM (`Pf`, scale `-1.0`), rows stored
/// bottom-up as the format requires. Samples are written as `f32`.
pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width(), img.height()).into_bytes();
    out.reserve(img.len() * 4);
    for r in (0..img.height()).rev() {
        for c in 0..img.width() {
            out.extend_from_slice(&(img.get(r, c) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    // Three newline-terminated header lines, then the raw payload.
    let mut header = Vec::with_capacity(3);
    let mut pos = 0;
    for _ in 0..3 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("truncated PFM header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::Format("PFM header is not ASCII".into()))?;
        header.push(line.trim().to_string());
        pos += end + 1;
    }
    let cursor = &bytes[pos..];
    if header[0] != "Pf" {
        return Err(Error::Format(format!("expected grayscale PFM magic `Pf`, got `{}`", header[0])));
    }
    let dims: Vec<usize> = header[1]
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad PFM dimensions `{}`: {e}", header[1])))?;
    if dims.len() != 2 {
        return Err(Error::Format(format!("bad PFM dimensions `{}`", header[1])));
    }
    let (width, height) = (dims[0], dims[1]);
    let scale: f64 = header[2]
        .parse()
        .map_err(|e| Error::Format(format!("bad PFM scale `{}`: {e}", header[2])))?;
    let little = scale < 0.0;
    let need = width * height * 4;
    if cursor.len() != need {
        return Err(Error::Format(format!("PFM payload has {} bytes, expected {need}", cursor.len())));
    }
    let mut data = vec![0.0; width * height];
    for (i, chunk) in cursor.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().expect("chunk of 4");
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, c) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + c] = v as f64;
    }
    Image::new(height, width, data)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pfm(&fs::read(path)?)
}

/// Log-compressed 8-bit rendering: `clamp(20 log10(|x| / max|x|), -D, 0)`
/// mapped linearly onto `[0, 255]`.
pub fn encode_pgm_log(img: &Image, dynamic_range_db: f64) -> Result<Vec<u8>> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::InvalidParameter(format!("dynamic range must be positive, got {dynamic_range_db}")));
    }
    let peak = img.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for &v in img.data() {
        let db = if peak > 0.0 && v != 0.0 {
            (20.0 * (v.abs() / peak).log10()).clamp(-dynamic_range_db, 0.0)
        } else {
            -dynamic_range_db
        };
        out.push((((db + dynamic_range_db) / dynamic_range_db) * 255.0).round() as u8);
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub const MEASUREMENT_MAGIC: &str = "CSDECON-MEASUREMENTS";
pub const MEASUREMENT_VERSION: u32 = 1;

/// Measurement vector plus what is needed to rebuild its sensing operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFile {
    pub height: usize,
    pub width: usize,
    pub cs_ratio: f64,
    pub sensing_seed: u64,
    pub noise_seed: u64,
    pub snr_db: Option<f64>,
    pub values: Vec<f64>,
}

impl MeasurementFile {
    /// Eight text lines followed by `length` little-endian `f64` values:
    ///
    /// ```text
    /// CSDECON-MEASUREMENTS
    /// version = 1
    /// length = <M>
    /// shape = <height> <width>
    /// cs_ratio = <ratio>
    /// sensing_seed = <u64>
    /// noise_seed = <u64>
    /// snr_db = <dB or none>
    /// ```
    pub fn encode(&self) -> Vec<u8> {
        let snr = self.snr_db.map_or_else(|| "none".to_string(), |v| format!("{v:?}"));
        let mut out = format!(
            "{MEASUREMENT_MAGIC}\nversion = {MEASUREMENT_VERSION}\nlength = {}\nshape = {} {}\ncs_ratio = {:?}\nsensing_seed = {}\nnoise_seed = {}\nsnr_db = {snr}\n",
            self.values.len(),
            self.height,
            self.width,
            self.cs_ratio,
            self.sensing_seed,
            self.noise_seed,
        )
        .into_bytes();
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut reader = BufReader::new(bytes);
        let mut lines = Vec::with_capacity(8);
        for _ in 0..8 {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::Format("truncated measurement header".into()));
            }
            lines.push(line.trim_end_matches(['\n', '\r']).to_string());
        }
        if lines[0] != MEASUREMENT_MAGIC {
            return Err(Error::Format(format!("bad measurement magic `{}`", lines[0])));
        }
        let field = |idx: usize, key: &str| -> Result<String> {
            let (k, v) = lines[idx]
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header line `{}`", lines[idx])))?;
            if k.trim() != key {
                return Err(Error::Format(format!("expected `{key}` on header line {}, got `{}`", idx + 1, k.trim())));
            }
            Ok(v.trim().to_string())
        };
        let parse_err = |what: &str, e: &dyn std::fmt::Display| Error::Format(format!("bad {what}: {e}"));
        let version: u32 = field(1, "version")?.parse().map_err(|e| parse_err("version", &e))?;
        if version != MEASUREMENT_VERSION {
            return Err(Error::Format(format!("unsupported measurement version {version}")));
        }
        let length: usize = field(2, "length")?.parse().map_err(|e| parse_err("length", &e))?;
        let shape = field(3, "shape")?;
        let dims: Vec<usize> = shape
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err("shape", &e))?;
        if dims.len() != 2 {
            return Err(Error::Format(format!("bad shape `{shape}`")));
        }
        let cs_ratio: f64 = field(4, "cs_ratio")?.parse().map_err(|e| parse_err("cs_ratio", &e))?;
        let sensing_seed: u64 = field(5, "sensing_seed")?.parse().map_err(|e| parse_err("sensing_seed", &e))?;
        let noise_seed: u64 = field(6, "noise_seed")?.parse().map_err(|e| parse_err("noise_seed", &e))?;
        let snr = field(7, "snr_db")?;
        let snr_db = if snr == "none" {
            None
        } else {
            Some(snr.parse::<f64>().map_err(|e| parse_err("snr_db", &e))?)
        };
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        if payload.len() != length * 8 {
            return Err(Error::Format(format!(
                "measurement payload has {} bytes, expected {}",
                payload.len(),
                length * 8
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            height: dims[0],
            width: dims[1],
            cs_ratio,
            sensing_seed,
            noise_seed,
            snr_db,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Ordered flat `key = value` map. Lines starting with `#` are comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Format(format!("line {}: empty key", i + 1)));
            }
            map.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entries of `other` replace those of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Format(format!("bad value for `{key}` (`{v}`): {e}"))))
            .transpose()
    }

    /// Comma-separated list.
    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| Error::Format(format!("bad entry `{s}` in `{key}`: {e}"))))
                    .collect()
            })
            .transpose()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

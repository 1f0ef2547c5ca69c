//! Band raster data model, SRB1 file I/O, scene manifests and the
//! reflectance-preserving block-mean downsampling operators.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single band's 2D reflectance raster with metadata.
///
/// Values are stored row-major with the origin at the top-left corner,
/// in 64-bit precision regardless of file precision.
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub band_id: String,
    pub center_wavelength: f64,
    pub pixel_size: f64,
    pub value_range: (f64, f64),
}

/// What happened while loading a band file.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub clamped: usize,
    pub non_finite: usize,
}

impl BandGrid {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        band_id: impl Into<String>,
        value_range: (f64, f64),
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "value count {} does not match {}x{}",
                values.len(),
                width,
                height
            )));
        }
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Ok(BandGrid {
            width,
            height,
            values,
            valid,
            band_id: band_id.into(),
            center_wavelength: 0.0,
            pixel_size: 1.0,
            value_range,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64, range: (f64, f64)) -> Self {
        BandGrid {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![true; width * height],
            band_id: String::new(),
            center_wavelength: 0.0,
            pixel_size: 1.0,
            value_range: range,
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn range_width(&self) -> f64 {
        self.value_range.1 - self.value_range.0
    }

    /// Checks the invariants required before a grid enters the fitting pipeline.
    pub fn check_fit_ready(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Precondition(format!(
                "band {}: grids entering the fitting pipeline need width and height >= 2, got {}x{}",
                self.band_id, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Extracts the sub-grid starting at (x0, y0) with the given size.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> BandGrid {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut values = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            values.extend_from_slice(&self.values[row + x0..row + x0 + w]);
            valid.extend_from_slice(&self.valid[row + x0..row + x0 + w]);
        }
        BandGrid {
            width: w,
            height: h,
            values,
            valid,
            band_id: self.band_id.clone(),
            center_wavelength: self.center_wavelength,
            pixel_size: self.pixel_size,
            value_range: self.value_range,
        }
    }

    /// Mean over valid pixels; NaN if none are valid.
    pub fn valid_mean(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (v, ok) in self.values.iter().zip(&self.valid) {
            if *ok {
                sum += v;
                n += 1;
            }
        }
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

/// Loads a band from an SRB1 file.
///
/// Out-of-range values are clamped to the declared range and counted in the
/// report; non-finite values are marked invalid.
pub fn load_band(path: impl AsRef<Path>) -> Result<BandGrid> {
    load_band_with_report(path).map(|(g, _)| g)
}

pub fn load_band_with_report(path: impl AsRef<Path>) -> Result<(BandGrid, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut header = Vec::new();
    // Four text lines terminated by '\n', then raw payload.
    let mut lines: Vec<String> = Vec::new();
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    while lines.len() < 4 {
        match reader.read(&mut byte).map_err(|e| Error::io(path, e))? {
            0 => {
                return Err(Error::Format {
                    path: path.into(),
                    field: "header",
                    detail: "file ends before the four header lines".into(),
                })
            }
            _ => {
                header.push(byte[0]);
                if byte[0] == b'\n' {
                    lines.push(String::from_utf8_lossy(&line).trim().to_string());
                    line.clear();
                } else {
                    line.push(byte[0]);
                }
            }
        }
    }

    if lines[0] != "SRB1" {
        return Err(Error::Format {
            path: path.into(),
            field: "magic",
            detail: format!("expected SRB1, got {:?}", lines[0]),
        });
    }
    let dims: Vec<&str> = lines[1].split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Format {
            path: path.into(),
            field: "dimensions",
            detail: format!("expected '<width> <height>', got {:?}", lines[1]),
        });
    }
    let width: usize = dims[0].parse().map_err(|_| Error::Format {
        path: path.into(),
        field: "width",
        detail: dims[0].to_string(),
    })?;
    let height: usize = dims[1].parse().map_err(|_| Error::Format {
        path: path.into(),
        field: "height",
        detail: dims[1].to_string(),
    })?;
    if lines[2] != "float32-le" {
        return Err(Error::Format {
            path: path.into(),
            field: "encoding",
            detail: format!("expected float32-le, got {:?}", lines[2]),
        });
    }
    let range: Vec<&str> = lines[3].split_whitespace().collect();
    if range.len() != 2 {
        return Err(Error::Format {
            path: path.into(),
            field: "range",
            detail: format!("expected '<min> <max>', got {:?}", lines[3]),
        });
    }
    let lo: f64 = range[0].parse().map_err(|_| Error::Format {
        path: path.into(),
        field: "range_min",
        detail: range[0].to_string(),
    })?;
    let hi: f64 = range[1].parse().map_err(|_| Error::Format {
        path: path.into(),
        field: "range_max",
        detail: range[1].to_string(),
    })?;
    if !(lo < hi) {
        return Err(Error::Format {
            path: path.into(),
            field: "range",
            detail: format!("min {} must be below max {}", lo, hi),
        });
    }

    let expected = width * height;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io(path, e))?;
    if payload.len() != expected * 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len() / 4,
        });
    }

    let mut values = Vec::with_capacity(expected);
    let mut valid = Vec::with_capacity(expected);
    let mut report = LoadReport::default();
    for chunk in payload.chunks_exact(4) {
        let raw = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        if !raw.is_finite() {
            report.non_finite += 1;
            values.push(f64::NAN);
            valid.push(false);
        } else {
            let clamped = raw.clamp(lo, hi);
            if clamped != raw {
                report.clamped += 1;
            }
            values.push(clamped);
            valid.push(true);
        }
    }

    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((
        BandGrid {
            width,
            height,
            values,
            valid,
            band_id: stem,
            center_wavelength: 0.0,
            pixel_size: 1.0,
            value_range: (lo, hi),
        },
        report,
    ))
}

/// Writes a band as an SRB1 file. Invalid cells are encoded as NaN.
pub fn save_band(grid: &BandGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if grid.width == 0 || grid.height == 0 {
        return Err(Error::Precondition(
            "cannot save a band with zero width or height".into(),
        ));
    }
    if grid.values.len() != grid.width * grid.height || grid.valid.len() != grid.values.len() {
        return Err(Error::Precondition(
            "band value/mask dimensions are inconsistent".into(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(
        w,
        "SRB1\n{} {}\nfloat32-le\n{} {}\n",
        grid.width, grid.height, grid.value_range.0, grid.value_range.1
    )
    .map_err(|e| Error::io(path, e))?;
    for (v, ok) in grid.values.iter().zip(&grid.valid) {
        let out = if *ok { *v as f32 } else { f32::NAN };
        w.write_all(&out.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Block-mean downsampling by an integer factor (2 or 3).
///
/// Each output pixel averages its factor x factor block over valid cells only;
/// the output pixel is invalid iff the whole block is invalid.
pub fn downsample(grid: &BandGrid, factor: usize) -> Result<BandGrid> {
    if factor != 2 && factor != 3 {
        return Err(Error::Precondition(format!(
            "downsampling factor must be 2 or 3, got {}",
            factor
        )));
    }
    if grid.width % factor != 0 || grid.height % factor != 0 {
        return Err(Error::Dimension(format!(
            "band {}: dimensions {}x{} are not divisible by {}; crop the input first",
            grid.band_id, grid.width, grid.height, factor
        )));
    }
    let ow = grid.width / factor;
    let oh = grid.height / factor;
    let mut values = vec![f64::NAN; ow * oh];
    let mut valid = vec![false; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut sum = 0.0;
            let mut n = 0usize;
            for dy in 0..factor {
                for dx in 0..factor {
                    let i = grid.idx(ox * factor + dx, oy * factor + dy);
                    if grid.valid[i] {
                        sum += grid.values[i];
                        n += 1;
                    }
                }
            }
            if n > 0 {
                values[oy * ow + ox] = sum / n as f64;
                valid[oy * ow + ox] = true;
            }
        }
    }
    Ok(BandGrid {
        width: ow,
        height: oh,
        values,
        valid,
        band_id: grid.band_id.clone(),
        center_wavelength: grid.center_wavelength,
        pixel_size: grid.pixel_size * factor as f64,
        value_range: grid.value_range,
    })
}

/// Nearest-neighbor upsampling by an integer factor. Used as a comparison
/// baseline and by the lattice-free sharpening path.
pub fn upsample_nearest(grid: &BandGrid, factor: usize) -> BandGrid {
    let ow = grid.width * factor;
    let oh = grid.height * factor;
    let mut values = vec![0.0; ow * oh];
    let mut valid = vec![false; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let i = (y / factor) * grid.width + x / factor;
            values[y * ow + x] = grid.values[i];
            valid[y * ow + x] = grid.valid[i];
        }
    }
    BandGrid {
        width: ow,
        height: oh,
        values,
        valid,
        band_id: grid.band_id.clone(),
        center_wavelength: grid.center_wavelength,
        pixel_size: grid.pixel_size / factor as f64,
        value_range: grid.value_range,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestBandEntry {
    band_id: String,
    wavelength_nm: f64,
    pixel_size_m: f64,
    path: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    scene_id: String,
    factor: usize,
    high: Vec<ManifestBandEntry>,
    low: Vec<ManifestBandEntry>,
}

/// A named set of bands grouped into the high-resolution set and the
/// low-resolution set, with the base resolution factor.
#[derive(Debug, Clone)]
pub struct SceneManifest {
    pub scene_id: String,
    pub factor: usize,
    pub high_bands: Vec<BandGrid>,
    pub low_bands: Vec<BandGrid>,
    pub warnings: Vec<String>,
}

impl SceneManifest {
    pub fn new(
        scene_id: impl Into<String>,
        factor: usize,
        high_bands: Vec<BandGrid>,
        low_bands: Vec<BandGrid>,
    ) -> Result<Self> {
        let mut m = SceneManifest {
            scene_id: scene_id.into(),
            factor,
            high_bands,
            low_bands,
            warnings: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&mut self) -> Result<()> {
        if self.factor != 2 && self.factor != 3 {
            return Err(Error::Manifest(format!(
                "factor must be 2 or 3, got {}",
                self.factor
            )));
        }
        if self.high_bands.is_empty() {
            return Err(Error::Manifest("the high-resolution set is empty".into()));
        }
        let hw = self.high_bands[0].width;
        let hh = self.high_bands[0].height;
        for b in &self.high_bands {
            if b.width != hw || b.height != hh {
                return Err(Error::Manifest(format!(
                    "high band {} is {}x{}, expected {}x{}",
                    b.band_id, b.width, b.height, hw, hh
                )));
            }
            b.check_fit_ready()?;
        }
        let hps = self.high_bands[0].pixel_size;
        for b in &self.low_bands {
            let ratio = (b.pixel_size / hps).round() as usize;
            let ratio = if b.pixel_size <= hps { self.factor } else { ratio };
            if ![2, 3, 6].contains(&ratio) {
                return Err(Error::Manifest(format!(
                    "low band {} has pixel size {} not 2x, 3x or 6x the high-band pixel size {}",
                    b.band_id, b.pixel_size, hps
                )));
            }
            if b.width * ratio != hw || b.height * ratio != hh {
                return Err(Error::Manifest(format!(
                    "low band {} is {}x{}, inconsistent with high dimensions {}x{} at ratio {}",
                    b.band_id, b.width, b.height, hw, hh, ratio
                )));
            }
        }
        if self.factor == 3 && self.high_bands.len() < 8 {
            self.warnings.push(format!(
                "factor-3 fit with only {} high-resolution bands; the weight inference is \
                 better constrained with at least 8",
                self.high_bands.len()
            ));
        }
        Ok(())
    }

    /// Low-band pixel-size ratio relative to the high-resolution grid.
    pub fn low_ratio(&self, band: &BandGrid) -> usize {
        let hps = self.high_bands[0].pixel_size;
        if band.pixel_size <= hps {
            self.factor
        } else {
            (band.pixel_size / hps).round() as usize
        }
    }
}

/// Loads a scene manifest (JSON) and every band file it references.
/// Band paths are resolved relative to the manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: ManifestFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let load_entries = |entries: &[ManifestBandEntry]| -> Result<Vec<BandGrid>> {
        entries
            .iter()
            .map(|e| {
                let mut g = load_band(base.join(&e.path))?;
                g.band_id = e.band_id.clone();
                g.center_wavelength = e.wavelength_nm;
                g.pixel_size = e.pixel_size_m;
                Ok(g)
            })
            .collect()
    };
    let high = load_entries(&parsed.high)?;
    let low = load_entries(&parsed.low)?;
    SceneManifest::new(parsed.scene_id, parsed.factor, high, low)
}

/// Writes a manifest JSON plus all referenced band files into `dir`.
pub fn save_manifest(manifest: &SceneManifest, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entry_of = |b: &BandGrid| -> Result<ManifestBandEntry> {
        let file = format!("{}.srb", b.band_id);
        save_band(b, dir.join(&file))?;
        Ok(ManifestBandEntry {
            band_id: b.band_id.clone(),
            wavelength_nm: b.center_wavelength,
            pixel_size_m: b.pixel_size,
            path: file,
        })
    };
    let mf = ManifestFile {
        scene_id: manifest.scene_id.clone(),
        factor: manifest.factor,
        high: manifest
            .high_bands
            .iter()
            .map(entry_of)
            .collect::<Result<_>>()?,
        low: manifest
            .low_bands
            .iter()
            .map(entry_of)
            .collect::<Result<_>>()?,
    };
    let out = dir.join("manifest.json");
    std::fs::write(&out, serde_json::to_string_pretty(&mf)?).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

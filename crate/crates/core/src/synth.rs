//! Deterministic synthetic scene generation for tests and benchmarks.
//!
//! A scene is built from a hidden high-resolution "material" field shared by
//! all bands; each band maps materials to reflectances independently, so the
//! sub-pixel geometry is band-independent by construction. Low-resolution
//! bands are exact block means of hidden high-resolution linear mixes of the
//! high bands, which provides ground truth for end-to-end comparisons.

use clap::ValueEnum;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{downsample, BandGrid};

/// The available scene generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    /// Piecewise-constant cells from a seeded Voronoi partition.
    Polygons,
    /// Straight step edges at random positions and orientations.
    Edges,
    /// Smooth gradient fields with a few random bumps.
    Gradients,
}

/// Parameters for a synthetic scene.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub kind: SceneKind,
    /// High-resolution width and height in pixels.
    pub width: usize,
    pub height: usize,
    /// Number of high-resolution bands.
    pub high_bands: usize,
    /// Number of low-resolution bands (hidden truths are linear mixes of
    /// the high bands).
    pub low_bands: usize,
    /// Resolution ratio of the low bands.
    pub factor: usize,
    /// Standard deviation of additive Gaussian noise, in reflectance units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SceneKind::Polygons,
            width: 64,
            height: 64,
            high_bands: 4,
            low_bands: 2,
            factor: 2,
            noise: 0.0,
            seed: 7,
        }
    }
}

/// A generated scene: the high-resolution bands, the low-resolution bands,
/// and the hidden high-resolution truth behind each low band.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub high: Vec<BandGrid>,
    pub low: Vec<BandGrid>,
    pub truth: Vec<BandGrid>,
}

/// The per-pixel material index field shared by all bands.
fn material_field(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let (w, h) = (spec.width, spec.height);
    match spec.kind {
        SceneKind::Polygons => {
            // Voronoi cells around random sites, each assigned one of a few
            // materials
            let n_sites = (w * h / 48).clamp(6, 160);
            let n_materials = 5;
            let sites: Vec<(f64, f64, usize)> = (0..n_sites)
                .map(|_| {
                    (
                        rng.random::<f64>() * w as f64,
                        rng.random::<f64>() * h as f64,
                        rng.random_range(0..n_materials),
                    )
                })
                .collect();
            let field = (0..w * h)
                .map(|i| {
                    let x = (i % w) as f64 + 0.5;
                    let y = (i / w) as f64 + 0.5;
                    sites
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.0 - x).powi(2) + (a.1 - y).powi(2);
                            let db = (b.0 - x).powi(2) + (b.1 - y).powi(2);
                            da.partial_cmp(&db).unwrap()
                        })
                        .unwrap()
                        .2
                })
                .collect();
            (field, n_materials)
        }
        SceneKind::Edges => {
            // each half-plane test doubles the region label, giving
            // piecewise-constant regions bounded by straight edges
            let n_edges = 3;
            let n_materials = 1 << n_edges;
            let edges: Vec<(f64, f64, f64)> = (0..n_edges)
                .map(|_| {
                    let theta = rng.random::<f64>() * std::f64::consts::PI;
                    let (nx, ny) = (theta.cos(), theta.sin());
                    let c = nx * rng.random::<f64>() * w as f64
                        + ny * rng.random::<f64>() * h as f64;
                    (nx, ny, c)
                })
                .collect();
            let field = (0..w * h)
                .map(|i| {
                    let x = (i % w) as f64 + 0.5;
                    let y = (i / w) as f64 + 0.5;
                    edges
                        .iter()
                        .enumerate()
                        .map(|(k, &(nx, ny, c))| usize::from(nx * x + ny * y > c) << k)
                        .sum()
                })
                .collect();
            (field, n_materials)
        }
        SceneKind::Gradients => (vec![0; w * h], 1),
    }
}

/// Smooth per-band field for the `Gradients` kind; also used as a small
/// modulation on top of the material reflectances for the other kinds.
fn smooth_field(spec: &SynthSpec, rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let gx = rng.random_range(-1.0..1.0) / w as f64;
    let gy = rng.random_range(-1.0..1.0) / h as f64;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random::<f64>() * w as f64,
                rng.random::<f64>() * h as f64,
                rng.random_range(0.1..0.3) * w.min(h) as f64,
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let x = (i % w) as f64 + 0.5;
            let y = (i / w) as f64 + 0.5;
            let mut v = gx * x + gy * y;
            for &(bx, by, r, a) in &bumps {
                let d2 = (x - bx).powi(2) + (y - by).powi(2);
                v += a * (-d2 / (2.0 * r * r)).exp();
            }
            amplitude * v
        })
        .collect()
}

/// Block-mean reduction composed from x2/x3 steps, so composite factors
/// (x6) work too.
pub fn block_mean(grid: &BandGrid, factor: usize) -> Result<BandGrid> {
    match factor {
        2 | 3 => downsample(grid, factor),
        4 => downsample(&downsample(grid, 2)?, 2),
        6 => downsample(&downsample(grid, 2)?, 3),
        _ => Err(Error::Precondition(format!(
            "unsupported reduction factor {}",
            factor
        ))),
    }
}

/// Generates a scene deterministically from the spec's seed.
pub fn generate_scene(spec: &SynthSpec) -> Result<SynthScene> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::Precondition("scene dimensions must be positive".into()));
    }
    if spec.factor < 2 {
        return Err(Error::Precondition("factor must be at least 2".into()));
    }
    if spec.width % spec.factor != 0 || spec.height % spec.factor != 0 {
        return Err(Error::Precondition(format!(
            "scene size {}x{} is not divisible by factor {}",
            spec.width, spec.height, spec.factor
        )));
    }
    if spec.high_bands == 0 || spec.low_bands == 0 {
        return Err(Error::Precondition("need at least one band per class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (field, n_materials) = material_field(spec, &mut rng);
    let n = spec.width * spec.height;

    let mut high = Vec::with_capacity(spec.high_bands);
    for b in 0..spec.high_bands {
        let palette: Vec<f64> = (0..n_materials)
            .map(|_| rng.random_range(0.05..0.95))
            .collect();
        let modulation = smooth_field(spec, &mut rng, 0.05);
        let mut vals = vec![0.0; n];
        for i in 0..n {
            let mut v = palette[field[i]] + modulation[i];
            if matches!(spec.kind, SceneKind::Gradients) {
                v = 0.5 + 4.0 * modulation[i];
            }
            if spec.noise > 0.0 {
                // Box-Muller from two uniforms keeps rand usage simple
                let u1: f64 = rng.random::<f64>().max(1e-12);
                let u2: f64 = rng.random();
                v += spec.noise
                    * (-2.0 * u1.ln()).sqrt()
                    * (2.0 * std::f64::consts::PI * u2).cos();
            }
            vals[i] = v.clamp(0.0, 1.0);
        }
        let mut g = BandGrid::new(spec.width, spec.height, vals, format!("H{}", b), (0.0, 1.0))?;
        g.center_wavelength = 450.0 + 120.0 * b as f64;
        g.pixel_size = 10.0;
        high.push(g);
    }

    let mut low = Vec::with_capacity(spec.low_bands);
    let mut truth = Vec::with_capacity(spec.low_bands);
    for b in 0..spec.low_bands {
        // hidden truth is a convex linear mix of the high bands, so the low
        // band shares their sub-pixel geometry exactly
        let mut mix: Vec<f64> = (0..spec.high_bands).map(|_| rng.random::<f64>()).collect();
        let s: f64 = mix.iter().sum();
        for m in mix.iter_mut() {
            *m /= s;
        }
        let mut vals = vec![0.0; n];
        for i in 0..n {
            vals[i] = high
                .iter()
                .zip(&mix)
                .map(|(hb, m)| m * hb.values[i])
                .sum::<f64>();
        }
        let mut t = BandGrid::new(spec.width, spec.height, vals, format!("L{}", b), (0.0, 1.0))?;
        t.center_wavelength = 1400.0 + 200.0 * b as f64;
        t.pixel_size = 10.0;
        let mut l = block_mean(&t, spec.factor)?;
        l.band_id = t.band_id.clone();
        truth.push(t);
        low.push(l);
    }

    Ok(SynthScene { high, low, truth })
}

//! Python bindings for the super-resolution library: band grids, block-mean
//! resampling, the full scene pipeline, quality metrics, and the synthetic
//! scene generator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use srunmix::metrics::{self, ErgasMode};
use srunmix::pipeline::{self, PipelineOptions};
use srunmix::raster;
use srunmix::solver::SolverOptions;
use srunmix::synth::{self, SceneKind, SynthSpec};
use srunmix::unmix::{ProximityMode, UnmixOptions};

fn err(e: srunmix::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A single band: a rectangular grid of reflectance values with validity
/// flags and metadata.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct BandGrid {
    inner: raster::BandGrid,
}

#[pymethods]
impl BandGrid {
    #[new]
    #[pyo3(signature = (width, height, values, band_id="band", value_range=(0.0, 1.0)))]
    fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        band_id: &str,
        value_range: (f64, f64),
    ) -> PyResult<Self> {
        raster::BandGrid::new(width, height, values, band_id, value_range)
            .map(|inner| BandGrid { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        raster::load_band(path).map(|inner| BandGrid { inner }).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        raster::save_band(&self.inner, path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn valid(&self) -> Vec<bool> {
        self.inner.valid.clone()
    }

    #[getter]
    fn band_id(&self) -> String {
        self.inner.band_id.clone()
    }

    #[setter]
    fn set_band_id(&mut self, v: String) {
        self.inner.band_id = v;
    }

    #[getter]
    fn pixel_size(&self) -> f64 {
        self.inner.pixel_size
    }

    #[setter]
    fn set_pixel_size(&mut self, v: f64) {
        self.inner.pixel_size = v;
    }

    #[getter]
    fn value_range(&self) -> (f64, f64) {
        self.inner.value_range
    }

    fn __repr__(&self) -> String {
        format!(
            "BandGrid(band_id={:?}, {}x{}, pixel_size={})",
            self.inner.band_id, self.inner.width, self.inner.height, self.inner.pixel_size
        )
    }
}

fn unwrap_bands(bands: Vec<BandGrid>) -> Vec<raster::BandGrid> {
    bands.into_iter().map(|b| b.inner).collect()
}

fn wrap_bands(bands: Vec<raster::BandGrid>) -> Vec<BandGrid> {
    bands.into_iter().map(|inner| BandGrid { inner }).collect()
}

/// Block-mean reduction by factor 2, 3, 4 or 6.
#[pyfunction]
fn downsample(band: &BandGrid, factor: usize) -> PyResult<BandGrid> {
    synth::block_mean(&band.inner, factor)
        .map(|inner| BandGrid { inner })
        .map_err(err)
}

/// Nearest-neighbor upsampling (the comparison baseline).
#[pyfunction]
fn upsample_nearest(band: &BandGrid, factor: usize) -> BandGrid {
    BandGrid {
        inner: raster::upsample_nearest(&band.inner, factor),
    }
}

fn options_from(
    tile_size: usize,
    tile_overlap: usize,
    ablate: Option<&str>,
    proximity: &str,
) -> PyResult<PipelineOptions> {
    let mut opts = PipelineOptions {
        tile_size,
        tile_overlap,
        ..Default::default()
    };
    opts.unmix.proximity = match proximity {
        "literal" => ProximityMode::Literal,
        "complement" => ProximityMode::Complement,
        other => {
            return Err(PyValueError::new_err(format!(
                "proximity must be 'literal' or 'complement', got {:?}",
                other
            )))
        }
    };
    match ablate {
        None => {}
        Some("no-shared") => opts.unmix.no_shared_values = true,
        Some("no-ratio") => opts.unmix.no_ratio_sharpening = true,
        Some("uniform-weights") => opts.unmix.uniform_weights = true,
        Some(other) => {
            return Err(PyValueError::new_err(format!(
                "ablate must be 'no-shared', 'no-ratio' or 'uniform-weights', got {:?}",
                other
            )))
        }
    }
    Ok(opts)
}

/// Super-resolves every low band of a scene to the resolution of the high
/// bands. Band pixel sizes determine each low band's route (x2, x3, or the
/// two-pass x6). Returns the output bands in the order of `low_bands`.
#[pyfunction]
#[pyo3(signature = (high_bands, low_bands, base_factor=2, tile_size=128, tile_overlap=8, ablate=None, proximity="literal"))]
fn superresolve_scene(
    py: Python<'_>,
    high_bands: Vec<BandGrid>,
    low_bands: Vec<BandGrid>,
    base_factor: usize,
    tile_size: usize,
    tile_overlap: usize,
    ablate: Option<&str>,
    proximity: &str,
) -> PyResult<(Vec<BandGrid>, Py<PyDict>)> {
    let opts = options_from(tile_size, tile_overlap, ablate, proximity)?;
    let manifest = raster::SceneManifest::new(
        "python",
        base_factor,
        unwrap_bands(high_bands),
        unwrap_bands(low_bands),
    )
    .map_err(err)?;
    let res = pipeline::superresolve_scene(&manifest, &opts).map_err(err)?;
    let summary = PyDict::new(py);
    summary.set_item("scene_id", &res.summary.scene_id)?;
    summary.set_item("warnings", &res.summary.warnings)?;
    summary.set_item("total_ms", res.summary.total_ms as u64)?;
    let passes = PyList::empty(py);
    for p in &res.summary.passes {
        let d = PyDict::new(py);
        d.set_item("description", &p.description)?;
        d.set_item("factor", p.factor)?;
        d.set_item("objective", p.objective)?;
        d.set_item("initial_objective", p.initial_objective)?;
        d.set_item("solver_iterations", p.solver_iterations)?;
        passes.append(d)?;
    }
    summary.set_item("passes", passes)?;
    Ok((wrap_bands(res.outputs), summary.into()))
}

/// Universal image quality index between two bands.
#[pyfunction]
fn q_index(x: &BandGrid, y: &BandGrid) -> PyResult<f64> {
    metrics::q_index(&x.inner, &y.inner).map_err(err)
}

/// ERGAS over aligned band lists; `x` bands are the reference.
#[pyfunction]
#[pyo3(signature = (xs, ys, r, mode="literal"))]
fn ergas(xs: Vec<BandGrid>, ys: Vec<BandGrid>, r: f64, mode: &str) -> PyResult<f64> {
    metrics::ergas(&unwrap_bands(xs), &unwrap_bands(ys), r, parse_mode(mode)?).map_err(err)
}

/// Spectral angle between two bands, in degrees.
#[pyfunction]
fn sam(x: &BandGrid, y: &BandGrid) -> PyResult<f64> {
    metrics::sam(&x.inner, &y.inner).map_err(err)
}

fn parse_mode(mode: &str) -> PyResult<ErgasMode> {
    match mode {
        "literal" => Ok(ErgasMode::Literal),
        "standard" => Ok(ErgasMode::Standard),
        other => Err(PyValueError::new_err(format!(
            "ergas mode must be 'literal' or 'standard', got {:?}",
            other
        ))),
    }
}

fn report_to_dict(py: Python<'_>, rep: &metrics::QualityReport) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("global_q", rep.global_q)?;
    d.set_item("global_ergas", rep.global_ergas)?;
    d.set_item("global_sam", rep.global_sam)?;
    let bands = PyList::empty(py);
    for b in &rep.bands {
        let e = PyDict::new(py);
        e.set_item("band_id", &b.band_id)?;
        e.set_item("q", b.q)?;
        e.set_item("ergas", b.ergas)?;
        e.set_item("sam", b.sam)?;
        bands.append(e)?;
    }
    d.set_item("bands", bands)?;
    d.set_item("table", rep.to_table())?;
    Ok(d.into())
}

/// The proxy evaluation protocol: degrade both band classes one resolution
/// step, restore the degraded low class, and compare against the originals.
#[pyfunction]
#[pyo3(signature = (high_bands, low_bands, ergas_mode="literal"))]
fn evaluate_proxy(
    py: Python<'_>,
    high_bands: Vec<BandGrid>,
    low_bands: Vec<BandGrid>,
    ergas_mode: &str,
) -> PyResult<Py<PyDict>> {
    let rep = metrics::evaluate_proxy(
        &unwrap_bands(high_bands),
        &unwrap_bands(low_bands),
        &SolverOptions::default(),
        &UnmixOptions::default(),
        parse_mode(ergas_mode)?,
    )
    .map_err(err)?;
    report_to_dict(py, &rep)
}

/// Compares restored bands against references: per-band and global Q,
/// ERGAS and SAM.
#[pyfunction]
#[pyo3(signature = (reference, restored, r=0.5, ergas_mode="literal"))]
fn quality_report(
    py: Python<'_>,
    reference: Vec<BandGrid>,
    restored: Vec<BandGrid>,
    r: f64,
    ergas_mode: &str,
) -> PyResult<Py<PyDict>> {
    let rep = metrics::build_report(
        &unwrap_bands(reference),
        &unwrap_bands(restored),
        r,
        parse_mode(ergas_mode)?,
    )
    .map_err(err)?;
    report_to_dict(py, &rep)
}

/// Deterministic synthetic scene with hidden truth; returns
/// (high_bands, low_bands, truth_bands).
#[pyfunction]
#[pyo3(signature = (kind="polygons", size=64, high_bands=4, low_bands=2, factor=2, noise=0.0, seed=7))]
fn generate_scene(
    kind: &str,
    size: usize,
    high_bands: usize,
    low_bands: usize,
    factor: usize,
    noise: f64,
    seed: u64,
) -> PyResult<(Vec<BandGrid>, Vec<BandGrid>, Vec<BandGrid>)> {
    let kind = match kind {
        "polygons" => SceneKind::Polygons,
        "edges" => SceneKind::Edges,
        "gradients" => SceneKind::Gradients,
        other => {
            return Err(PyValueError::new_err(format!(
                "kind must be 'polygons', 'edges' or 'gradients', got {:?}",
                other
            )))
        }
    };
    let sc = synth::generate_scene(&SynthSpec {
        kind,
        width: size,
        height: size,
        high_bands,
        low_bands,
        factor,
        noise,
        seed,
    })
    .map_err(err)?;
    Ok((wrap_bands(sc.high), wrap_bands(sc.low), wrap_bands(sc.truth)))
}

/// Loads a scene manifest; returns (scene_id, base_factor, high, low).
#[pyfunction]
fn load_manifest(path: &str) -> PyResult<(String, usize, Vec<BandGrid>, Vec<BandGrid>)> {
    let m = raster::load_manifest(path).map_err(err)?;
    Ok((
        m.scene_id.clone(),
        m.factor,
        wrap_bands(m.high_bands),
        wrap_bands(m.low_bands),
    ))
}

#[pymodule]
fn srunmix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BandGrid>()?;
    m.add_function(wrap_pyfunction!(downsample, m)?)?;
    m.add_function(wrap_pyfunction!(upsample_nearest, m)?)?;
    m.add_function(wrap_pyfunction!(superresolve_scene, m)?)?;
    m.add_function(wrap_pyfunction!(q_index, m)?)?;
    m.add_function(wrap_pyfunction!(ergas, m)?)?;
    m.add_function(wrap_pyfunction!(sam, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_proxy, m)?)?;
    m.add_function(wrap_pyfunction!(quality_report, m)?)?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    Ok(())
}

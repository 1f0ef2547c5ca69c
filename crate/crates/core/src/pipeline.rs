//! Scene orchestration: single-pass x2 super-resolution for half-resolution
//! bands, a two-pass x3-then-x2 route for sixth-resolution bands, tiled
//! execution of the unmixing stage, and the built-in Sentinel-2 band table.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model_fit::{
    fit_geometry, fit_neighbor_coeffs, uniform_model, MixingModel, NeighborCoeffs,
};
use crate::raster::{downsample, BandGrid, SceneManifest};
use crate::solver::SolverOptions;
use crate::unmix::{superresolve_band, UnmixOptions};

/// Options spanning the whole pipeline. Tiling applies to the unmixing
/// stage; the geometry and coefficient fits are global, which is what makes
/// tiled and untiled runs agree exactly.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// Tile core size in low-resolution pixels.
    pub tile_size: usize,
    /// Margin kept around each tile and discarded on stitch, in
    /// low-resolution pixels.
    pub tile_overlap: usize,
    pub solver: SolverOptions,
    pub unmix: UnmixOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            tile_size: 128,
            tile_overlap: 8,
            solver: SolverOptions::default(),
            unmix: UnmixOptions::default(),
        }
    }
}

impl PipelineOptions {
    /// Checks the tiling invariants; returns warnings for legal but
    /// dubious configurations.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.solver.validate()?;
        if self.tile_size == 0 || self.tile_size <= 2 * self.tile_overlap {
            return Err(Error::Precondition(format!(
                "tile size {} must exceed twice the overlap {}",
                self.tile_size, self.tile_overlap
            )));
        }
        let mut warnings = Vec::new();
        if self.tile_overlap == 0 {
            warnings.push("tile overlap is 0; visible seams are expected".into());
        }
        Ok(warnings)
    }
}

/// One Sentinel-2 band of the built-in registry.
#[derive(Debug, Clone, Serialize)]
pub struct BandInfo {
    pub id: &'static str,
    pub wavelength_nm: f64,
    pub bandwidth_nm: f64,
    pub pixel_size_m: f64,
}

/// The Sentinel-2 band table (both satellites share it). B10 is kept: it is
/// meaningful on top-of-atmosphere products even though atmospheric
/// correction drops it.
#[derive(Debug, Clone)]
pub struct BandRegistry {
    pub bands: Vec<BandInfo>,
}

impl BandRegistry {
    pub fn sentinel2() -> Self {
        let b = |id, wl, bw, ps| BandInfo {
            id,
            wavelength_nm: wl,
            bandwidth_nm: bw,
            pixel_size_m: ps,
        };
        BandRegistry {
            bands: vec![
                b("B2", 490.0, 65.0, 10.0),
                b("B3", 560.0, 35.0, 10.0),
                b("B4", 665.0, 30.0, 10.0),
                b("B8", 842.0, 115.0, 10.0),
                b("B5", 705.0, 15.0, 20.0),
                b("B6", 740.0, 15.0, 20.0),
                b("B7", 783.0, 20.0, 20.0),
                b("B8A", 865.0, 20.0, 20.0),
                b("B11", 1610.0, 90.0, 20.0),
                b("B12", 2190.0, 180.0, 20.0),
                b("B1", 443.0, 20.0, 60.0),
                b("B9", 945.0, 20.0, 60.0),
                b("B10", 1375.0, 30.0, 60.0),
            ],
        }
    }

    pub fn lookup(&self, id: &str) -> Option<&BandInfo> {
        self.bands.iter().find(|b| b.id == id)
    }
}

/// Per-pass record for the run summary.
#[derive(Debug, Clone, Serialize)]
pub struct PassSummary {
    pub description: String,
    pub factor: usize,
    pub objective: f64,
    pub initial_objective: f64,
    pub solver_iterations: usize,
    pub fit_ms: u128,
    pub unmix_ms: u128,
    /// Per band: tile count and RMS disagreement of discarded margins
    /// against the stitched result.
    pub bands: Vec<BandPassSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandPassSummary {
    pub band_id: String,
    pub tiles: usize,
    pub seam_rms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scene_id: String,
    pub warnings: Vec<String>,
    pub passes: Vec<PassSummary>,
    pub total_ms: u128,
}

/// The outputs of a scene run, in the manifest's low-band order, all at the
/// high-resolution grid.
#[derive(Debug, Clone)]
pub struct SceneResult {
    pub outputs: Vec<BandGrid>,
    pub summary: RunSummary,
}

/// One fitted pass: geometry model plus neighborhood coefficients, both
/// global over the scene.
pub struct FittedPass {
    pub model: MixingModel,
    pub coeffs: NeighborCoeffs,
    pub high_down: Vec<BandGrid>,
    pub factor: usize,
}

/// Fits the geometry and neighborhood coefficients on a high-resolution
/// band set for the given factor.
pub fn fit_pass(
    high: &[BandGrid],
    factor: usize,
    opts: &PipelineOptions,
) -> Result<FittedPass> {
    let model = if opts.unmix.uniform_weights {
        uniform_model(high, factor)?
    } else {
        fit_geometry(high, factor, &opts.solver)?
    };
    let high_down: Vec<BandGrid> = high
        .iter()
        .map(|b| downsample(b, factor))
        .collect::<Result<_>>()?;
    let coeffs = fit_neighbor_coeffs(&model, &high_down, factor, &opts.solver)?;
    Ok(FittedPass {
        model,
        coeffs,
        high_down,
        factor,
    })
}

/// Super-resolves one low band through the fitted pass, tiling the unmixing
/// stage. Tiles are cut on low-resolution pixel boundaries, processed with
/// an overlap margin, and the margins discarded on stitch; because every
/// unmixing operation only reads within two low-resolution pixels of its
/// output location, tiles reproduce the untiled result exactly.
pub fn run_tiled(
    pass: &FittedPass,
    low: &BandGrid,
    opts: &PipelineOptions,
) -> Result<(BandGrid, BandPassSummary)> {
    let factor = pass.factor;
    let low_w = pass.coeffs.low_width;
    let low_h = pass.coeffs.low_height;
    if low.width != low_w || low.height != low_h {
        return Err(Error::Dimension(format!(
            "band {} is {}x{}, the fitted pass expects {}x{}",
            low.band_id, low.width, low.height, low_w, low_h
        )));
    }

    let ts = opts.tile_size;
    let ov = opts.tile_overlap;
    if low_w <= ts && low_h <= ts {
        let out = superresolve_band(&pass.model, &pass.coeffs, &pass.high_down, low, &opts.unmix)?;
        return Ok((
            out,
            BandPassSummary {
                band_id: low.band_id.clone(),
                tiles: 1,
                seam_rms: 0.0,
            },
        ));
    }

    // tile cores in low-resolution coordinates
    let mut cores = Vec::new();
    let mut cy = 0;
    while cy < low_h {
        let ch = ts.min(low_h - cy);
        let mut cx = 0;
        while cx < low_w {
            let cw = ts.min(low_w - cx);
            cores.push((cx, cy, cw, ch));
            cx += cw;
        }
        cy += ch;
    }

    struct Tile {
        core: (usize, usize, usize, usize),
        ext: (usize, usize, usize, usize),
        out: BandGrid,
    }

    let tiles: Vec<Tile> = cores
        .par_iter()
        .map(|&(cx, cy, cw, ch)| -> Result<Tile> {
            let ex0 = cx.saturating_sub(ov);
            let ey0 = cy.saturating_sub(ov);
            let ex1 = (cx + cw + ov).min(low_w);
            let ey1 = (cy + ch + ov).min(low_h);
            let (ew, eh) = (ex1 - ex0, ey1 - ey0);
            let px0 = ex0 * factor;
            let py0 = ey0 * factor;
            let (pw, ph) = (ew * factor, eh * factor);
            let model = pass.model.crop(px0, py0, pw, ph);
            let coeffs = pass.coeffs.crop(px0, py0, pw, ph);
            let high_down: Vec<BandGrid> = pass
                .high_down
                .iter()
                .map(|b| b.crop(ex0, ey0, ew, eh))
                .collect();
            let low_tile = low.crop(ex0, ey0, ew, eh);
            let out = superresolve_band(&model, &coeffs, &high_down, &low_tile, &opts.unmix)?;
            Ok(Tile {
                core: (cx, cy, cw, ch),
                ext: (ex0, ey0, ew, eh),
                out,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = BandGrid::constant(low_w * factor, low_h * factor, 0.0, low.value_range);
    out.band_id = low.band_id.clone();
    out.center_wavelength = low.center_wavelength;
    out.pixel_size = low.pixel_size / factor as f64;
    out.valid = vec![false; out.values.len()];
    for t in &tiles {
        let (cx, cy, cw, ch) = t.core;
        let (ex0, ey0, ..) = t.ext;
        for y in 0..ch * factor {
            for x in 0..cw * factor {
                let sx = (cx - ex0) * factor + x;
                let sy = (cy - ey0) * factor + y;
                let si = t.out.idx(sx, sy);
                let di = out.idx(cx * factor + x, cy * factor + y);
                out.values[di] = t.out.values[si];
                out.valid[di] = t.out.valid[si];
            }
        }
    }

    // seam check: discarded margins vs the stitched result
    let mut sum = 0.0;
    let mut n = 0usize;
    for t in &tiles {
        let (cx, cy, cw, ch) = t.core;
        let (ex0, ey0, ew, eh) = t.ext;
        for y in 0..eh * factor {
            for x in 0..ew * factor {
                let gx = ex0 * factor + x;
                let gy = ey0 * factor + y;
                let in_core = gx >= cx * factor
                    && gx < (cx + cw) * factor
                    && gy >= cy * factor
                    && gy < (cy + ch) * factor;
                if in_core {
                    continue;
                }
                let si = t.out.idx(x, y);
                let di = out.idx(gx, gy);
                if t.out.valid[si] && out.valid[di] {
                    let d = t.out.values[si] - out.values[di];
                    sum += d * d;
                    n += 1;
                }
            }
        }
    }
    let seam_rms = if n > 0 { (sum / n as f64).sqrt() } else { 0.0 };

    Ok((
        out,
        BandPassSummary {
            band_id: low.band_id.clone(),
            tiles: tiles.len(),
            seam_rms,
        },
    ))
}

fn run_fitted_pass(
    pass: &FittedPass,
    fit_ms: u128,
    lows: &[&BandGrid],
    opts: &PipelineOptions,
    description: &str,
) -> Result<(Vec<BandGrid>, PassSummary)> {
    let t1 = Instant::now();
    let mut outputs = Vec::with_capacity(lows.len());
    let mut band_summaries = Vec::with_capacity(lows.len());
    for low in lows {
        let (out, bs) = run_tiled(pass, low, opts)?;
        outputs.push(out);
        band_summaries.push(bs);
    }
    Ok((
        outputs,
        PassSummary {
            description: description.into(),
            factor: pass.factor,
            objective: pass.model.objective,
            initial_objective: pass.model.initial_objective,
            solver_iterations: pass.model.solver_iterations,
            fit_ms,
            unmix_ms: t1.elapsed().as_millis(),
            bands: band_summaries,
        },
    ))
}

/// Runs the full scene: half-resolution bands go through one x`factor`
/// pass; sixth-resolution bands go through x3 to the intermediate grid
/// (constrained by all intermediate-resolution data: the native
/// half-resolution bands plus the downsampled full-resolution bands) and
/// then x2 to the full grid. Outputs are returned in the manifest's
/// low-band order.
pub fn superresolve_scene(
    manifest: &SceneManifest,
    opts: &PipelineOptions,
) -> Result<SceneResult> {
    let t0 = Instant::now();
    let mut warnings = opts.validate()?;
    warnings.extend(manifest.warnings.iter().cloned());

    let mut by_ratio: Vec<(usize, usize)> = Vec::new(); // (low index, ratio)
    for (i, b) in manifest.low_bands.iter().enumerate() {
        by_ratio.push((i, manifest.low_ratio(b)));
    }
    let pick = |r: usize| -> Vec<usize> {
        by_ratio
            .iter()
            .filter(|&&(_, rr)| rr == r)
            .map(|&(i, _)| i)
            .collect()
    };
    let r2 = pick(2);
    let r3 = pick(3);
    let r6 = pick(6);

    let mut outputs: Vec<Option<BandGrid>> = vec![None; manifest.low_bands.len()];
    let mut passes = Vec::new();

    // the x2 fit on the native high bands is shared between the
    // half-resolution pass and the second pass of the x6 route
    let mut fitted2: Option<(FittedPass, u128)> = None;
    let get_fitted2 = |fitted2: &mut Option<(FittedPass, u128)>| -> Result<()> {
        if fitted2.is_none() {
            let t = Instant::now();
            let pass = fit_pass(&manifest.high_bands, 2, opts)?;
            *fitted2 = Some((pass, t.elapsed().as_millis()));
        }
        Ok(())
    };

    if !r2.is_empty() {
        let lows: Vec<&BandGrid> = r2.iter().map(|&i| &manifest.low_bands[i]).collect();
        get_fitted2(&mut fitted2)?;
        let (pass, fit_ms) = fitted2.as_ref().unwrap();
        let (outs, s) = run_fitted_pass(pass, *fit_ms, &lows, opts, "half-resolution x2")?;
        for (i, o) in r2.iter().zip(outs) {
            outputs[*i] = Some(o);
        }
        passes.push(s);
    }
    if !r3.is_empty() {
        let lows: Vec<&BandGrid> = r3.iter().map(|&i| &manifest.low_bands[i]).collect();
        let t = Instant::now();
        let pass = fit_pass(&manifest.high_bands, 3, opts)?;
        let (outs, s) = run_fitted_pass(
            &pass,
            t.elapsed().as_millis(),
            &lows,
            opts,
            "third-resolution x3",
        )?;
        for (i, o) in r3.iter().zip(outs) {
            outputs[*i] = Some(o);
        }
        passes.push(s);
    }
    if !r6.is_empty() {
        let hw = manifest.high_bands[0].width;
        let hh = manifest.high_bands[0].height;
        if hw % 2 != 0 || hh % 2 != 0 {
            return Err(Error::Dimension(format!(
                "two-pass route needs even high-resolution dimensions, got {}x{}",
                hw, hh
            )));
        }
        // the first pass is constrained by everything available at the
        // intermediate resolution
        let mut mid_high: Vec<BandGrid> = r2
            .iter()
            .map(|&i| manifest.low_bands[i].clone())
            .collect();
        for b in &manifest.high_bands {
            mid_high.push(downsample(b, 2)?);
        }
        let lows: Vec<&BandGrid> = r6.iter().map(|&i| &manifest.low_bands[i]).collect();
        let t = Instant::now();
        let pass1 = fit_pass(&mid_high, 3, opts)?;
        let (mids, s1) = run_fitted_pass(
            &pass1,
            t.elapsed().as_millis(),
            &lows,
            opts,
            "sixth-resolution pass 1 (x3)",
        )?;
        passes.push(s1);
        let mid_refs: Vec<&BandGrid> = mids.iter().collect();
        get_fitted2(&mut fitted2)?;
        let (pass2, fit_ms) = fitted2.as_ref().unwrap();
        let (outs, s2) = run_fitted_pass(
            pass2,
            *fit_ms,
            &mid_refs,
            opts,
            "sixth-resolution pass 2 (x2)",
        )?;
        for (i, o) in r6.iter().zip(outs) {
            outputs[*i] = Some(o);
        }
        passes.push(s2);
    }

    Ok(SceneResult {
        outputs: outputs.into_iter().map(|o| o.unwrap()).collect(),
        summary: RunSummary {
            scene_id: manifest.scene_id.clone(),
            warnings,
            passes,
            total_ms: t0.elapsed().as_millis(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SynthSpec};

    #[test]
    fn registry_matches_published_table() {
        let reg = BandRegistry::sentinel2();
        assert_eq!(reg.bands.len(), 13);
        let expect: &[(&str, f64, f64, f64)] = &[
            ("B2", 490.0, 65.0, 10.0),
            ("B3", 560.0, 35.0, 10.0),
            ("B4", 665.0, 30.0, 10.0),
            ("B8", 842.0, 115.0, 10.0),
            ("B5", 705.0, 15.0, 20.0),
            ("B6", 740.0, 15.0, 20.0),
            ("B7", 783.0, 20.0, 20.0),
            ("B8A", 865.0, 20.0, 20.0),
            ("B11", 1610.0, 90.0, 20.0),
            ("B12", 2190.0, 180.0, 20.0),
            ("B1", 443.0, 20.0, 60.0),
            ("B9", 945.0, 20.0, 60.0),
            ("B10", 1375.0, 30.0, 60.0),
        ];
        for (id, wl, bw, ps) in expect {
            let b = reg.lookup(id).unwrap();
            assert_eq!(b.wavelength_nm, *wl);
            assert_eq!(b.bandwidth_nm, *bw);
            assert_eq!(b.pixel_size_m, *ps);
        }
        assert!(reg.lookup("B99").is_none());
    }

    #[test]
    fn tile_options_invariant() {
        let bad = PipelineOptions {
            tile_size: 16,
            tile_overlap: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let warned = PipelineOptions {
            tile_overlap: 0,
            ..Default::default()
        };
        assert_eq!(warned.validate().unwrap().len(), 1);
        assert!(PipelineOptions::default().validate().unwrap().is_empty());
    }

    fn small_scene(seed: u64) -> SceneManifest {
        let sc = generate_scene(&SynthSpec {
            width: 48,
            height: 48,
            seed,
            ..Default::default()
        })
        .unwrap();
        let mut low = sc.low;
        for b in low.iter_mut() {
            b.pixel_size = 20.0;
        }
        SceneManifest::new("test", 2, sc.high, low).unwrap()
    }

    #[test]
    fn tiled_equals_untiled() {
        let manifest = small_scene(3);
        let untiled = superresolve_scene(&manifest, &PipelineOptions::default()).unwrap();
        let tiled_opts = PipelineOptions {
            tile_size: 8,
            tile_overlap: 3,
            ..Default::default()
        };
        let tiled = superresolve_scene(&manifest, &tiled_opts).unwrap();
        for (a, b) in untiled.outputs.iter().zip(&tiled.outputs) {
            assert_eq!(a.values, b.values, "tiled and untiled outputs differ");
        }
        let pass = &tiled.summary.passes[0];
        assert!(pass.bands[0].tiles > 1);
        // margins may legitimately disagree (their neighborhoods are
        // clipped by the crop); the report just has to be well-formed
        assert!(pass.bands[0].seam_rms.is_finite() && pass.bands[0].seam_rms >= 0.0);
    }

    #[test]
    fn outputs_conserve_reflectance() {
        let manifest = small_scene(5);
        let res = superresolve_scene(&manifest, &PipelineOptions::default()).unwrap();
        for (out, low) in res.outputs.iter().zip(&manifest.low_bands) {
            assert_eq!(out.width, manifest.high_bands[0].width);
            let down = downsample(out, 2).unwrap();
            for (a, b) in down.values.iter().zip(&low.values) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn two_pass_route_round_trips() {
        let sc = generate_scene(&SynthSpec {
            width: 48,
            height: 48,
            factor: 6,
            low_bands: 1,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let mut low = sc.low;
        low[0].pixel_size = 60.0;
        let manifest = SceneManifest::new("sixth", 2, sc.high, low).unwrap();
        let res = superresolve_scene(&manifest, &PipelineOptions::default()).unwrap();
        assert_eq!(res.outputs[0].width, 48);
        assert_eq!(res.summary.passes.len(), 2);
        // composed block means by 6 recover the input
        let down = downsample(&downsample(&res.outputs[0], 2).unwrap(), 3).unwrap();
        for (a, b) in down.values.iter().zip(&manifest.low_bands[0].values) {
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1.0),
                "round trip broken: {} vs {}",
                a,
                b
            );
        }
    }

    #[test]
    fn mixed_ratio_scene_keeps_band_order() {
        let sc = generate_scene(&SynthSpec {
            width: 24,
            height: 24,
            factor: 2,
            low_bands: 1,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let six = generate_scene(&SynthSpec {
            width: 24,
            height: 24,
            factor: 6,
            low_bands: 1,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let mut l20 = sc.low[0].clone();
        l20.pixel_size = 20.0;
        l20.band_id = "twenty".into();
        let mut l60 = six.low[0].clone();
        l60.pixel_size = 60.0;
        l60.band_id = "sixty".into();
        let manifest = SceneManifest::new("mixed", 2, sc.high, vec![l60, l20]).unwrap();
        let res = superresolve_scene(&manifest, &PipelineOptions::default()).unwrap();
        assert_eq!(res.outputs[0].band_id, "sixty");
        assert_eq!(res.outputs[1].band_id, "twenty");
        assert_eq!(res.outputs[0].width, 24);
        assert_eq!(res.outputs[1].width, 24);
    }
}

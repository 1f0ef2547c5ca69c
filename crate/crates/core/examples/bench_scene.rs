fn main() {
    use srunmix::synth::*;
    use srunmix::raster::SceneManifest;
    use srunmix::pipeline::*;
    let t0 = std::time::Instant::now();
    // full Sentinel-2 complement: 4 high 10m, 6 at 20m, 3 at 60m, 408x300 high-res
    let sc = generate_scene(&SynthSpec { width: 408, height: 300, high_bands: 4, low_bands: 6, factor: 2, seed: 42, ..Default::default() }).unwrap();
    let sc6 = generate_scene(&SynthSpec { width: 408, height: 300, high_bands: 4, low_bands: 3, factor: 6, seed: 43, ..Default::default() }).unwrap();
    let mut lows = sc.low;
    for b in lows.iter_mut() { b.pixel_size = 20.0; }
    let mut lows6 = sc6.low;
    for b in lows6.iter_mut() { b.pixel_size = 60.0; }
    lows.extend(lows6);
    let manifest = SceneManifest::new("bench", 2, sc.high, lows).unwrap();
    println!("scene generated in {:?}", t0.elapsed());
    let t1 = std::time::Instant::now();
    let res = superresolve_scene(&manifest, &PipelineOptions::default()).unwrap();
    println!("superresolve in {:?}", t1.elapsed());
    for p in &res.summary.passes {
        println!("pass {}: fit {} ms unmix {} ms iters {}", p.description, p.fit_ms, p.unmix_ms, p.solver_iterations);
    }
}

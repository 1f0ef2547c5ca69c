#!/usr/bin/env python3
"""Smoke test for the srunmix_py extension module.

Build the module first, then run this script:

    cargo build -p srunmix-py --release
    cp target/release/libsrunmix_py.so python/srunmix_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import srunmix_py as sr


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    # band construction, save/load round trip
    band = sr.BandGrid(2, 2, [0.1, 0.2, 0.3, 0.4], band_id="demo", value_range=(0.0, 1.0))
    assert band.width == 2 and band.height == 2
    path = "/tmp/srunmix_smoke_band.srb"
    band.save(path)
    back = sr.BandGrid.load(path)
    # the band file carries no id; it is taken from the file stem
    assert back.band_id == "srunmix_smoke_band"
    for a, b in zip(back.values, band.values):
        approx(a, b, 1e-6)  # float32 payload
    os.remove(path)

    # block-mean downsampling preserves the mean
    down = sr.downsample(band, 2)
    approx(down.values[0], 0.25, 1e-12)

    # metric identities
    approx(sr.q_index(band, band), 1.0, 1e-12)
    approx(sr.ergas([band], [band], 0.5), 0.0, 1e-12)
    approx(sr.sam(band, band), 0.0, 1e-5)

    # full scene round trip on a synthetic scene with hidden truth
    high, low, truth = sr.generate_scene(kind="polygons", size=32, seed=7)
    for b in low:
        b.pixel_size = 20.0
    outputs, summary = sr.superresolve_scene(high, low, base_factor=2)
    assert len(outputs) == len(low)
    assert summary["passes"][0]["objective"] <= summary["passes"][0]["initial_objective"]

    # reflectance conservation: block means reproduce the inputs
    for out, src in zip(outputs, low):
        again = sr.downsample(out, 2)
        for a, b in zip(again.values, src.values):
            approx(a, b, 1e-10)

    # the restored bands beat nearest-neighbor upsampling against truth
    nn = [sr.upsample_nearest(b, 2) for b in low]
    ours = sr.quality_report(truth, outputs)
    base = sr.quality_report(truth, nn)
    assert ours["global_q"] > base["global_q"], (ours["global_q"], base["global_q"])
    assert ours["global_ergas"] < base["global_ergas"]
    assert "Global" in ours["table"]

    # proxy evaluation protocol runs end to end
    rep = sr.evaluate_proxy(high, low)
    assert 0.0 < rep["global_q"] <= 1.0
    assert len(rep["bands"]) == len(low)

    print("smoke test passed:", f"Q={ours['global_q']:.4f}",
          f"ERGAS={ours['global_ergas']:.3f}", f"(baseline Q={base['global_q']:.4f})")


if __name__ == "__main__":
    main()

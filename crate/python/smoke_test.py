"""Smoke test for the pullback_mia_py extension.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import json
import math
import tempfile

import numpy as np

import pullback_mia_py as pm


def check_spectrum():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(48, 12))
    sigma, log_vol = pm.randomized_spectrum(a.tolist(), seed=3)
    ref = np.linalg.svd(a, compute_uv=False)
    assert np.allclose(sigma, ref, rtol=1e-3), (sigma, ref)
    assert math.isclose(log_vol, float(np.log(ref).sum()), rel_tol=1e-3)
    exact = pm.influence(a.tolist(), probes=None)
    assert np.allclose(exact, 0.5 * np.log((a * a).sum(axis=0) + 1e-12))


def check_metrics():
    auc, asr, tpr = pm.roc_metrics([0.1, 0.2], [0.8, 0.9])
    assert (auc, asr, tpr) == (100.0, 100.0, 100.0)
    auc, _, _ = pm.roc_metrics([0.2, 0.6], [0.4, 0.8])
    assert math.isclose(auc, 75.0)
    v = [3.0, -4.0, 12.0]
    assert math.isclose(pm.masked_norm(v, 2.0, [True, True, False]), 5.0)
    assert pm.masked_norm(v, 4.0) == pm.masked_norm(v, 4.0, [True, True, True])


def check_spectral():
    img = np.random.default_rng(1).normal(size=(16, 16))
    lf, hf = pm.spectral_energy(img.ravel().tolist(), 16, 16, 2.5)
    total = float((np.abs(np.fft.fft2(img)) ** 2).sum())
    assert math.isclose(lf + hf, total, rel_tol=1e-10)


def check_pipeline():
    cfg = json.loads(pm.Config().to_json())
    cfg["dataset"]["samples"] = 16
    cfg["vae"]["epochs"] = 2
    cfg["ldm"]["epochs"] = 2
    cfg["baseline_trials"] = 3
    with tempfile.TemporaryDirectory() as tmp:
        cfg["output_dir"] = tmp
        run_dir = pm.run_pipeline(pm.Config.from_json(json.dumps(cfg)))
        rendered = pm.report(run_dir)
        methods = {r["method"] for r in rendered["rows"]}
        assert methods == {"Loss", "SimA", "SecMI", "PIA"}, methods
        assert len(rendered["mean_delta"]) == 3
    try:
        pm.Config.from_json('{"bogus": 1}')
    except pm.PullbackError:
        pass
    else:
        raise AssertionError("unknown config field accepted")


if __name__ == "__main__":
    for check in (check_spectrum, check_metrics, check_spectral, check_pipeline):
        check()
        print(f"ok  {check.__name__}")

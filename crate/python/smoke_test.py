"""Smoke test for the qefb Python module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""
import json
import math

import numpy as np

import qefb

g = qefb.Graph.generate(24, edges=60, seed=3)
assert g.nodes == 24 and g.edge_count == 60 and g.is_connected()
assert sorted(qefb.Graph.parse(g.to_text()).edges()) == sorted(g.edges())

s = g.shift("scaled_laplacian")
S = np.array(s.matrix())
assert np.allclose(S, S.T)
ev = np.linalg.eigvalsh(S)
assert np.allclose(sorted(s.eigenvalues()), ev, atol=1e-10)
assert abs(s.rho - np.abs(ev).max()) < 1e-10

# mean of the sampled shift
p = 0.6
draws = np.mean([s.sample(p, k) for k in range(4000)], axis=0)
assert np.abs(draws - np.array(s.mean(p))).max() < 0.05

fir = qefb.Filter.lowpass(s, 6, 0.5)
x = np.random.default_rng(0).standard_normal(24)
w, V = np.linalg.eigh(S)
h = np.polyval(fir.taps()[::-1], w)
assert np.allclose(fir.apply(s, list(x)), V @ (h * (V.T @ x)), atol=1e-10)

arma = qefb.Filter.arma1(0.5, s)
assert np.allclose(arma.apply(s, list(x)), np.linalg.solve(np.eye(24) + 0.5 * S, x), atol=1e-9)

vals = list(np.linspace(-0.9, 0.9, 101))
q, e = qefb.quantize(vals, 6, 1.0, dither=True, seed=1)
assert all(a + b == c for a, b, c in zip(vals, e, q))
assert math.isclose(qefb.noise_variance(6), (2.0 / 64) ** 2 / 12)

sigma2 = [qefb.noise_variance(10)]
for model in (qefb.NoiseModel(s, fir, sigma2), qefb.NoiseModel(s, fir, sigma2, p=0.7),
              qefb.NoiseModel(s, arma, sigma2), qefb.NoiseModel(s, arma, sigma2, p=0.7)):
    off = model.predict("off")
    mode = "per_branch_diag" if off["kind"].startswith("arma") else "per_step_diag"
    params, zeta = model.solve(mode)
    best = model.predict(mode, params)
    assert math.isclose(best["zeta"], zeta, rel_tol=1e-12)
    assert zeta <= off["zeta"]
    assert max(abs(v) for v in model.gradient(mode, params)) < 1e-8 * max(1.0, off["zeta"])

scenario = json.dumps({
    "id": "smoke",
    "graph": {"generate": {"nodes": 16, "connectivity": {"edges": 30}, "seed": 5}},
    "filters": [{"lowpass": {"order": 4, "cutoff": 0.5}}],
    "quantizer": {"bits": [8]},
    "trials": 200,
    "seed": 7,
})
table = qefb.simulate(scenario)
rows = table["rows"]
assert len(rows) == 2
gain = rows[1]["snr_unbiased"] - rows[0]["snr_unbiased"]
cells = qefb.predict(scenario)
assert len(cells) == 1 and cells[0]["predicted_gain_db"] > 0 and gain > 0

report = qefb.validate("gramian", quick=True)
assert all(c["passed"] for c in report["checks"])

print(f"ok: feedback gain {gain:.2f} dB (predicted {cells[0]['predicted_gain_db']:.2f} dB)")

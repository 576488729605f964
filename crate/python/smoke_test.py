"""Smoke test for the pdqkd_py extension module.

Build and run from the repository root:

    cargo build --release -p pdqkd-python --features extension-module
    cp target/release/libpdqkd_py.so python/pdqkd_py.so
    python3 python/smoke_test.py

(`maturin develop -m crates/python/Cargo.toml --features extension-module`
installs the module into the active environment instead.)
"""

import math

import pdqkd_py as q

src = q.SourceModel(0.3)
assert abs(sum(src.photon_prob(n) for n in range(200)) - 1.0) < 1e-12
assert src.trigger_prob(0) == src.dark_a

ch = q.ChannelModel(50.0)
assert math.isclose(ch.transmittance(), 0.01, rel_tol=1e-12)
obs = ch.observables(src)
assert 0.0 < obs.qber_t < 0.5 and 0.0 < obs.qber_nt < 0.5

finite = q.key_length(src, obs, pulses=1e13, p_pe=0.25)
asym = q.optimize_rate(50.0)
assert 0.0 < finite["rate"] < asym["rate"], (finite, asym)

best = q.optimize_rate(50.0, pulses=1e11)
assert best["rate"] > 0.0 and 0.0 < best["mu"] < 1.0

try:
    q.SourceModel(-1.0)
except ValueError as err:
    print("rejected negative mu:", err)
else:
    raise AssertionError("negative mu accepted")

rows = q.verify(seed=7, trials=2000)
assert len(rows) == 19 and all(r["passed"] for r in rows)

print(obs)
print(f"rate(50 km, N=1e11) = {best['rate']:.4e} at mu={best['mu']:.3f}, p_pe={best['p_pe']:.3f}")
print(f"asymptotic rate(50 km) = {asym['rate']:.4e}")
print("smoke test passed")

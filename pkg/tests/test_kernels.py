import os
import subprocess
import sys

import numpy as np
import pytest

from topicast import _accel, kernels

pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


def gibbs_args(rng, n_tokens=500, n_docs=40, k=5, V=30):
    words = rng.integers(0, V, n_tokens).astype(np.int64)
    docs = np.sort(rng.integers(0, n_docs, n_tokens)).astype(np.int64)
    z = rng.integers(0, k, n_tokens).astype(np.int64)
    ndk, nkw, nk = np.zeros((n_docs, k), np.int64), np.zeros((k, V), np.int64), np.zeros(k, np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    np.add.at(nk, z, 1)
    return words, docs, z, ndk, nkw, nk, 50.0 / k, 0.01, V * 0.01, rng.random(n_tokens)


def run_both(name, args):
    out = []
    for table in (kernels.NUMBA_KERNELS, kernels.NUMPY_KERNELS):
        copies = [a.copy() if isinstance(a, np.ndarray) else a for a in args]
        ret = table[name](*copies)
        out.append((ret, copies))
    return out


def test_gibbs_sweep_bit_identical(rng):
    (r1, a1), (r2, a2) = run_both("gibbs_sweep", gibbs_args(rng))
    for x, y in zip(a1, a2):
        if isinstance(x, np.ndarray):
            assert np.array_equal(x, y)
    if r1 is not None:
        assert np.array_equal(np.asarray(r1), np.asarray(r2))


def test_fold_in_bit_identical(rng):
    k, V, n, iters = 6, 25, 12, 30
    args = (rng.integers(0, V, n).astype(np.int64), rng.dirichlet(np.ones(V), size=k), 50.0 / k,
            rng.integers(0, k, n).astype(np.int64), rng.random((iters, n)), iters // 2)
    (r1, a1), (r2, a2) = run_both("fold_in", args)
    assert np.array_equal(np.asarray(r1), np.asarray(r2))
    assert np.array_equal(a1[3], a2[3])


@pytest.mark.parametrize("local", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_conv_local_flavours_agree(local, seed):
    rng = np.random.default_rng(seed)
    n, cin, cout = rng.integers(1, 4, size=3)
    fr, fc = rng.integers(1, 4, size=2)
    R, C = fr + rng.integers(0, 3), fc + rng.integers(0, 3)
    npos = (R - fr + 1) * (C - fc + 1)
    x = rng.normal(size=(n, cin, R, C))
    if local:
        w, b, tag = rng.normal(size=(npos, cout, cin, fr, fc)), rng.normal(size=(npos, cout)), "local"
    else:
        w, b, tag = rng.normal(size=(cout, cin, fr, fc)), rng.normal(size=cout), "conv"
    dy = rng.normal(size=(n, cout, R - fr + 1, C - fc + 1))
    f1 = kernels.NUMBA_KERNELS[f"{tag}_forward"](x, w, b)
    f2 = kernels.NUMPY_KERNELS[f"{tag}_forward"](x, w, b)
    np.testing.assert_allclose(f1, f2, rtol=0, atol=1e-12)
    for g1, g2 in zip(kernels.NUMBA_KERNELS[f"{tag}_backward"](x, w, dy),
                      kernels.NUMPY_KERNELS[f"{tag}_backward"](x, w, dy)):
        np.testing.assert_allclose(g1, g2, rtol=0, atol=1e-12)


@pytest.mark.parametrize("value,backend", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(value, backend):
    env = dict(os.environ, **{_accel.DISABLE_FLAG: value})
    code = "from topicast import _accel, kernels; print(_accel.backend(), kernels.conv_forward.__name__)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, fn = out.stdout.split()
    assert name == backend and fn.endswith(backend)


def test_flag_spellings(monkeypatch):
    for v in ("1", "true", "YES", " on "):
        monkeypatch.setenv(_accel.DISABLE_FLAG, v)
        assert _accel._flag_set()
    for v in ("", "0", "no"):
        monkeypatch.setenv(_accel.DISABLE_FLAG, v)
        assert not _accel._flag_set()

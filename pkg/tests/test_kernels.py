import copy
import subprocess
import sys

import numpy as np
import pytest

from polargrad import _mlpref, kernels

try:
    from polargrad import _fastmlp
except ImportError:
    _fastmlp = None

needs_ext = pytest.mark.skipif(_fastmlp is None, reason="compiled kernels not built")


def random_net(rng, sizes=(3, 16, 16, 1)):
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        Ws.append(rng.standard_normal((fan_in, fan_out)))
        bs.append(rng.standard_normal(fan_out))
    return Ws, bs


class TestBackendSelection:
    def test_a_backend_is_active(self):
        assert kernels.BACKEND in ("cython", "python")

    def test_env_var_forces_fallback(self):
        out = subprocess.run(
            [sys.executable, "-c",
             "from polargrad import kernels; print(kernels.BACKEND)"],
            capture_output=True, text=True,
            env={"PATH": "/usr/bin:/bin", "POLARGRAD_PURE_PYTHON": "1"},
        )
        assert out.stdout.strip() == "python"


@needs_ext
class TestBackendEquivalence:
    def test_forward(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            Ws, bs = random_net(rng)
            X = rng.standard_normal((7, 3))
            np.testing.assert_allclose(
                _fastmlp.forward(X, Ws, bs), _mlpref.forward(X, Ws, bs),
                rtol=0, atol=1e-12,
            )

    def test_forward_cached(self):
        rng = np.random.default_rng(1)
        Ws, bs = random_net(rng)
        X = rng.standard_normal((5, 3))
        for a, b in zip(_fastmlp.forward_cached(X, Ws, bs),
                        _mlpref.forward_cached(X, Ws, bs)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_param_grads(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            Ws, bs = random_net(rng)
            X = rng.standard_normal((6, 3))
            dy = rng.standard_normal(6)
            _, h1, h2 = _mlpref.forward_cached(X, Ws, bs)
            fast = _fastmlp.param_grads(X, h1, h2, dy, Ws)
            ref = _mlpref.param_grads(X, h1, h2, dy, Ws)
            for fa, ra in zip(fast[0] + fast[1], ref[0] + ref[1]):
                np.testing.assert_allclose(fa, ra, rtol=0, atol=1e-12)

    def test_sgd_step_parity(self):
        rng = np.random.default_rng(3)
        Ws, bs = random_net(rng)
        X = rng.standard_normal((9, 3))
        y = rng.standard_normal(9)
        W1, b1 = copy.deepcopy(Ws), copy.deepcopy(bs)
        W2, b2 = copy.deepcopy(Ws), copy.deepcopy(bs)
        for _ in range(25):
            l1 = _fastmlp.sgd_mse_step(X, y, W1, b1, 0.01)
            l2 = _mlpref.sgd_mse_step(X, y, W2, b2, 0.01)
            assert l1 == pytest.approx(l2, rel=1e-12)
        for a, b in zip(W1 + b1, W2 + b2):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)

    def test_loss_decreases(self):
        rng = np.random.default_rng(4)
        Ws, bs = random_net(rng)
        X = rng.standard_normal((32, 3))
        y = rng.standard_normal(32)
        losses = [_fastmlp.sgd_mse_step(X, y, Ws, bs, 0.05) for _ in range(200)]
        assert losses[-1] < losses[0] * 0.5


class TestBenchmarkScript:
    def test_smoke(self):
        out = subprocess.run(
            [sys.executable, "benchmarks/bench_kernels.py", "--batch", "8",
             "--hidden", "16", "--repeats", "50"],
            capture_output=True, text=True,
        )
        assert out.returncode == 0, out.stderr
        assert "python" in out.stdout

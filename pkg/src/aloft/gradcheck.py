"""Finite-difference suites for every differentiable primitive and a tiny model."""

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .model import init_params, model_forward, patch_embed, presets
from .numerics import Parameter, grad_check
from .rng import Rng
from .spectral import dft2_t, idft2_t


@dataclass
class SuiteResult:
    name: str
    dtype: str
    report: nx.GradCheckReport

    @property
    def passed(self):
        return self.report.passed

    def __str__(self):
        return f"{self.name:<16} {self.dtype:<8} {self.report}"


def _complex(dtype):
    return np.complex64 if dtype == np.float32 else np.complex128


def _weighted(y, rng):
    # a random projection gives every output element a distinct adjoint
    w = rng.normal(y.shape).astype(y.dtype)
    return nx.tsum(nx.mul(y, w))


def _param(rng, shape, dtype, name, scale=1.0):
    return Parameter((rng.normal(shape) * scale).astype(dtype), name)


def _cparam(rng, shape, dtype, name):
    z = rng.normal(shape) + 1j * rng.normal(shape)
    return Parameter(z.astype(_complex(dtype)), name)


def _model_case(rng, dtype, depths, dims):
    cfg = presets("mini", stage_depths=depths, stage_dims=dims, input_hw=(16, 16))
    params = init_params(cfg, seed=0, dtype=dtype)
    # move away from the zero-bias, small-weight init so no gradient is trivially zero
    for p in params.values():
        noise = rng.normal(p.shape) * 0.3
        if np.iscomplexobj(p.data):
            noise = noise + 1j * rng.normal(p.shape) * 0.3
        p.data = (p.data + noise).astype(p.dtype)
    x = rng.uniform((2, 16, 16, 3)).astype(dtype)
    labels = np.array([0, 2])

    def loss():
        return nx.cross_entropy(model_forward(x, params, cfg, "eval"), labels)

    return loss, list(params.values())


def _cases(rng, dtype):
    x = _param(rng, (3, 4), dtype, "x")
    w = _param(rng, (4, 5), dtype, "w")
    b = _param(rng, (5,), dtype, "b")
    yield "linear", lambda: _weighted(nx.linear(x, w, b), rng.child(1)), [x, w, b]

    x = _param(rng, (2, 3, 4), dtype, "x")
    w = _param(rng, (4, 2), dtype, "w")
    yield "matmul", lambda: _weighted(nx.matmul(x, w), rng.child(2)), [x, w]

    x = _param(rng, (3, 6), dtype, "x")
    g = _param(rng, (6,), dtype, "gamma")
    be = _param(rng, (6,), dtype, "beta")
    yield "layer_norm", lambda: _weighted(nx.layer_norm(x, g, be), rng.child(3)), [x, g, be]

    x = _param(rng, (10,), dtype, "x", scale=2.0)
    yield "gelu", lambda: _weighted(nx.gelu(x), rng.child(4)), [x]

    logits = _param(rng, (2, 3), dtype, "logits")
    yield "cross_entropy", lambda: nx.cross_entropy(logits, np.array([2, 0])), [logits]

    x = _param(rng, (2, 3, 4), dtype, "x")
    yield "reductions", lambda: _weighted(nx.mean(nx.transpose(x, (2, 0, 1)), axis=2), rng.child(5)), [x]

    x = _param(rng, (1, 8, 8, 2), dtype, "x")
    w = _param(rng, (16 * 2, 3), dtype, "w")
    b = _param(rng, (3,), dtype, "b")
    yield "patch_embed", lambda: _weighted(patch_embed(x, w, b, 4), rng.child(6)), [x, w, b]

    # small grids take the matrix DFT; 18 and the prime 17 take the FFT paths
    for h, wd in ((5, 6), (18, 17)):
        x = _param(rng, (1, h, wd, 2), dtype, "x")
        filt = _cparam(rng, (h, wd, 2), dtype, "filter")

        def spectral(x=x, filt=filt, h=h, wd=wd):
            return _weighted(idft2_t(nx.mul(dft2_t(x), filt)), rng.child(7, h))

        yield f"global_filter_{h}x{wd}", spectral, [x, filt]

    z = _cparam(rng, (2, 3, 3, 2), dtype, "z")
    slope = rng.child(8).uniform((2, 3, 3, 2)).astype(dtype)

    def affine():
        frozen = nx.frozen_affine(z, z.data * slope + 1.0, slope)
        return _weighted(idft2_t(frozen), rng.child(9))

    yield "frozen_affine", affine, [z]

    # one stage of 4x4 tokens, then two stages to cover the downsampling merge
    loss, params = _model_case(rng.child(10), dtype, [1], [4])
    yield "tiny_model", loss, params
    loss, params = _model_case(rng.child(11), dtype, [1, 1], [4, 8])
    yield "two_stage_model", loss, params


def run_suites(dtypes=(np.float32, np.float64), seed=0):
    """Run every case at each precision; tolerances are 1e-3 (f32) and 1e-6 (f64)."""
    results = []
    for dtype in dtypes:
        dtype = np.dtype(dtype).type
        for name, f, params in _cases(Rng(seed, (0x6C, np.dtype(dtype).itemsize)), dtype):
            results.append(SuiteResult(name, np.dtype(dtype).name, grad_check(f, params)))
    return results

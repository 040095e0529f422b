"""Dynamic low-frequency spectrum transforms and their ablation variants.

All transforms take a centered complex spectrum batch ``B x H x W x C`` and
touch only the positions of a *support* mask (the low-frequency box by
default).  Everything outside the support is returned bit-for-bit.

Two families resample the band from its batch distribution:

* element level (``aloft_e``): each element moves by ``eps * Sigma`` where
  ``Sigma`` is the population std of that element across the batch;
* statistic level (``aloft_s``): per-channel mean and std of the band are
  resampled from their batch spreads and the band is re-standardized.

With ``component_mode="amplitude"`` the amplitude is perturbed and the
phase kept; ``"reim"`` perturbs real and imaginary parts independently.
"""

from dataclasses import asdict, dataclass

import numba as nb
import numpy as np

from .errors import DimensionError, ValidationError
from .spectral import build_mask

METHODS = ("none", "aloft_e", "aloft_s", "swap_low", "mix_low", "band_drop")
NOISES = ("gaussian", "uniform", "random")
SIGMA_EPS = 1e-6

_DEFAULT_ALPHA = {"aloft_e": 1.0, "aloft_s": 0.9}


@dataclass
class AloftConfig:
    method: str = "none"
    alpha: float = None
    ratio: float = 0.5
    noise: str = "gaussian"
    component_mode: str = "amplitude"
    target_band: str = "low"
    statistic_form: str = "conventional"
    drop_band: str = "high"

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = _DEFAULT_ALPHA.get(self.method, 1.0)
        choices = {
            "method": METHODS,
            "noise": NOISES,
            "component_mode": ("amplitude", "reim"),
            "target_band": ("low", "high", "both"),
            "statistic_form": ("conventional", "paper_literal"),
            "drop_band": ("low", "high"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValidationError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValidationError(f"ratio must lie in [0, 1], got {self.ratio}")
        self.alpha = float(self.alpha)
        self.ratio = float(self.ratio)

    def to_dict(self):
        return asdict(self)


@dataclass
class ChannelStats:
    mu: np.ndarray           # B x C
    sigma: np.ndarray        # B x C
    sigma_mu: np.ndarray     # C
    sigma_sigma: np.ndarray  # C


def batch_element_sigma(values):
    """Population std of every element across the batch axis."""
    values = np.asarray(values)
    if values.shape[0] < 1:
        raise ValidationError("batch_element_sigma needs at least one sample")
    return values.std(axis=0)


def _noise(rng, shape, spread, alpha, kind, dtype):
    """Additive perturbation for values whose batch spread is ``spread``."""
    if kind == "gaussian":
        eps = rng.normal(shape, std=alpha)
        return (eps * spread).astype(dtype, copy=False)
    if kind == "uniform":
        return ((2.0 * rng.uniform(shape) - 1.0) * spread).astype(dtype, copy=False)
    return rng.normal(shape).astype(dtype, copy=False)


def _real_dtype(z):
    return np.float32 if z.dtype == np.complex64 else np.float64


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _rescale(z, amp, new_amp, out):
    # rescale rather than rebuild from polar form, so an unchanged amplitude
    # reproduces the input exactly
    for i in range(z.size):
        a = amp[i]
        out[i] = z[i] * (new_amp[i] / a) if a > 0 else new_amp[i]


def _with_amplitude(z, amp, new_amp):
    z = np.ascontiguousarray(z)
    out = np.empty_like(z)
    _rescale(z.reshape(-1), np.ascontiguousarray(amp, dtype=_real_dtype(z)).reshape(-1),
             np.ascontiguousarray(new_amp, dtype=_real_dtype(z)).reshape(-1), out.reshape(-1))
    return out


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _perturb_amplitude(vals, draws, scaled, out):
    """Move each amplitude of ``vals`` (B x S x C) by its draw.

    Draws are in units of the batch std at that element when ``scaled``.
    Amplitudes clamp at zero and phases are kept.
    """
    b, s, c = vals.shape
    rdt = draws.dtype.type
    amp = np.empty((b, s, c), dtype=rdt)
    mean = np.zeros((s, c))
    var = np.zeros((s, c))
    for i in range(b):
        for j in range(s):
            for k in range(c):
                v = vals[i, j, k]
                a = np.sqrt(v.real * v.real + v.imag * v.imag)
                amp[i, j, k] = a
                mean[j, k] += a
    mean /= b
    for i in range(b):
        for j in range(s):
            for k in range(c):
                d = amp[i, j, k] - mean[j, k]
                var[j, k] += d * d
    for i in range(b):
        for j in range(s):
            for k in range(c):
                a = amp[i, j, k]
                noise = draws[i, j, k] * rdt(np.sqrt(var[j, k] / b)) if scaled else draws[i, j, k]
                na = max(a + noise, rdt(0))
                out[i, j, k] = vals[i, j, k] * (na / a) if a > 0 else na


def _support(low, support, ratio):
    if low.ndim != 4:
        raise DimensionError(f"expected B x H x W x C spectrum, got shape {low.shape}")
    if support is None:
        support = build_mask(low.shape[1], low.shape[2], ratio).bits
    support = np.asarray(support, dtype=bool)
    if support.shape != low.shape[1:3]:
        raise DimensionError(f"support {support.shape} does not match spectrum grid {low.shape[1:3]}")
    return support


def aloft_e(low, cfg, rng, support=None):
    """Element-level resampling of the band on ``support``."""
    out, _ = _aloft_e(np.asarray(low), cfg, rng, _support(np.asarray(low), support, cfg.ratio))
    return out


def _aloft_e(z, cfg, rng, support):
    vals = z[:, support, :]  # B x S x C
    rdt = _real_dtype(z)
    if cfg.component_mode == "amplitude":
        new_vals = np.empty_like(vals)
        if cfg.noise == "gaussian":
            draws = rng.normal(vals.shape, std=cfg.alpha)
        elif cfg.noise == "uniform":
            draws = 2.0 * rng.uniform(vals.shape) - 1.0
        else:
            draws = rng.normal(vals.shape)
        _perturb_amplitude(vals, draws.astype(rdt), cfg.noise != "random", new_vals)
    else:
        new_vals = np.empty_like(vals)
        for comp, dest in ((vals.real, "real"), (vals.imag, "imag")):
            sigma = batch_element_sigma(comp)
            setattr(new_vals, dest, comp + _noise(rng, comp.shape, sigma, cfg.alpha, cfg.noise, rdt))
    out = z.copy()
    out[:, support, :] = new_vals
    return out, np.ones((), dtype=rdt)


def _stats(values):
    mu = values.mean(axis=1)
    sigma = values.std(axis=1)
    return ChannelStats(mu, sigma, mu.std(axis=0), sigma.std(axis=0))


def channel_stats(low_amp, mask):
    """Per-(sample, channel) mean/std over mask support, and their batch spreads."""
    low_amp = np.asarray(low_amp)
    bits = mask.bits if hasattr(mask, "bits") else np.asarray(mask, dtype=bool)
    if not bits.any():
        raise ValidationError("channel_stats: mask has empty support")
    if low_amp.shape[1:3] != bits.shape:
        raise DimensionError(f"channel_stats: values {low_amp.shape} vs mask {bits.shape}")
    return _stats(low_amp[:, bits, :])


def resample_stats(stats, eps_mu, eps_sigma):
    """New (mean, std) per sample-channel given standardized draws."""
    mu_hat = stats.mu + eps_mu * stats.sigma_mu
    sigma_hat = stats.sigma + eps_sigma * stats.sigma_sigma
    return mu_hat, sigma_hat


def _stat_draws(rng, stats, cfg):
    shape = stats.mu.shape
    if cfg.noise == "gaussian":
        return rng.normal(shape, std=cfg.alpha), rng.normal(shape, std=cfg.alpha)
    if cfg.noise == "uniform":
        # U(-Sigma, Sigma) == Sigma * U(-1, 1)
        return 2.0 * rng.uniform(shape) - 1.0, 2.0 * rng.uniform(shape) - 1.0
    return None, None


def _restyle(values, cfg, rng):
    """Re-standardize ``values`` (B x S x C) with resampled statistics.

    Returns the new values and their slope w.r.t. ``values`` (B x C).
    """
    stats = _stats(values)
    eps_mu, eps_sigma = _stat_draws(rng, stats, cfg)
    if eps_mu is None:
        # unscaled N(0, 1) added straight to the statistics
        mu_hat = stats.mu + rng.normal(stats.mu.shape)
        sigma_hat = stats.sigma + rng.normal(stats.mu.shape)
    else:
        mu_hat, sigma_hat = resample_stats(stats, eps_mu, eps_sigma)
    denom = stats.sigma + SIGMA_EPS
    if cfg.statistic_form == "conventional":
        scale, shift = sigma_hat / denom, mu_hat
    else:
        scale, shift = mu_hat / denom, sigma_hat
    scale = scale.astype(values.dtype)
    mu, shift = stats.mu[:, None, :], shift[:, None, :].astype(values.dtype)
    return scale[:, None, :] * (values - mu) + shift, scale


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _restyle_amplitude(vals, e_mu, e_sigma, scaled, conventional, eps, out, slope):
    """Amplitude form of ``_restyle`` fused with the phase-keeping rescale."""
    b, s, c = vals.shape
    rdt = slope.dtype.type
    amp = np.empty((b, s, c), dtype=rdt)
    mu = np.zeros((b, c))
    sd = np.zeros((b, c))
    for i in range(b):
        for j in range(s):
            for k in range(c):
                z = vals[i, j, k]
                a = np.sqrt(z.real * z.real + z.imag * z.imag)
                amp[i, j, k] = a
                mu[i, k] += a
    mu /= s
    for i in range(b):
        for j in range(s):
            for k in range(c):
                d = amp[i, j, k] - mu[i, k]
                sd[i, k] += d * d
    sd = np.sqrt(sd / s)
    scale = np.empty((b, c), dtype=rdt)
    shift = np.empty((b, c), dtype=rdt)
    for k in range(c):
        spread_mu = np.std(mu[:, k]) if scaled else 1.0
        spread_sd = np.std(sd[:, k]) if scaled else 1.0
        for i in range(b):
            mu_hat = mu[i, k] + e_mu[i, k] * spread_mu
            sd_hat = sd[i, k] + e_sigma[i, k] * spread_sd
            denom = sd[i, k] + eps
            if conventional:
                scale[i, k], shift[i, k] = sd_hat / denom, mu_hat
            else:
                scale[i, k], shift[i, k] = mu_hat / denom, sd_hat
    slope[:] = scale
    for i in range(b):
        for j in range(s):
            for k in range(c):
                a = amp[i, j, k]
                na = max(scale[i, k] * (a - rdt(mu[i, k])) + shift[i, k], rdt(0))
                out[i, j, k] = vals[i, j, k] * (na / a) if a > 0 else na


def aloft_s(low, cfg, rng, support=None):
    """Statistic-level resampling of the band on ``support``."""
    out, _ = _aloft_s(np.asarray(low), cfg, rng, _support(np.asarray(low), support, cfg.ratio))
    return out


def _aloft_s(z, cfg, rng, support):
    vals = z[:, support, :]
    b, c = z.shape[0], z.shape[3]
    if cfg.component_mode == "amplitude":
        shape = (b, c)
        if cfg.noise == "gaussian":
            e_mu, e_sigma = rng.normal(shape, std=cfg.alpha), rng.normal(shape, std=cfg.alpha)
        elif cfg.noise == "uniform":
            e_mu, e_sigma = 2.0 * rng.uniform(shape) - 1.0, 2.0 * rng.uniform(shape) - 1.0
        else:
            e_mu, e_sigma = rng.normal(shape), rng.normal(shape)
        new_vals = np.empty_like(vals)
        slope = np.empty(shape, dtype=_real_dtype(z))
        _restyle_amplitude(vals, e_mu, e_sigma, cfg.noise != "random",
                           cfg.statistic_form == "conventional", SIGMA_EPS, new_vals, slope)
    else:
        new_vals = np.empty_like(vals)
        new_vals.real, s_re = _restyle(vals.real, cfg, rng)
        new_vals.imag, s_im = _restyle(vals.imag, cfg, rng)
        # complex slope: real part scales Re, imaginary part scales Im
        slope = s_re + 1j * s_im
    out = z.copy()
    out[:, support, :] = new_vals
    return out, slope.reshape(b, 1, 1, c)


def _partners(b, rng):
    """A fixed-point-free pairing of batch indices (3-cycle for the odd one out)."""
    order = rng.permutation(b)
    partner = np.empty(b, dtype=np.int64)
    pairs = b // 2 if b % 2 == 0 else b // 2 - 1
    for i in range(pairs):
        x, y = order[2 * i], order[2 * i + 1]
        partner[x], partner[y] = y, x
    if b % 2:
        x, y, z = order[-3:]
        partner[x], partner[y], partner[z] = y, z, x
    return partner


def swap_mix_low(low, mode, rng, lam=None, support=None):
    """Exchange (``swap``) or blend (``mix``) the band between paired samples.

    ``lam`` (per sample, in [0, 1]) weights a sample's own band in ``mix``;
    it is drawn from U(0, 1) when omitted.
    """
    out, _ = _swap_mix(np.asarray(low), mode, rng, lam, support)
    return out


def _swap_mix(z, mode, rng, lam=None, support=None):
    if mode not in ("swap", "mix"):
        raise ValidationError(f"mode must be 'swap' or 'mix', got {mode!r}")
    b = z.shape[0]
    rdt = _real_dtype(z)
    if b < 2:
        return z.copy(), np.ones((), dtype=rdt)
    partner = _partners(b, rng)
    if mode == "swap":
        own = np.zeros(b, dtype=rdt)
    else:
        own = rng.uniform(b) if lam is None else np.broadcast_to(np.asarray(lam, dtype=float), (b,))
        own = own.astype(rdt)
    w = own[:, None, None, None]
    mixed = w * z + (1 - w) * z[partner]
    if support is None:
        return mixed, np.broadcast_to(w, z.shape[:1] + (1, 1, 1))
    keep = np.asarray(support, dtype=bool)[None, :, :, None]
    return np.where(keep, mixed, z), np.where(keep, w, np.ones((), dtype=rdt))


def perturb_spectrum(spec, cfg, rng):
    """Train-mode transform of a centered spectrum.

    Returns ``(out, slope)``: the perturbed spectrum and the per-element
    derivative of ``out`` with respect to ``spec`` when every sampled or
    batch-derived quantity is held fixed.
    """
    spec = np.asarray(spec)
    if spec.ndim != 4:
        raise DimensionError(f"expected B x H x W x C spectrum, got shape {spec.shape}")
    rdt = _real_dtype(spec)
    if cfg.method == "none":
        return spec, np.ones((), dtype=rdt)
    low_bits = build_mask(spec.shape[1], spec.shape[2], cfg.ratio).bits

    if cfg.method == "band_drop":
        keep = ~low_bits if cfg.drop_band == "low" else low_bits
        k = keep[None, :, :, None]
        return np.where(k, spec, np.zeros((), spec.dtype)), k.astype(rdt)

    supports = {"low": [low_bits], "high": [~low_bits], "both": [low_bits, ~low_bits]}
    out = spec
    unit = np.ones((), dtype=rdt)
    if cfg.method == "aloft_s" and cfg.component_mode == "reim":
        unit = unit + 1j * unit
    slope = unit
    for support in supports[cfg.target_band]:
        if not support.any():
            continue
        if cfg.method == "aloft_e":
            out, s = _aloft_e(out, cfg, rng, support)
        elif cfg.method == "aloft_s":
            out, s = _aloft_s(out, cfg, rng, support)
        else:
            out, s = _swap_mix(out, "swap" if cfg.method == "swap_low" else "mix", rng, support=support)
        if s.ndim == 0 and slope.ndim == 0 and s == slope:
            continue
        slope = np.where(support[None, :, :, None], s, slope)
    return out, slope


def apply_aloft(spec, cfg, mode, rng):
    """Apply the configured transform in train mode; eval mode is a passthrough."""
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or cfg.method == "none":
        return spec
    return perturb_spectrum(spec, cfg, rng)[0]

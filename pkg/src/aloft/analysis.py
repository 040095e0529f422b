"""Accuracy under band-limited inputs, inter-domain feature distance, CSV output."""

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionError, ValidationError
from .model import predict
from .pipeline import RunResult
from .spectral import filter_image


@dataclass
class FreqCurve:
    band: str
    points: list = field(default_factory=list)

    def __post_init__(self):
        if self.band not in ("low", "high"):
            raise ValidationError(f"band must be 'low' or 'high', got {self.band!r}")
        radii = [r for r, _ in self.points]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValidationError("curve radii must be strictly increasing")
        for r, acc in self.points:
            if not (0.0 <= r <= 1.0 and 0.0 <= acc <= 1.0):
                raise ValidationError(f"curve point ({r}, {acc}) outside [0, 1]")

    @property
    def radii(self):
        return [r for r, _ in self.points]

    @property
    def accuracies(self):
        return [a for _, a in self.points]


def freq_response(ckpt, data, domain, band, radii, split="all"):
    """Accuracy of ``ckpt`` on ``domain`` images reduced to one frequency band.

    Each radius is the mask ratio handed to ``filter_image``; radius 1 keeps
    everything for ``band="low"`` and nothing for ``band="high"``.
    """
    radii = sorted({float(r) for r in radii})
    if any(not 0.0 <= r <= 1.0 for r in radii):
        raise ValidationError(f"radii must lie in [0, 1], got {radii}")
    if band not in ("low", "high"):
        raise ValidationError(f"band must be 'low' or 'high', got {band!r}")
    part = data.domain(domain).split(split)
    if len(part) == 0:
        raise ValidationError(f"domain {domain!r} has no {split!r} samples to evaluate")
    images = part.floats()
    points = []
    for r in radii:
        logits = predict(ckpt.params, ckpt.config, filter_image(images, r, band))
        points.append((r, float(np.mean(np.argmax(logits, axis=1) == part.labels))))
    return FreqCurve(band, points)


@dataclass
class DomainGapReport:
    means: dict
    distances: dict
    d: float


def domain_features(ckpt, data, domains=None, split="all"):
    """Eval-mode pooled pre-head features for each domain's samples."""
    names = data.domain_names if domains is None else tuple(domains)
    out = {}
    for name in names:
        _, feats = predict(ckpt.params, ckpt.config, data.domain(name).split(split).floats(),
                           return_features=True)
        out[name] = feats
    return out


def inter_domain_distance(features):
    """Mean L2 distance between per-domain mean features over unordered domain pairs.

    The result does not depend on the order in which domains are given.
    """
    if len(features) < 2:
        raise ValidationError(f"need features from at least two domains, got {len(features)}")
    means = {}
    for name in sorted(features):
        f = np.asarray(features[name], dtype=np.float64)
        if f.ndim == 1:
            f = f[None]
        if f.ndim != 2 or f.shape[0] == 0:
            raise DimensionError(f"features for {name!r} must be a non-empty N x D array, got {f.shape}")
        means[name] = f.mean(axis=0)
    dims = {m.shape[0] for m in means.values()}
    if len(dims) != 1:
        raise DimensionError(f"feature dimensions differ across domains: {sorted(dims)}")
    distances = {(a, b): float(np.linalg.norm(means[a] - means[b]))
                 for a, b in combinations(sorted(means), 2)}
    d = math.fsum(distances.values()) / len(distances)
    return DomainGapReport(means, distances, d)


def _fmt(x):
    return repr(float(x))


def csv_rows(result):
    """Header plus body rows for a curve, a LODO result or a domain-gap report."""
    if isinstance(result, FreqCurve):
        return [["radius", "accuracy"]] + [[_fmt(r), _fmt(a)] for r, a in result.points]
    if isinstance(result, RunResult):
        rows = [["domain", "accuracy"]] + [[d, _fmt(a)] for d, a in result.accuracies.items()]
        return rows + [["average", _fmt(result.average)]]
    if isinstance(result, DomainGapReport):
        rows = [["domain_a", "domain_b", "distance"]]
        rows += [[a, b, _fmt(v)] for (a, b), v in result.distances.items()]
        return rows + [["mean", "", _fmt(result.d)]]
    raise ValidationError(f"cannot write {type(result).__name__} as CSV")


def emit_csv(result, path):
    rows = csv_rows(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)
    return path

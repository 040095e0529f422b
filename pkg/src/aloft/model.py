"""Hierarchical global-filter network with in-block spectrum perturbation.

Block wiring (pre-norm, two residuals)::

    y   = x + GlobalFilter(LayerNorm1(x))
    out = y + FFN(LayerNorm2(y))

    GlobalFilter(t) = Re(IDFT2(W * T(DFT2(t))))

where ``T`` is the configured low-frequency transform (train mode only, and
only in stages whose flag is set) and ``W`` is the learnable complex filter.
Stages are joined by a 2x2 non-overlapping linear patch merge.  The head is
LayerNorm -> global average pool -> linear.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .errors import DimensionError, ParseError, ValidationError
from .numerics import Parameter, no_grad
from .rng import Rng
from .spectral import dft2_t, idft2_t
from .transforms import AloftConfig, perturb_spectrum

CHECKPOINT_MAGIC = b"ALOFT"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    patch_size: int = 4
    stage_depths: list = field(default_factory=lambda: [2, 2])
    stage_dims: list = field(default_factory=lambda: [16, 32])
    ffn_ratio: float = 2.0
    num_classes: int = 3
    input_hw: tuple = (32, 32)
    aloft: AloftConfig = field(default_factory=AloftConfig)
    aloft_stage_flags: list = None
    in_chans: int = 3

    def __post_init__(self):
        self.stage_depths = [int(d) for d in self.stage_depths]
        self.stage_dims = [int(d) for d in self.stage_dims]
        self.input_hw = tuple(int(v) for v in self.input_hw)
        if isinstance(self.aloft, dict):
            self.aloft = AloftConfig(**self.aloft)
        if self.aloft_stage_flags is None:
            self.aloft_stage_flags = [True] * len(self.stage_depths)
        self.aloft_stage_flags = [bool(f) for f in self.aloft_stage_flags]
        n = len(self.stage_depths)
        if not n or len(self.stage_dims) != n or len(self.aloft_stage_flags) != n:
            raise ValidationError(
                "stage_depths, stage_dims and aloft_stage_flags must have equal, non-zero length")
        factor = self.patch_size * 2 ** (n - 1)
        if any(v % factor for v in self.input_hw):
            raise ValidationError(
                f"input {self.input_hw} must be divisible by patch size x downsampling = {factor}")
        if self.num_classes < 1:
            raise ValidationError("num_classes must be positive")

    def grid(self, stage):
        scale = self.patch_size * 2 ** stage
        return self.input_hw[0] // scale, self.input_hw[1] // scale

    def to_dict(self):
        d = asdict(self)
        d["input_hw"] = list(self.input_hw)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["aloft"] = AloftConfig(**d.get("aloft", {}))
        return cls(**d)


def presets(name, **overrides):
    """Named model configurations; keyword overrides replace preset fields."""
    table = {
        "mini": dict(patch_size=4, stage_depths=[2, 2], stage_dims=[16, 32],
                     ffn_ratio=2.0, input_hw=(32, 32)),
        "gfnet_h_ti": dict(patch_size=4, stage_depths=[3, 3, 10, 3],
                           stage_dims=[64, 128, 256, 512], ffn_ratio=4.0, input_hw=(224, 224)),
    }
    if name not in table:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(table)}")
    return ModelConfig(**{**table[name], **overrides})


# ---------------------------------------------------------------------------
# parameters


def init_params(cfg, seed=0, dtype=np.float32):
    """Fresh parameters, ordered as the forward pass consumes them."""
    rng = Rng(seed, (0xA10F7,))
    cdtype = np.complex64 if dtype == np.float32 else np.complex128
    params = {}

    def linear(name, fan_in, fan_out):
        params[name + ".w"] = Parameter(rng.normal((fan_in, fan_out), std=0.02).astype(dtype), name + ".w")
        params[name + ".b"] = Parameter(np.zeros(fan_out, dtype), name + ".b")

    def norm(name, c):
        params[name + ".gamma"] = Parameter(np.ones(c, dtype), name + ".gamma")
        params[name + ".beta"] = Parameter(np.zeros(c, dtype), name + ".beta")

    p = cfg.patch_size
    linear("patch_embed", p * p * cfg.in_chans, cfg.stage_dims[0])
    for s, (depth, dim) in enumerate(zip(cfg.stage_depths, cfg.stage_dims)):
        if s:
            linear(f"stage{s}.downsample", 4 * cfg.stage_dims[s - 1], dim)
        h, w = cfg.grid(s)
        hidden = int(round(dim * cfg.ffn_ratio))
        for b in range(depth):
            pre = f"stage{s}.block{b}"
            norm(pre + ".norm1", dim)
            filt = rng.normal((h, w, dim), std=0.02) + 1j * rng.normal((h, w, dim), std=0.02)
            params[pre + ".filter"] = Parameter(filt.astype(cdtype), pre + ".filter")
            norm(pre + ".norm2", dim)
            linear(pre + ".fc1", dim, hidden)
            linear(pre + ".fc2", hidden, dim)
    norm("norm", cfg.stage_dims[-1])
    linear("head", cfg.stage_dims[-1], cfg.num_classes)
    return params


def param_count(params):
    """Scalar parameter count; complex entries count twice."""
    total = 0
    for p in params.values():
        total += p.data.size * (2 if np.iscomplexobj(p.data) else 1)
    return total


# ---------------------------------------------------------------------------
# forward


def patch_embed(x, w, b, patch):
    """Project non-overlapping ``patch x patch`` tiles of ``x`` (N x H x W x C)."""
    x = nx.as_tensor(x)
    n, h, wd, c = x.shape
    if h % patch or wd % patch:
        raise DimensionError(f"patch_embed: grid {h}x{wd} not divisible by patch size {patch}")
    t = nx.reshape(x, (n, h // patch, patch, wd // patch, patch, c))
    t = nx.transpose(t, (0, 1, 3, 2, 4, 5))
    t = nx.reshape(t, (n, h // patch, wd // patch, patch * patch * c))
    return nx.linear(t, w, b)


def global_filter_forward(tokens, weight, aloft_cfg, enabled, mode, rng):
    """Centered DFT -> (train: perturbation) -> complex filter -> real IDFT."""
    tokens = nx.as_tensor(tokens)
    if tokens.shape[1:] != weight.shape:
        raise DimensionError(
            f"global filter: tokens {tokens.shape} do not match filter {weight.shape}")
    spec = dft2_t(tokens, centered=True)
    if mode == "train" and enabled and aloft_cfg.method != "none":
        out, slope = perturb_spectrum(spec.data, aloft_cfg, rng)
        spec = nx.frozen_affine(spec, out, slope)
    return idft2_t(nx.mul(spec, weight), centered=True)


def block_forward(x, params, prefix, aloft_cfg, enabled, mode, rng, eps=1e-5):
    p = params
    t = nx.layer_norm(x, p[prefix + ".norm1.gamma"], p[prefix + ".norm1.beta"], eps)
    y = nx.add(x, global_filter_forward(t, p[prefix + ".filter"], aloft_cfg, enabled, mode, rng))
    t = nx.layer_norm(y, p[prefix + ".norm2.gamma"], p[prefix + ".norm2.beta"], eps)
    t = nx.gelu(nx.linear(t, p[prefix + ".fc1.w"], p[prefix + ".fc1.b"]))
    t = nx.linear(t, p[prefix + ".fc2.w"], p[prefix + ".fc2.b"])
    return nx.add(y, t)


def model_forward(x, params, cfg, mode="eval", rng=None, return_features=False):
    """Logits (N x num_classes) for images ``x`` (N x H x W x C)."""
    if mode not in ("train", "eval"):
        raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = nx.as_tensor(x)
    if x.ndim != 4 or x.shape[1:3] != cfg.input_hw or x.shape[3] != cfg.in_chans:
        raise DimensionError(
            f"model expects N x {cfg.input_hw[0]} x {cfg.input_hw[1]} x {cfg.in_chans}, got {x.shape}")
    if mode == "train" and rng is None and cfg.aloft.method != "none":
        raise ValidationError("train-mode forward with a spectrum transform needs an rng")
    p = params
    t = patch_embed(x, p["patch_embed.w"], p["patch_embed.b"], cfg.patch_size)
    for s, depth in enumerate(cfg.stage_depths):
        if s:
            t = patch_embed(t, p[f"stage{s}.downsample.w"], p[f"stage{s}.downsample.b"], 2)
        for b in range(depth):
            t = block_forward(t, p, f"stage{s}.block{b}", cfg.aloft,
                              cfg.aloft_stage_flags[s], mode, rng)
    t = nx.layer_norm(t, p["norm.gamma"], p["norm.beta"])
    features = nx.mean(t, axis=(1, 2))
    logits = nx.linear(features, p["head.w"], p["head.b"])
    return (logits, features) if return_features else logits


def predict(params, cfg, images, batch_size=256, return_features=False):
    """Eval-mode logits (and pooled features) as numpy arrays, batched."""
    logits, feats = [], []
    with no_grad():
        for i in range(0, len(images), batch_size):
            lg, ft = model_forward(images[i:i + batch_size], params, cfg, "eval", return_features=True)
            logits.append(lg.data)
            feats.append(ft.data)
    width = cfg.stage_dims[-1]
    logits = np.concatenate(logits) if logits else np.zeros((0, cfg.num_classes), np.float32)
    feats = np.concatenate(feats) if feats else np.zeros((0, width), np.float32)
    return (logits, feats) if return_features else logits


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    meta: dict = field(default_factory=dict)

    def to_bytes(self):
        manifest, blobs = [], []
        for name, p in self.params.items():
            complex_ = np.iscomplexobj(p.data)
            arr = np.ascontiguousarray(p.data, dtype="<c8" if complex_ else "<f4")
            manifest.append({"name": name, "shape": list(p.data.shape),
                             "dtype": "complex64" if complex_ else "float32"})
            blobs.append(arr.tobytes())
        doc = {"config": self.config.to_dict(), "params": manifest, "meta": self.meta}
        header = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return b"".join([CHECKPOINT_MAGIC, bytes([CHECKPOINT_VERSION]),
                         struct.pack("<I", len(header)), header, *blobs])

    @classmethod
    def from_bytes(cls, data):
        data = memoryview(bytes(data))
        if bytes(data[:5]) != CHECKPOINT_MAGIC:
            raise ParseError("not a checkpoint: bad magic", 0)
        if len(data) < 10:
            raise ParseError("truncated checkpoint header", len(data))
        if data[5] != CHECKPOINT_VERSION:
            raise ParseError(f"unsupported checkpoint version {data[5]}", 5)
        (size,) = struct.unpack("<I", data[6:10])
        if len(data) < 10 + size:
            raise ParseError("truncated checkpoint metadata", len(data))
        try:
            doc = json.loads(bytes(data[10:10 + size]))
        except ValueError as exc:
            raise ParseError(f"corrupt checkpoint metadata: {exc}", 10) from None
        offset = 10 + size
        params = {}
        for entry in doc["params"]:
            dtype = np.dtype("<c8" if entry["dtype"] == "complex64" else "<f4")
            count = int(np.prod(entry["shape"], dtype=np.int64))
            nbytes = count * dtype.itemsize
            if offset + nbytes > len(data):
                raise ParseError(f"truncated data for parameter {entry['name']!r}", len(data))
            arr = np.frombuffer(data[offset:offset + nbytes], dtype=dtype).reshape(entry["shape"])
            native = np.complex64 if entry["dtype"] == "complex64" else np.float32
            params[entry["name"]] = Parameter(arr.astype(native), entry["name"])
            offset += nbytes
        if offset != len(data):
            raise ParseError("trailing bytes after parameter data", offset)
        return cls(ModelConfig.from_dict(doc["config"]), params, doc.get("meta", {}))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

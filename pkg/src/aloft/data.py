"""Multi-domain image datasets: a synthetic generator, a folder loader and NetPBM I/O.

Images are held as ``uint8`` arrays (``N x H x W x 3``) and exposed as
``float32`` in ``[0, 1]`` on demand.  Quantization is round-half-up,
``q = floor(255 * x + 0.5)``, so ``quantize(dequantize(q)) == q`` for every
byte value.
"""

import json
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .rng import Rng
from .spectral import idft2

SHAPES = ("circle", "square", "triangle", "cross", "star", "hexagon", "ring", "diamond")
VAL_FRACTION = 0.1


# ---------------------------------------------------------------------------
# pixels


def quantize(x):
    """``[0, 1]`` floats to bytes, rounding half up."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8)


def dequantize(q):
    return np.asarray(q, dtype=np.float32) / np.float32(255.0)


# ---------------------------------------------------------------------------
# NetPBM


_WS = b" \t\n\r\v\f"


def _header_fields(data, count, pos):
    """Read ``count`` whitespace-separated header tokens from ``pos``, skipping comments.

    Returns ``(token, offset)`` pairs and the offset just past the single
    whitespace byte that terminates the last token.
    """
    tokens, n = [], len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WS:
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise ParseError("truncated NetPBM header", pos)
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        tokens.append((bytes(data[start:pos]), start))
    if pos >= n or data[pos] not in _WS:
        raise ParseError("NetPBM header must end with one whitespace byte", pos)
    return tokens, pos + 1


def decode_netpbm(data):
    """Decode a binary P5 or P6 image (maxval 255) to ``H x W x 3`` bytes.

    Grayscale is replicated to three channels.
    """
    data = bytes(data)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"bad magic {magic!r}, expected P5 or P6", 0)
    tokens, offset = _header_fields(data, 3, 2)
    values = []
    for name, (tok, at) in zip(("width", "height", "maxval"), tokens):
        if not tok.isdigit():
            raise ParseError(f"NetPBM {name} is not a decimal integer: {tok!r}", at)
        values.append(int(tok))
    width, height, maxval = values
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}; only 255 is accepted", tokens[2][1])
    if width < 1 or height < 1:
        raise ParseError(f"empty image {width}x{height}", tokens[0][1])
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    if len(data) - offset < size:
        raise ParseError(
            f"truncated pixel data: need {size} bytes, found {len(data) - offset}", len(data))
    pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)
    image = pixels.reshape(height, width, channels)
    if channels == 1:
        image = np.repeat(image, 3, axis=2)
    return image.copy()


def encode_netpbm(image):
    """Encode ``H x W x 3`` bytes (or ``[0, 1]`` floats) as binary P6."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = quantize(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"P6 needs an H x W x 3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image).tobytes()


def read_image(path):
    path = Path(path)
    try:
        return decode_netpbm(path.read_bytes())
    except ParseError as exc:
        raise ParseError(f"{path}: {exc.message}", exc.offset) from None


def write_image(path, image):
    Path(path).write_bytes(encode_netpbm(image))


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Sample:
    image: np.ndarray
    label: int
    domain: str
    id: str


@dataclass
class Split:
    """Images (``uint8``), labels and stable ids of one split of one domain."""

    images: np.ndarray
    labels: np.ndarray
    ids: tuple

    def __len__(self):
        return len(self.ids)

    def floats(self):
        return dequantize(self.images)

    def samples(self, domain):
        for img, label, sid in zip(self.images, self.labels, self.ids):
            yield Sample(dequantize(img), int(label), domain, sid)

    @staticmethod
    def concat(parts, hw):
        parts = [p for p in parts if len(p)]
        if not parts:
            return Split(np.zeros((0, *hw, 3), np.uint8), np.zeros(0, np.int64), ())
        return Split(np.concatenate([p.images for p in parts]),
                     np.concatenate([p.labels for p in parts]),
                     tuple(i for p in parts for i in p.ids))


@dataclass
class DomainData:
    train: Split
    val: Split

    def split(self, name):
        if name == "train":
            return self.train
        if name == "val":
            return self.val
        if name == "all":
            return Split.concat([self.train, self.val], self.train.images.shape[1:3])
        raise ValidationError(f"unknown split {name!r}; expected train, val or all")


@dataclass
class DomainDataset:
    domains: dict
    class_names: tuple
    image_hw: tuple

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def domain_names(self):
        return tuple(self.domains)

    def domain(self, name):
        try:
            return self.domains[name]
        except KeyError:
            raise ValidationError(
                f"unknown domain {name!r}; available: {', '.join(self.domains)}") from None

    def gather(self, names, split):
        return Split.concat([self.domain(n).split(split) for n in names], self.image_hw)


def split_indices(ids, seed):
    """Seeded 90/10 train/val partition of one domain's sample ids.

    The permutation depends only on the seed and the sorted id list, so
    reloading an unchanged domain reproduces the split.
    """
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    digest = zlib.crc32("\n".join(ids[i] for i in order).encode())
    perm = Rng(seed, (0x5B17, digest)).permutation(len(ids))
    n_val = int(round(VAL_FRACTION * len(ids)))
    chosen = [order[i] for i in perm]
    return sorted(chosen[n_val:]), sorted(chosen[:n_val])


def _make_domain(images, labels, ids, seed):
    train_idx, val_idx = split_indices(ids, seed)

    def take(idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Split(images[idx], labels[idx], tuple(ids[i] for i in idx))

    return DomainData(take(train_idx), take(val_idx))


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class SyntheticSpec:
    num_domains: int = 4
    num_classes: int = 3
    per_class: int = 200
    image_hw: tuple = (32, 32)
    seed: int = 0

    def __post_init__(self):
        self.image_hw = tuple(int(v) for v in self.image_hw)
        for name in ("num_domains", "num_classes", "per_class"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.num_classes > len(SHAPES):
            raise ValidationError(
                f"at most {len(SHAPES)} shape classes are available, got {self.num_classes}")
        if len(self.image_hw) != 2 or min(self.image_hw) < 8:
            raise ValidationError(f"image_hw must be two sizes >= 8, got {self.image_hw}")

    def to_dict(self):
        d = asdict(self)
        d["image_hw"] = list(self.image_hw)
        return d


@dataclass(frozen=True)
class DomainStyle:
    """Low-frequency appearance of one synthetic domain."""

    background: np.ndarray   # RGB base colour
    foreground: np.ndarray   # RGB shape colour
    light_angle: float       # illumination gradient direction
    light_gain: float        # illumination gradient strength
    noise_falloff: float     # spectral exponent of the texture, |f|^-beta
    noise_gain: float
    noise_mix: np.ndarray    # 3 x 3 colour mixing of the texture


def _domain_style(rng, k, count):
    # hues spread around the colour wheel so every domain looks different
    hue = (k + 0.35 * float(rng.uniform())) / count

    def rgb(h, s, v):
        angles = 2 * np.pi * (h + np.array([0.0, 1 / 3, 2 / 3]))
        return np.clip(v * (1 - s + s * (0.5 + 0.5 * np.cos(angles))), 0, 1)

    # shapes stay darker than the background everywhere, so edges keep their sign
    value = float(rng.uniform(low=0.6, high=0.9))
    bg = rgb(hue, rng.uniform(low=0.4, high=0.9), value)
    fg = rgb(hue + 0.5, rng.uniform(low=0.3, high=0.8), value * 0.4)
    return DomainStyle(
        background=bg, foreground=fg,
        light_angle=float(2 * np.pi * rng.uniform()),
        light_gain=float(rng.uniform(low=0.15, high=0.4)),
        noise_falloff=float(1.5 + 1.5 * (k / max(count - 1, 1))),
        noise_gain=float(rng.uniform(low=0.04, high=0.09)),
        noise_mix=rng.uniform((3, 3), -1.0, 1.0),
    )


def _shape_mask(kind, hw, cx, cy, scale, angle, supersample=4):
    """Anti-aliased coverage of a filled shape (fraction of each pixel inside)."""
    h, w = hw
    step = 1.0 / supersample
    offs = (np.arange(supersample) + 0.5) * step
    ys = (np.arange(h)[:, None] + offs[None, :]).reshape(-1)
    xs = (np.arange(w)[:, None] + offs[None, :]).reshape(-1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    # rotate into the shape frame, normalized so the shape radius is 1
    c, s = np.cos(angle), np.sin(angle)
    u = ((xx - cx) * c + (yy - cy) * s) / scale
    v = (-(xx - cx) * s + (yy - cy) * c) / scale
    r = np.hypot(u, v)
    theta = np.arctan2(v, u)

    def polygon(sides, radius=1.0):
        # inside a regular polygon: distance to every edge normal below the apothem
        apothem = radius * np.cos(np.pi / sides)
        inside = np.ones_like(u, dtype=bool)
        for i in range(sides):
            a = 2 * np.pi * (i + 0.5) / sides
            inside &= u * np.cos(a) + v * np.sin(a) <= apothem
        return inside

    if kind == "circle":
        inside = r <= 0.9
    elif kind == "square":
        inside = polygon(4, 1.05)
    elif kind == "triangle":
        inside = polygon(3, 1.2)
    elif kind == "cross":
        inside = ((np.abs(u) <= 0.3) & (np.abs(v) <= 1.0)) | ((np.abs(v) <= 0.3) & (np.abs(u) <= 1.0))
    elif kind == "star":
        inside = r <= 0.45 + 0.55 * np.maximum(0, np.cos(2.5 * theta)) ** 2
    elif kind == "hexagon":
        inside = polygon(6, 1.0)
    elif kind == "ring":
        inside = (r <= 1.0) & (r >= 0.55)
    else:  # diamond
        inside = np.abs(u) / 0.7 + np.abs(v) <= 1.0
    return inside.reshape(h, supersample, w, supersample).mean(axis=(1, 3))


def _lowpass_noise(rng, hw, falloff, channels=3, cutoff=0.08):
    """Zero-mean unit-std fields with amplitude spectrum ``|f|^-falloff`` below ``cutoff``.

    Frequencies are in cycles per pixel; returns ``H x W x channels``.
    """
    h, w = hw
    # signed frequency of each uncentered DFT bin
    fy = (np.arange(h) + h // 2) % h - h // 2
    fx = (np.arange(w) + w // 2) % w - w // 2
    radius = np.hypot(fy[:, None] / h, fx[None, :] / w)
    amp = np.where((radius > 0) & (radius <= cutoff), np.maximum(radius, 1e-6) ** -falloff, 0.0)
    phase = rng.uniform((1, h, w, channels), 0, 2 * np.pi)
    field = idft2(amp[None, :, :, None] * np.exp(1j * phase), centered=False)[0]
    std = field.std(axis=(0, 1))
    return field / np.where(std > 0, std, 1.0)


def render_sample(rng, kind, style, hw):
    """One image in ``[0, 1]``: a shape over a styled, lit, textured background."""
    h, w = hw
    side = min(h, w)
    scale = side * rng.uniform(low=0.3, high=0.4)
    margin = scale * 1.05
    cx = rng.uniform(low=margin, high=w - margin)
    cy = rng.uniform(low=margin, high=h - margin)
    coverage = _shape_mask(kind, hw, cx, cy, scale, rng.uniform(low=0, high=2 * np.pi))[:, :, None]

    bg = np.clip(style.background + rng.normal(3, std=0.05), 0, 1)
    fg = np.clip(style.foreground + rng.normal(3, std=0.05), 0, 1)
    image = bg * (1 - coverage) + fg * coverage

    yy, xx = np.mgrid[0:h, 0:w]
    angle = style.light_angle + rng.normal(std=0.3)
    ramp = ((xx - w / 2) * np.cos(angle) + (yy - h / 2) * np.sin(angle)) / side
    image = image * (1 + style.light_gain * 2 * ramp[:, :, None])

    texture = _lowpass_noise(rng, hw, style.noise_falloff)
    image = image + style.noise_gain * texture @ style.noise_mix.T
    return np.clip(image, 0, 1)


def gen_synthetic(spec=None):
    """Shape classes rendered in domains that differ only in low-frequency style."""
    spec = spec or SyntheticSpec()
    root = Rng(spec.seed, (0xDA7A,))
    names = tuple(f"domain{k}" for k in range(spec.num_domains))
    classes = SHAPES[:spec.num_classes]
    domains = {}
    for k, name in enumerate(names):
        style = _domain_style(root.child(k, 0), k, spec.num_domains)
        images, labels, ids = [], [], []
        for c, kind in enumerate(classes):
            for i in range(spec.per_class):
                rng = root.child(k, 1, c, i)
                images.append(quantize(render_sample(rng, kind, style, spec.image_hw)))
                labels.append(c)
                ids.append(f"{name}/{kind}/{i:05d}")
        domains[name] = _make_domain(np.stack(images), np.asarray(labels, np.int64), ids, spec.seed)
    return DomainDataset(domains, classes, spec.image_hw)


# ---------------------------------------------------------------------------
# folder layout


_IMAGE_SUFFIXES = (".ppm", ".pgm")


def _listdir(path):
    return sorted(p for p in path.iterdir() if not p.name.startswith("."))


def load_folder(path, seed=0):
    """Load ``root/<domain>/<class>/*.ppm|pgm``; class names sort to indices."""
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"dataset root {root} is not a directory")
    domain_dirs = [p for p in _listdir(root) if p.is_dir()]
    if len(domain_dirs) == 0:
        raise ValidationError(f"dataset root {root} has no domain directories")
    class_sets = {d.name: sorted(p.name for p in _listdir(d) if p.is_dir()) for d in domain_dirs}
    classes = sorted(set().union(*class_sets.values()))
    if not classes:
        raise ValidationError(f"dataset root {root} has no class directories")
    for dom, found in class_sets.items():
        for cls in classes:
            if cls not in found:
                raise ValidationError(f"domain {dom!r} is missing class directory {cls!r}")
    hw = None
    domains = {}
    for d in domain_dirs:
        images, labels, ids = [], [], []
        for c, cls in enumerate(classes):
            files = [p for p in _listdir(d / cls) if p.suffix.lower() in _IMAGE_SUFFIXES]
            if not files:
                raise ValidationError(f"domain {d.name!r} class {cls!r} has no .ppm/.pgm images")
            for f in files:
                img = read_image(f)
                if hw is None:
                    hw = img.shape[:2]
                elif img.shape[:2] != hw:
                    raise ValidationError(
                        f"{f}: image is {img.shape[1]}x{img.shape[0]}, expected {hw[1]}x{hw[0]}")
                images.append(img)
                labels.append(c)
                ids.append(f"{d.name}/{cls}/{f.stem}")
        domains[d.name] = _make_domain(np.stack(images), np.asarray(labels, np.int64), ids, seed)
    return DomainDataset(domains, tuple(classes), tuple(hw))


def save_folder(data, path, manifest=None):
    """Write a dataset in the folder layout plus ``manifest.json``."""
    root = Path(path)
    for name, dom in data.domains.items():
        for cls in data.class_names:
            (root / name / cls).mkdir(parents=True, exist_ok=True)
        for split in (dom.train, dom.val):
            for img, sid in zip(split.images, split.ids):
                _, cls, stem = sid.split("/")
                write_image(root / name / cls / f"{stem}.ppm", img)
    doc = dict(manifest or {})
    doc["classes"] = list(data.class_names)
    doc["domains"] = {name: {"train": list(dom.train.ids), "val": list(dom.val.ids)}
                      for name, dom in data.domains.items()}
    (root / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return root

"""Command-line entry point: ``aloft <command> [options]``.

Settings resolve as built-in defaults, then a JSON ``--config`` file, then
flags.  Every run writes a manifest with the effective settings; passing that
manifest back as ``--config`` reproduces the run.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import domain_features, emit_csv, freq_response, inter_domain_distance
from .data import (SyntheticSpec, dequantize, gen_synthetic, load_folder, quantize, read_image,
                   save_folder, write_image)
from .errors import AloftError, NumericError, ValidationError
from .model import Checkpoint, presets
from .pipeline import RunResult, TrainConfig, evaluate, lodo_run, run_manifest, seed_list, summarize, train
from .rng import Rng
from .spectral import dft2, idft2
from .transforms import AloftConfig, perturb_spectrum

METHOD_NAMES = {"baseline": "none", "aloft-e": "aloft_e", "aloft-s": "aloft_s",
                "swap": "swap_low", "mix": "mix_low", "band-drop": "band_drop"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# settings


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _flag_overrides(args):
    """Split explicitly given flags into train, aloft and model overrides."""
    train, aloft, model = {}, {}, {}
    for flag, key in (("seed", "seed"), ("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "lr"), ("min_lr", "min_lr"), ("weight_decay", "weight_decay")):
        if getattr(args, flag, None) is not None:
            train[key] = getattr(args, flag)
    if getattr(args, "hflip", False):
        train["hflip"] = True
    if getattr(args, "method", None) is not None:
        aloft["method"] = METHOD_NAMES[args.method]
    for flag, key in (("alpha", "alpha"), ("ratio", "ratio"), ("noise", "noise"), ("band", "target_band")):
        if getattr(args, flag, None) is not None:
            aloft[key] = getattr(args, flag)
    if getattr(args, "stages", None) is not None:
        try:
            model["aloft_stage_flags"] = [bool(int(v)) for v in args.stages.split(",")]
        except ValueError:
            raise ValidationError(f"--stages expects comma-separated 0/1 flags, got {args.stages!r}") from None
    return train, aloft, model


def resolve(args):
    """Effective (TrainConfig, ModelConfig, settings document) for a run."""
    doc = _read_json(args.config) if getattr(args, "config", None) else {}
    train_d = dict(doc.get("train", {}))
    aloft_d = dict(train_d.pop("aloft", {}))
    model_d = dict(doc.get("model", {}))
    model_d.pop("aloft", None)
    preset = args.preset or doc.get("preset", "mini")
    t, a, m = _flag_overrides(args)
    train_d.update(t)
    if "method" in a and "alpha" not in a and aloft_d.get("method") != a["method"]:
        aloft_d.pop("alpha", None)  # fall back to the new method's default strength
    aloft_d.update(a)
    model_d.update(m)
    try:
        cfg = TrainConfig(**train_d, aloft=AloftConfig(**aloft_d))
        model_cfg = presets(preset, **model_d)
    except TypeError as exc:
        raise ValidationError(f"unknown setting: {exc}") from None
    data_src = args.data if getattr(args, "data", None) else doc.get("data")
    return cfg, model_cfg, {"preset": preset, "data": data_src}


def load_data(source):
    """A dataset directory, or the default synthetic set when ``source`` is empty."""
    if source is None:
        return gen_synthetic(SyntheticSpec())
    if isinstance(source, dict):
        return gen_synthetic(SyntheticSpec(**source.get("synthetic", {})))
    root = Path(source)
    manifest = root / "manifest.json"
    split_seed = _read_json(manifest).get("split_seed", 0) if manifest.is_file() else 0
    return load_folder(root, seed=split_seed)


def _data_echo(source):
    if source is None:
        return {"synthetic": SyntheticSpec().to_dict()}
    return source if isinstance(source, dict) else str(source)


def _log(record):
    print(json.dumps(record, sort_keys=True), file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    spec = SyntheticSpec(num_domains=args.num_domains, num_classes=args.num_classes,
                         per_class=args.per_class, image_hw=(args.size, args.size), seed=args.seed)
    data = gen_synthetic(spec)
    save_folder(data, args.out, {"spec": spec.to_dict(), "split_seed": spec.seed})
    print(f"wrote {sum(len(d.train) + len(d.val) for d in data.domains.values())} images to {args.out}")


def cmd_train(args):
    cfg, model_cfg, info = resolve(args)
    data = load_data(info["data"])
    result = train(cfg, model_cfg, data, args.target_domain, log=None if args.quiet else _log)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(out / "model.ckpt")
    doc = {"command": "train", "preset": info["preset"], "data": _data_echo(info["data"]),
           "target_domain": args.target_domain, "train": cfg.to_dict(),
           "model": result.checkpoint.config.to_dict(), "history": result.history,
           "best_epoch": result.best_epoch}
    _write_json(out / "manifest.json", doc)
    print(f"best epoch {result.best_epoch}; checkpoint at {out / 'model.ckpt'}")


def cmd_lodo(args):
    cfg, model_cfg, info = resolve(args)
    data = load_data(info["data"])
    log = None if args.quiet else _log
    runs = [lodo_run(dataclasses.replace(cfg, seed=s), model_cfg, data, log=log)
            for s in seed_list(cfg.seed, args.seeds)]
    summary = summarize(runs)
    names = list(runs[0].accuracies)
    mean_acc = {d: float(np.mean([r.accuracies[d] for r in runs])) for d in names}
    table = RunResult(mean_acc, float(np.mean(list(mean_acc.values()))), seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": "lodo", "preset": info["preset"], "data": _data_echo(info["data"]),
           "seeds": seed_list(cfg.seed, args.seeds),
           **run_manifest(cfg, model_cfg, table), "summary": summary.to_dict()}
    _write_json(out / "result.json", doc)
    emit_csv(table, out / "result.csv")
    print(f"average {summary.mean:.4f} +- {summary.sem:.4f} (sem over {len(runs)} seeds)")


def cmd_eval(args):
    ckpt = Checkpoint.load(args.ckpt)
    data = load_data(args.data)
    acc = evaluate(ckpt, data, args.domain, args.split)
    print(json.dumps({"domain": args.domain, "split": args.split, "accuracy": acc}))


def _image_files(path):
    root = Path(path)
    if root.is_file():
        return root.parent, [root]
    if not root.is_dir():
        raise FileNotFoundError(f"no such file or directory: {root}")
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() in (".ppm", ".pgm"))
    if not files:
        raise ValidationError(f"no .ppm/.pgm images under {root}")
    return root, files


def cmd_augment(args):
    root, files = _image_files(args.input)
    images = [read_image(f) for f in files]
    if len({im.shape for im in images}) != 1:
        raise ValidationError("augment needs images of one size")
    x = dequantize(np.stack(images)).astype(np.float64)
    _, aloft, _ = _flag_overrides(args)
    cfg = AloftConfig(**{"method": "aloft_e", **aloft})
    spec, _ = perturb_spectrum(dft2(x, centered=True), cfg, Rng(args.seed, (0xA6,)))
    y = quantize(idft2(spec, centered=True))
    out = Path(args.out)
    for f, img in zip(files, y):
        dest = (out / f.relative_to(root)).with_suffix(".ppm")
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_image(dest, img)
    print(f"wrote {len(files)} images to {out}")


def _checkpoint_and_data(args):
    ckpt = Checkpoint.load(args.ckpt)
    return ckpt, load_data(args.data)


def cmd_freq_curve(args):
    ckpt, data = _checkpoint_and_data(args)
    domain = args.domain or ckpt.meta.get("target_domain")
    if domain is None:
        raise ValidationError("--domain is required when the checkpoint names no target domain")
    try:
        radii = [float(r) for r in args.radii.split(",")]
    except ValueError:
        raise ValidationError(f"--radii expects comma-separated numbers, got {args.radii!r}") from None
    curve = freq_response(ckpt, data, domain, args.band, radii)
    if args.out:
        emit_csv(curve, args.out)
    for r, acc in curve.points:
        print(f"{r:g},{acc!r}")


def cmd_domain_gap(args):
    ckpt, data = _checkpoint_and_data(args)
    domains = args.domains.split(",") if args.domains else None
    report = inter_domain_distance(domain_features(ckpt, data, domains, args.split))
    if args.out:
        emit_csv(report, args.out)
    print(json.dumps({"d": report.d, "pairs": {f"{a},{b}": v for (a, b), v in report.distances.items()}}))


def cmd_gradcheck(args):
    from .gradcheck import run_suites

    results = run_suites(seed=args.seed)
    for r in results:
        print(r)
    if not all(r.passed for r in results):
        raise NumericError("gradient check failed")


# ---------------------------------------------------------------------------
# parser


def _training_flags(p):
    p.add_argument("--config", help="JSON settings file (a run manifest works)")
    p.add_argument("--data", help="dataset directory; default synthetic set if omitted")
    p.add_argument("--preset", choices=("mini", "gfnet_h_ti"))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--min-lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--hflip", action="store_true", help="random horizontal flips")
    p.add_argument("--stages", help="per-stage transform flags, e.g. 1,0")
    p.add_argument("--quiet", action="store_true", help="no per-epoch log on stderr")
    _transform_flags(p)


def _transform_flags(p):
    p.add_argument("--method", choices=tuple(METHOD_NAMES))
    p.add_argument("--alpha", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--noise", choices=("gaussian", "uniform", "random"))
    p.add_argument("--band", choices=("low", "high", "both"))


def build_parser():
    parser = _Parser(prog="aloft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic multi-domain dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-domains", type=int, default=4)
    p.add_argument("--num-classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on all domains but one")
    _training_flags(p)
    p.add_argument("--target-domain", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lodo", help="leave-one-domain-out over every domain")
    _training_flags(p)
    p.add_argument("--seeds", type=int, default=1, help="repeat over this many seeds")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_lodo)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on one domain")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--domain", required=True)
    p.add_argument("--split", default="all", choices=("train", "val", "all"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="apply a spectrum transform to a set of images")
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _transform_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("freq-curve", help="accuracy on low- or high-pass filtered images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--domain", help="defaults to the checkpoint's held-out domain")
    p.add_argument("--band", default="low", choices=("low", "high"))
    p.add_argument("--radii", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_freq_curve)

    p = sub.add_parser("domain-gap", help="mean distance between per-domain mean features")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--domains", help="comma-separated subset; default all")
    p.add_argument("--split", default="all", choices=("train", "val", "all"))
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_domain_gap)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except OSError as exc:
        print(f"aloft: I/O error: {exc}", file=sys.stderr)
        return 2
    except (AloftError, ValueError) as exc:
        print(f"aloft: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

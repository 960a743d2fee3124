"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 corrupt or mismatched data,
3 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .coder import Container, ModelMismatchError, decode_stream, encode_stream
from .config import JobConfig, load_config
from .entropy_models import ModelBundle
from .entropy_models.training import TrainSchedule, prepare_corpus
from .errors import CorruptStreamError
from .harness import (
    IntensityAblationRow,
    OccupancyAblationRow,
    RDRow,
    cache_key,
    cached_rows,
    evaluate_codec,
    intensity_ablation,
    is_monotone,
    leaf_offset_probe,
    occupancy_ablation,
    synthetic_corpus,
    train_bundle,
)
from .metrics import MetricRow, bitrate, evaluate_sweep, write_csv
from .nn.checkpoint import CheckpointError
from .nn.optim import TrainingError
from .pointcloud import (
    FormatError,
    RegionOfInterest,
    SceneParams,
    SweepStream,
    load_kitti_bin,
    read_stream,
    write_stream,
)

log = logging.getLogger("mslc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _read_streams(paths: Sequence) -> list[SweepStream]:
    if not paths:
        raise UsageError("no corpus files given")
    out = []
    for p in paths:
        if not Path(p).exists():
            raise UsageError(f"corpus file {p} does not exist")
        out.append(read_stream(p))
    return out


def _checkpoint_path(out_dir, D: int) -> Path:
    return Path(out_dir) / f"model_D{D}.ckpt"


# ---------------------------------------------------------------------------
# Commands


def cmd_convert(args) -> int:
    """KITTI .bin files (or a synthetic scene) into one stream file."""
    roi = RegionOfInterest(args.roi_side)
    if args.synthetic is not None:
        stream = synthetic_corpus(args.synthetic, 1, args.sweeps, SceneParams(roi=roi))[0]
    else:
        files = sorted(Path(args.input).glob("*.bin")) if Path(args.input).is_dir() else [Path(args.input)]
        if not files:
            raise UsageError(f"no .bin files under {args.input}")
        stream = SweepStream(tuple(load_kitti_bin(f, t) for t, f in enumerate(files)), roi)
    write_stream(stream, args.output)
    log.info("wrote %d sweeps to %s", len(stream), args.output)
    return EXIT_OK


def cmd_train(args, cfg: JobConfig) -> int:
    streams = _read_streams(cfg.train_corpus)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for D in cfg.depths:
        corpus = prepare_corpus(streams, D, neighbors=cfg.occupancy_variant == "OTBCC")
        tb = train_bundle(corpus, cfg.occupancy_variant, cfg.intensity_variant, cfg.schedule(),
                          cfg.schedule(intensity=True), cfg.seed)
        data = tb.bundle.save(_checkpoint_path(out, D))
        (out / f"model_D{D}.card.txt").write_text(tb.bundle.model_card())
        with open(out / f"losses_D{D}.csv", "w") as fh:
            fh.write("step,occupancy_bits_per_symbol,intensity_bits_per_symbol\n")
            n = max(tb.occupancy_result.steps, tb.intensity_result.steps)
            for i in range(n):
                a = tb.occupancy_result.losses[i] if i < tb.occupancy_result.steps else ""
                b = tb.intensity_result.losses[i] if i < tb.intensity_result.steps else ""
                fh.write(f"{i},{a},{b}\n")
        log.info("depth %d: checkpoint sha %s, %.1f s", D, _sha(data),
                 tb.occupancy_result.seconds + tb.intensity_result.seconds)
    return EXIT_OK


def cmd_encode(args) -> int:
    stream = read_stream(args.input)
    bundle = ModelBundle.load(args.model)
    if args.depth is not None and args.depth != bundle.depth:
        raise ModelMismatchError(f"checkpoint is for depth {bundle.depth}, not {args.depth}")
    t0 = time.perf_counter()
    container, stats = encode_stream(stream, bundle)
    data = container.to_bytes()
    Path(args.output).write_bytes(data)
    for t, s in enumerate(stats):
        log.info("sweep %d: %d points, sections %s", t, s.original_points, s.section_bits)
    points = sum(len(s) for s in stream)
    if points:
        log.info("%.3f bpp total, %.1f s, container sha %s",
                 bitrate(container, points).total, time.perf_counter() - t0, _sha(data))
    return EXIT_OK


def cmd_decode(args) -> int:
    container = Container.from_bytes(Path(args.input).read_bytes())
    bundle = ModelBundle.load(args.model)
    t0 = time.perf_counter()
    stream = decode_stream(container, bundle)
    write_stream(stream, args.output)
    log.info("decoded %d sweeps in %.1f s", len(stream), time.perf_counter() - t0)
    return EXIT_OK


def cmd_eval(args, cfg: JobConfig) -> int:
    original = read_stream(args.original)
    decoded = read_stream(args.decoded)
    if len(original) != len(decoded):
        raise UsageError("original and decoded streams differ in sweep count")
    container = Container.from_bytes(Path(args.container).read_bytes()) if args.container else None
    rows = []
    for t, (a, b) in enumerate(zip(original, decoded)):
        if container is not None and len(a):
            br = bitrate([container.frames[t]], len(a))
            total, spatial, D = br.total, br.spatial, container.depth
        else:
            total = spatial = float("nan")
            D = container.depth if container is not None else 0
        m = evaluate_sweep(a, b, cfg.metric_config)
        rows.append(MetricRow(t, D, total, spatial, m["f1"], m["chamfer"], m["psnr"]))
    write_csv(rows, args.output)
    return EXIT_OK


def _svg_plot(rows: Sequence[RDRow], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = sorted(rows, key=lambda r: r.bpp_total)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, key, label in zip(axes, ("f1", "chamfer", "psnr"), ("F1", "Chamfer (m)", "PSNR (dB)")):
        ax.plot([r.bpp_total for r in rows], [getattr(r, key) for r in rows], marker="o")
        for r in rows:
            ax.annotate(f"D={r.depth}", (r.bpp_total, getattr(r, key)), fontsize=7)
        ax.set_xlabel("bits per point")
        ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_rd_sweep(args, cfg: JobConfig) -> int:
    streams = [read_stream(p) for p in args.streams] if args.streams else _read_streams(cfg.test_corpus)
    bundles = {}
    for D in cfg.depths:
        p = _checkpoint_path(args.models or cfg.out_dir, D)
        if not p.exists():
            raise UsageError(f"missing checkpoint for depth {D}: {p}")
        bundles[D] = ModelBundle.load(p)
    rows = [evaluate_codec(bundles[D], streams, cfg.metric_config) for D in sorted(bundles)]
    out = Path(args.output)
    write_csv(rows, out)
    _svg_plot(rows, out.with_suffix(".svg"))
    mono = is_monotone(rows)
    log.info("monotone: %s", mono)
    return EXIT_OK


def cmd_ablate(args, cfg: JobConfig) -> int:
    train_streams = _read_streams(cfg.train_corpus)
    test_streams = _read_streams(cfg.test_corpus)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "cache"
    occ_rows, int_rows = [], []
    for D in cfg.depths:
        train = prepare_corpus(train_streams, D)
        test = prepare_corpus(test_streams, D)
        key = dict(cfg=cfg.to_text(), depth=D)
        occ_rows += cached_rows(cache, cache_key(kind="occ", **key),
                                lambda: occupancy_ablation(train, test, cfg.schedule()), OccupancyAblationRow)
        int_rows += cached_rows(cache, cache_key(kind="int", **key),
                                lambda: intensity_ablation(train, test, cfg.schedule(intensity=True),
                                                           compressor=cfg.compressor), IntensityAblationRow)
    write_csv(occ_rows, out / "ablation_occupancy.csv")
    write_csv(int_rows, out / "ablation_intensity.csv")
    return EXIT_OK


def cmd_probe(args, cfg: JobConfig) -> int:
    streams = [read_stream(p) for p in args.streams] if args.streams else _read_streams(cfg.test_corpus)
    rows = []
    for D in cfg.depths:
        rows += leaf_offset_probe(streams, D, (cfg.compressor,))
    for r in rows:
        print(f"D={r.depth} {r.compressor}: {r.compressed_bytes}/{r.raw_bytes} = {r.ratio:.4f}")
    if args.output:
        write_csv(rows, args.output)
    return EXIT_OK


def cmd_info(args) -> int:
    data = Path(args.path).read_bytes()
    head = data[:4]
    if head == b"MSC1":
        c = Container.from_bytes(data)
        print(f"container: depth {c.depth}, roi side {c.roi.side}, {len(c.frames)} frames, "
              f"model hash {c.model_hash.hex()}")
        for t, f in enumerate(c.frames):
            print(f"  frame {t}: {f.meta.original_points} points, sections {f.section_sizes()}")
    elif head == b"MSLC":
        s = read_stream(args.path)
        print(f"stream: {len(s)} sweeps, roi side {s.roi.side}, points {[len(x) for x in s]}")
    else:
        print(ModelBundle.loads(data).model_card(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="key = value job file")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS,
                        help="single-threaded numerics")
    p = argparse.ArgumentParser(prog="mslc", description="LiDAR sweep-stream compression", parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[common], **k)

    c = sub.add_parser("convert", help="KITTI .bin directory or synthetic scene to a stream file")
    c.add_argument("input", nargs="?", default="")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--synthetic", type=int, metavar="SEED")
    c.add_argument("--sweeps", type=int, default=6)
    c.add_argument("--roi-side", type=float, default=400.0)

    t = sub.add_parser("train", help="train one checkpoint per configured depth")
    t.add_argument("--corpus", nargs="+")
    t.add_argument("--variant")
    t.add_argument("--intensity-variant")
    t.add_argument("--steps", type=int)
    t.add_argument("--depth", type=int, help="train a single depth")
    t.add_argument("--out-dir")

    e = sub.add_parser("encode")
    e.add_argument("input")
    e.add_argument("-m", "--model", required=True)
    e.add_argument("-o", "--output", required=True)
    e.add_argument("-D", "--depth", type=int)

    d = sub.add_parser("decode")
    d.add_argument("input")
    d.add_argument("-m", "--model", required=True)
    d.add_argument("-o", "--output", required=True)

    v = sub.add_parser("eval", help="per-sweep metrics of a decoded stream")
    v.add_argument("original")
    v.add_argument("decoded")
    v.add_argument("--container")
    v.add_argument("-o", "--output", required=True)

    r = sub.add_parser("rd-sweep")
    r.add_argument("streams", nargs="*")
    r.add_argument("--models", help="directory holding model_D<depth>.ckpt")
    r.add_argument("-o", "--output", required=True)

    sub.add_parser("ablate")

    pr = sub.add_parser("probe-leaf-offsets")
    pr.add_argument("streams", nargs="*")
    pr.add_argument("-o", "--output")

    i = sub.add_parser("info")
    i.add_argument("path")
    return p


def _job_config(args) -> JobConfig:
    over = {}
    if getattr(args, "corpus", None):
        over["train_corpus"] = tuple(args.corpus)
    for name, key in (("variant", "occupancy_variant"), ("intensity_variant", "intensity_variant"),
                      ("steps", "steps"), ("out_dir", "out_dir")):
        if getattr(args, name, None) is not None:
            over[key] = getattr(args, name)
    if getattr(args, "depth", None) is not None and args.command == "train":
        over["depth_min"] = over["depth_max"] = args.depth
    return load_config(args.config, **over)


def _single_thread() -> None:
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:
        log.warning("threadpoolctl unavailable; thread count left to the BLAS defaults")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    for flag, default in (("config", None), ("verbose", False), ("deterministic", False)):
        if not hasattr(args, flag):
            setattr(args, flag, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        _single_thread()
    try:
        cfg = _job_config(args)
        handlers = {
            "convert": lambda: cmd_convert(args),
            "train": lambda: cmd_train(args, cfg),
            "encode": lambda: cmd_encode(args),
            "decode": lambda: cmd_decode(args),
            "eval": lambda: cmd_eval(args, cfg),
            "rd-sweep": lambda: cmd_rd_sweep(args, cfg),
            "ablate": lambda: cmd_ablate(args, cfg),
            "probe-leaf-offsets": lambda: cmd_probe(args, cfg),
            "info": lambda: cmd_info(args),
        }
        return handlers[args.command]()
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CorruptStreamError, ModelMismatchError, CheckpointError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

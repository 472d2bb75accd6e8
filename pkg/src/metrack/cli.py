"""Command-line driver: track, synth, eval, bench.

Ground truth and results use one comma-separated row per frame with
1-indexed frame numbers. Results carry the bit-exact header
``frame,x,y,w,h,score``; floats are written with full round-trip precision
so identical runs produce identical bytes.
"""

from __future__ import annotations

import argparse
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .features import load_frame
from .metrics import Box, cle, success_rate, vor
from .synth import SynthSpec, write_sequence
from .tracker import Tracker, TrackerConfig

RESULTS_HEADER = "frame,x,y,w,h,score"

# CLI option name -> TrackerConfig field. Config files use the same names.
_CFG_FIELDS = {
    "particles": ("particles", int),
    "buffer": ("buffer_capacity", int),
    "q": ("q", float),
    "c": ("c", float),
    "rho": ("rho", float),
    "gamma-f": ("gamma_f", float),
    "gamma-b": ("gamma_b", float),
    "triplets": ("triplets_per_update", int),
    "update-period": ("metric_update_period", int),
    "feature": ("feature_mode", str),
    "seed": ("seed", int),
}


@dataclass
class ResultRow:
    frame: int
    x: float
    y: float
    w: float
    h: float
    score: float
    cle: Optional[float] = None
    vor: Optional[float] = None

    @property
    def box(self) -> Box:
        return Box(self.x, self.y, self.w, self.h)


def write_results(path, rows: list[ResultRow]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(RESULTS_HEADER + "\n")
        for r in rows:
            f.write(f"{r.frame},{float(r.x)!r},{float(r.y)!r},{float(r.w)!r},"
                    f"{float(r.h)!r},{float(r.score)!r}\n")


def parse_results(path) -> list[ResultRow]:
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != RESULTS_HEADER:
            raise ValueError(f"{path}: unexpected results header {header!r}")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            rows.append(ResultRow(int(parts[0]), *(float(v) for v in parts[1:])))
    return rows


def load_ground_truth(path) -> dict[int, Box]:
    """Read `frame,x,y,w,h` rows; aborts citing the offending line number."""
    boxes: dict[int, Box] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise SystemExit(f"error: {path}: line {lineno}: expected frame,x,y,w,h")
            try:
                frame = int(parts[0])
                x, y, w, h = (float(v) for v in parts[1:])
                boxes[frame] = Box(x, y, w, h)
            except (ValueError, ArithmeticError) as exc:
                raise SystemExit(f"error: {path}: line {lineno}: {exc}") from exc
    return boxes


def discover_frames(directory) -> list[tuple[int, Path]]:
    """Numbered PGM/PNG frames in a directory, checked for gaps."""
    d = Path(directory)
    found: dict[int, Path] = {}
    for p in sorted(d.iterdir()):
        if p.suffix.lower() not in (".pgm", ".png"):
            continue
        nums = re.findall(r"\d+", p.stem)
        if not nums:
            raise SystemExit(f"error: frame file {p.name} carries no frame number")
        found[int(nums[-1])] = p
    if not found:
        raise SystemExit(f"error: no frames found in {d}")
    first, last = min(found), max(found)
    missing = [i for i in range(first, last + 1) if i not in found]
    if missing:
        raise SystemExit(f"error: missing frame {missing[0]} in {d}")
    return [(i, found[i]) for i in range(first, last + 1)]


def _parse_init(text: str) -> Box:
    parts = text.split(",")
    if len(parts) != 4:
        raise SystemExit("error: --init expects x,y,w,h")
    x, y, w, h = (float(v) for v in parts)
    return Box(x, y, w, h)


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"error: {path}: line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip().replace("_", "-")] = val.strip()
    return values


def build_tracker_config(args) -> TrackerConfig:
    """Defaults, overridden by a config file, overridden by flags."""
    kwargs = {}
    if getattr(args, "config", None):
        for key, val in _read_config_file(args.config).items():
            if key not in _CFG_FIELDS:
                raise SystemExit(f"error: unknown config key {key!r}")
            field, typ = _CFG_FIELDS[key]
            kwargs[field] = typ(val)
    for opt, (field, _typ) in _CFG_FIELDS.items():
        val = getattr(args, opt.replace("-", "_"), None)
        if val is not None:
            kwargs[field] = val
    if getattr(args, "no_metric_learning", False):
        kwargs["metric_learning"] = False
    if getattr(args, "refresh", None):
        kwargs["refresh_mode"] = args.refresh
    return TrackerConfig(**kwargs)


def _run_tracker(args, cfg: TrackerConfig):
    frames = discover_frames(args.frames)
    if getattr(args, "limit", None):
        frames = frames[: args.limit]
    gt = load_ground_truth(args.gt) if getattr(args, "gt", None) else None
    if args.init:
        init_box = _parse_init(args.init)
    elif gt and frames[0][0] in gt:
        init_box = gt[frames[0][0]]
    else:
        raise SystemExit("error: need --init or ground truth covering the first frame")

    t_start = time.perf_counter()
    first_id, first_path = frames[0]
    tracker = Tracker(load_frame(first_path), init_box, cfg)
    rows = [ResultRow(first_id, init_box.x, init_box.y, init_box.w, init_box.h,
                      tracker.current.score)]
    for frame_id, path in frames[1:]:
        state = tracker.step(load_frame(path))
        box = tracker.box_for(state)
        rows.append(ResultRow(frame_id, box.x, box.y, box.w, box.h, state.score))
    elapsed = time.perf_counter() - t_start

    if gt is not None:
        for r in rows:
            ref = gt.get(r.frame)
            if ref is not None:
                r.cle = cle(r.box, ref)
                r.vor = vor(r.box, ref)
    return tracker, rows, elapsed


def _print_summary(rows: list[ResultRow], seconds_per_frame: float) -> None:
    scored = [r for r in rows if r.vor is not None]
    print(f"frames: {len(rows)}")
    if scored:
        print(f"mean_cle: {sum(r.cle for r in scored) / len(scored):.4f}")
        print(f"mean_vor: {sum(r.vor for r in scored) / len(scored):.4f}")
        print(f"success_rate: {success_rate([r.vor for r in scored]):.4f}")
    print(f"mean_seconds_per_frame: {seconds_per_frame:.4f}")


def _write_metric_curves(out_path: Path, rows: list[ResultRow]) -> None:
    curve_path = out_path.with_suffix(out_path.suffix + ".metrics.csv")
    with open(curve_path, "w", newline="\n") as f:
        f.write("frame,cle,vor\n")
        for r in rows:
            if r.vor is not None:
                f.write(f"{r.frame},{float(r.cle)!r},{float(r.vor)!r}\n")


def cmd_track(args) -> int:
    cfg = build_tracker_config(args)
    tracker, rows, elapsed = _run_tracker(args, cfg)
    out = Path(args.out)
    write_results(out, rows)
    if any(r.vor is not None for r in rows):
        _write_metric_curves(out, rows)
    _print_summary(rows, elapsed / max(len(rows), 1))
    return 0


def cmd_synth(args) -> int:
    occlude = None
    if args.occlude:
        parts = args.occlude.split(",")
        if len(parts) != 2:
            raise SystemExit("error: --occlude expects t0,t1")
        occlude = (int(parts[0]), int(parts[1]))
    w, _, h = args.size.partition("x")
    spec = SynthSpec(width=int(w), height=int(h), length=args.length,
                     amplitude=args.amplitude, period=args.period,
                     drift=args.drift, noise=args.noise,
                     noise_mode=args.noise_mode, occlude=occlude, seed=args.seed)
    paths, gt_path = write_sequence(spec, args.out_dir)
    print(f"wrote {len(paths)} frames and {gt_path}")
    return 0


def cmd_eval(args) -> int:
    rows = parse_results(args.results)
    gt = load_ground_truth(args.gt)
    for r in rows:
        ref = gt.get(r.frame)
        if ref is not None:
            r.cle = cle(r.box, ref)
            r.vor = vor(r.box, ref)
    _print_summary(rows, 0.0)
    return 0


def cmd_bench(args) -> int:
    cfg = build_tracker_config(args)
    tracker, rows, elapsed = _run_tracker(args, cfg)
    means = tracker.mean_timings()
    print(f"frames: {tracker.frames_processed}")
    for phase in ("features", "scoring", "reservoir", "metric"):
        print(f"phase_{phase}_s: {means[phase]:.4f}")
    print(f"phase_sum_s: {sum(means[p] for p in ('features', 'scoring', 'reservoir', 'metric')):.4f}")
    print(f"mean_step_s: {means['total']:.4f}")
    print(f"mean_seconds_per_frame: {elapsed / max(len(rows), 1):.4f}")
    return 0


def _add_tracking_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frames", required=True, help="directory of numbered frames")
    p.add_argument("--gt", help="ground-truth file (frame,x,y,w,h per line)")
    p.add_argument("--init", help="initial box as x,y,w,h (defaults to gt row of first frame)")
    p.add_argument("--out", default="results.csv", help="results path")
    p.add_argument("--config", help="key = value config file; flags take precedence")
    p.add_argument("--limit", type=int, help="process at most N frames")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles", type=int)
    p.add_argument("--buffer", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--gamma-f", type=float)
    p.add_argument("--gamma-b", type=float)
    p.add_argument("--triplets", type=int)
    p.add_argument("--update-period", type=int)
    p.add_argument("--feature", choices=("hog", "raw"))
    p.add_argument("--refresh", choices=("rebuild", "rank_one"))
    p.add_argument("--no-metric-learning", action="store_true")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="metrack",
                                     description="metric-weighted appearance tracker")
    sub = parser.add_subparsers(dest="command", required=True)

    p_track = sub.add_parser("track", help="run the tracker over a sequence")
    _add_tracking_options(p_track)
    p_track.set_defaults(func=cmd_track)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--size", default="160x120", help="frame size WxH")
    p_synth.add_argument("--length", type=int, default=200)
    p_synth.add_argument("--amplitude", type=float, default=40.0)
    p_synth.add_argument("--period", type=float, default=100.0)
    p_synth.add_argument("--drift", type=float, default=0.3)
    p_synth.add_argument("--noise", type=float, default=3.0)
    p_synth.add_argument("--noise-mode", choices=("iid", "correlated"), default="iid")
    p_synth.add_argument("--occlude", help="occlusion interval t0,t1 (0-based frames)")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="recompute metrics from results and ground truth")
    p_eval.add_argument("--results", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="per-phase timing over a sequence")
    _add_tracking_options(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

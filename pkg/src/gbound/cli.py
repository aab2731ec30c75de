"""Command-line interface: ``gbound <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .core import GbConfig, LayerStack, gb1_detect
from .depth import depth_largest_component
from .evaluate import aggregate, default_thresholds, image_counts, plot_curve, rank_thresholds, write_csv
from .fast import default_radii, gb2_detect, multiscale_detect
from .parallel import pmap
from .postprocess import logistic_prob, nms
from .softseg import ColorQuantizer, soft_segment
from .synth import SynthSpec, random_spec, synth_generate
from .train import fit_calibration, learn_layer_scales, prepare

log = logging.getLogger("gbound")


class CLIError(Exception):
    pass


def _detector_args(p):
    p.add_argument("--algo", choices=["gb1", "gb2", "multiscale"], default="gb1")
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=None, help="disk radius (default radius/2)")
    p.add_argument("--gaussian", action="store_true", help="Gaussian row weights (gb1 only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbound", description="Generalized boundary detection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect boundaries in a stack of layers")
    p.add_argument("inputs", nargs="*", type=Path, help="images, .gbls stacks, .flo or .npy files")
    p.add_argument("--flow", nargs="+", type=Path, default=[], help=".flo files")
    p.add_argument("--average", action="store_true", help="average the --flow files into one (u, v) pair")
    p.add_argument("--depth", type=Path, help="depth map (image, .npy or single-layer stack)")
    p.add_argument("--depth-tol", type=float, help="replace depth by its largest similar-depth component")
    p.add_argument("--lab", action="store_true", help="convert colour images to rescaled CIE Lab")
    _detector_args(p)
    p.add_argument("--radii", type=int, nargs="+", help="multiscale radii (default r/2, r, 2r)")
    p.add_argument("--params", type=Path, help="trained parameter file (scales + logistic)")
    p.add_argument("--nms", action="store_true", help="thin the output along the normals")
    p.add_argument("--out", type=Path, required=True, help="output prefix")
    p.add_argument("--config", type=Path, help="key=value defaults; flags win")

    p = sub.add_parser("softseg", help="soft figure/ground layers of a colour image")
    p.add_argument("image", type=Path)
    p.add_argument("--ns", type=int, default=150)
    p.add_argument("--patch-radius", type=int, default=2)
    p.add_argument("--subspace-dim", type=int, default=4)
    p.add_argument("--out", type=Path, required=True, help="output .gbls stack")
    p.add_argument("--vis", type=Path, help="PNG of the first three layers as RGB")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("train", help="learn layer scales and logistic calibration")
    p.add_argument("--manifest", type=Path, required=True,
                   help="lines of: GT_FILE LAYER_FILE [LAYER_FILE ...]")
    _detector_args(p)
    p.add_argument("--lab", action="store_true")
    p.add_argument("--dmax", type=float, help="match tolerance in pixels (default 0.0075 x diagonal)")
    p.add_argument("--max-evals", type=int, default=200)
    p.add_argument("--out", type=Path, required=True, help="parameter file to write")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("eval", help="precision/recall against ground truth")
    p.add_argument("--pred-dir", type=Path, required=True)
    p.add_argument("--gt-dir", type=Path, required=True)
    p.add_argument("--dmax", type=float, help="match tolerance in pixels (default 0.0075 x diagonal)")
    p.add_argument("--thresholds", type=int, default=33)
    p.add_argument("--rank-thresholds", action="store_true", help="thresholds at quantiles of the predictions")
    p.add_argument("--no-thin", action="store_true", help="skip thinning of binarised maps")
    p.add_argument("--out", type=Path, required=True, help="output prefix for .csv and .png")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("bench", help="runtime sweep of Gb1 and Gb2")
    p.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    p.add_argument("--radii", type=int, nargs="+", default=[4, 8])
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--skip-gb1-above", type=int, default=512, help="largest side for timing Gb1")
    p.add_argument("--out", type=Path, required=True, help="CSV file")
    p.add_argument("--config", type=Path)

    p = sub.add_parser("synth", help="write a synthetic stack and its ground truth")
    p.add_argument("--spec", type=Path, help="JSON scene; random scene when omitted")
    p.add_argument("--seed", type=int, help="overrides the scene seed (default 0 for random scenes)")
    p.add_argument("--size", type=int, nargs=2, default=[128, 128], metavar=("H", "W"))
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out", type=Path, required=True, help="output prefix")
    p.add_argument("--config", type=Path)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the ``--config`` file, if any."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in io.read_keyvalue(args.config).items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            raise CLIError(f"{args.config}: unknown key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*") or isinstance(action.nargs, int):
            conv = action.type or str
            defaults[dest] = [conv(v) for v in raw.replace(",", " ").split()]
        else:
            defaults[dest] = (action.type or str)(raw)
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _config(args) -> GbConfig:
    return GbConfig(radius=args.radius, epsilon=args.epsilon, gaussian=args.gaussian)


def _depth_stack(path: Path, tol) -> LayerStack:
    depth = io.load_layers(path).data[0]
    if tol is not None:
        return LayerStack(depth_largest_component(depth, tol), ["depth_mask"])
    return LayerStack(depth, ["depth"])


def gather_layers(inputs, flow=(), average=False, depth=None, depth_tol=None, lab=False) -> LayerStack:
    stacks = [io.load_layers(p, lab=lab) for p in inputs]
    flows = [io.read_flo(p) for p in flow]
    if average and flows:
        flows = [LayerStack(np.mean([f.data for f in flows], axis=0), ["flow_u", "flow_v"])]
    stacks += flows
    if depth is not None:
        stacks.append(_depth_stack(depth, depth_tol))
    if not stacks:
        raise CLIError("no input layers given")
    return LayerStack.concatenate(stacks)


def run_detector(stack: LayerStack, args):
    cfg = _config(args)
    if args.algo == "gb1":
        return gb1_detect(stack, cfg)
    if args.algo == "gb2":
        return gb2_detect(stack, cfg)
    return multiscale_detect(stack, args.radii or default_radii(args.radius))


def cmd_detect(args) -> None:
    stack = gather_layers(args.inputs, args.flow, args.average, args.depth, args.depth_tol, args.lab)
    params = None
    if args.params:
        params, gammas = io.read_params(args.params)
        if gammas.size != stack.layer_count:
            raise CLIError(f"{args.params}: {gammas.size} scales for {stack.layer_count} layers")
        stack = stack.with_gammas(gammas)
    bmap = run_detector(stack, args)
    strength = nms(bmap) if args.nms else bmap.strength
    out = args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(f"{out}.strength.npy", strength)
    np.save(f"{out}.theta.npy", bmap.theta)
    if params is not None:
        prob = logistic_prob(strength, params)
        if args.nms:
            prob = np.where(strength > 0, prob, 0.0)
        np.save(f"{out}.prob.npy", prob)
        io.write_png(f"{out}.png", prob)
    else:
        peak = strength.max()
        io.write_png(f"{out}.png", strength / peak if peak > 0 else strength)
    log.info("wrote %s.{strength,theta}.npy", out)


def cmd_softseg(args) -> None:
    stack = io.read_image(args.image)
    if stack.layer_count != 3:
        raise CLIError("softseg needs a colour image")
    seg = soft_segment(stack.data, args.ns, args.patch_radius, ColorQuantizer(), args.subspace_dim)
    if seg.degenerate:
        log.warning("image has a single colour; soft segmentation is constant")
    io.write_stack(args.out, LayerStack(seg.layers, [f"softseg{i}" for i in range(len(seg.layers))]))
    if args.vis:
        io.write_png(args.vis, seg.layers[:3])


def read_manifest(path: Path, lab=False):
    items = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) < 2:
            raise CLIError(f"{path}:{n}: expected GT_FILE LAYER_FILE [...]")
        base = path.parent
        gt = io.read_mask(base / parts[0])
        stack = LayerStack.concatenate([io.load_layers(base / p, lab=lab) for p in parts[1:]])
        items.append((stack, gt))
    if not items:
        raise CLIError(f"{path}: empty manifest")
    return items


def cmd_train(args) -> None:
    train = read_manifest(args.manifest, args.lab)
    if args.algo == "multiscale":
        raise CLIError("training supports gb1 and gb2")
    items = prepare(train, _config(args), args.algo, args.dmax)
    gammas = learn_layer_scales(items, max_evals=args.max_evals)
    params = fit_calibration(items, gammas)
    io.write_params(args.out, params, gammas)
    log.info("scales %s, logistic w0=%.4g w1=%.4g", gammas, params.w0, params.w1)


def _load_map(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    return io.load_layers(path).data[0]


def cmd_eval(args) -> None:
    preds, gts = [], []
    for gt_path in sorted(args.gt_dir.iterdir()):
        if gt_path.name.startswith("."):
            continue
        cands = sorted(args.pred_dir.glob(gt_path.stem + ".*"))
        if not cands:
            raise CLIError(f"no prediction for {gt_path.name} in {args.pred_dir}")
        preds.append(_load_map(cands[0]))
        gts.append(io.read_mask(gt_path))
    if not gts:
        raise CLIError(f"no ground-truth files in {args.gt_dir}")
    if args.rank_thresholds:
        th = rank_thresholds(np.concatenate([p.ravel() for p in preds]), args.thresholds)
    else:
        th = default_thresholds(args.thresholds)
    curve = aggregate_parallel(preds, gts, th, args.dmax, not args.no_thin)
    write_csv(curve, f"{args.out}.csv")
    plot_curve(curve, f"{args.out}.png")
    f = max(p.f for p in curve)
    print(f"ODS-F {f:.4f} over {len(gts)} images")


def aggregate_parallel(preds, gts, thresholds, d_max, thin):
    return aggregate(pmap(lambda pg: image_counts(pg[0], pg[1], thresholds, d_max, thin), zip(preds, gts)))


def _time(fn, repeats):
    best = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t)
    return float(np.median(best))


def cmd_bench(args) -> None:
    rng = np.random.default_rng(0)
    rows = []
    for n in args.sizes:
        layers = rng.random((args.layers, n, n))
        for r in args.radii:
            cfg = GbConfig(radius=r)
            t2 = _time(lambda: gb2_detect(layers, cfg), args.repeats)
            t1 = _time(lambda: gb1_detect(layers, cfg), args.repeats) if n <= args.skip_gb1_above else float("nan")
            rows.append((n * n, r, t1, t2))
            print(f"pixels={n * n:8d} r={r:3d} gb1={t1:8.4f}s gb2={t2:8.4f}s")
    with open(args.out, "w") as fh:
        fh.write("pixels,radius,gb1_seconds,gb2_seconds\n")
        for row in rows:
            fh.write("%d,%d,%.6f,%.6f\n" % row)


def cmd_synth(args) -> None:
    if args.spec:
        spec = SynthSpec.from_json(args.spec.read_text())
        if args.seed is not None:
            spec.seed = args.seed
    else:
        spec = random_spec(args.seed or 0, args.size[0], args.size[1], noise=args.noise)
    stack, gt = synth_generate(spec)
    io.write_stack(f"{args.out}.gbls", stack)
    io.write_pgm(f"{args.out}_gt.pgm", gt.astype(np.float64))
    Path(f"{args.out}.json").write_text(json.dumps(spec.__dict__, indent=1))


COMMANDS = {
    "detect": cmd_detect,
    "softseg": cmd_softseg,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except (CLIError, io.FormatError, OSError, ValueError) as exc:
        print(f"gbound: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr; data goes to files or stdout.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backend import active_backend
from .benchmark import ablation_grid, benchmark_datasets, render_markdown
from .camnorm import normalize_camera_motion
from .flowio import (
    FlowFormatError,
    colorize,
    magnitude,
    normalize_magnitudes,
    read_flow_file,
    write_flow_file,
    write_magnitude_png,
    write_png,
)
from .gradcheck import format_table, run_suites
from .selection import SelectionConfig, select_dataset, write_manifest
from .synth import generate_dataset, load_dataset, scene_spec_from_dict, write_dataset
from .trainer import (
    config_from_dict,
    evaluate,
    fit,
    load_model,
    report_to_dict,
    save_model,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this artifact reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_kv_config(path) -> dict:
    """Config file: JSON object, or 'key = value' lines (# comments)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if raw.lower() in ("true", "false"):
            out[key] = raw.lower() == "true"
        else:
            try:
                out[key] = int(raw)
            except ValueError:
                try:
                    out[key] = float(raw)
                except ValueError:
                    out[key] = raw
    return out


def _cmd_flow_colorize(args):
    flow = read_flow_file(args.input, nonfinite="zero" if args.zero_nonfinite else "reject")
    write_png(colorize(flow), args.output)
    return 0


def _cmd_flow_magnitude(args):
    flow = read_flow_file(args.input, nonfinite="zero" if args.zero_nonfinite else "reject")
    write_magnitude_png(normalize_magnitudes(magnitude(flow)), args.output)
    return 0


def _cmd_flow_normalize(args):
    flow = read_flow_file(args.input, nonfinite="zero" if args.zero_nonfinite else "reject")
    normalized, bg = normalize_camera_motion(flow, args.corner_fraction)
    write_flow_file(normalized, args.output)
    if args.report:
        from .camnorm import corner_stats

        stats = corner_stats(flow, args.corner_fraction)
        report = {
            "corners": [
                {
                    "corner_id": s.corner_id,
                    "mean_flow": s.mean_flow.tolist(),
                    "mean_magnitude": s.mean_magnitude,
                }
                for s in stats
            ],
            "background": {
                "flow": bg.flow.tolist(),
                "contributing_corners": list(bg.contributing_corners),
            },
        }
        with open(args.report, "w") as f:
            json.dump(report, f, indent=2)
    return 0


def _cmd_select(args):
    file_cfg = _read_kv_config(args.config) if args.config else {}
    m = args.m if args.m is not None else float(file_cfg.get("m", 0.2))
    d = args.d if args.d is not None else float(file_cfg.get("d", 1.5))
    cfg = SelectionConfig(m=m, d=d)

    with open(args.boxes) as f:
        boxes = json.load(f)
    flow_paths = sorted(Path(args.flows).glob("*.flo"))
    if not flow_paths:
        raise FileNotFoundError(f"no .flo files under {args.flows}")

    records = []
    failures = []
    for path in flow_paths:
        image_id = path.stem
        if image_id not in boxes:
            failures.append((image_id, "no box prediction for image"))
            continue
        mag = normalize_magnitudes(magnitude(read_flow_file(path)))
        records.append((image_id, mag, boxes[image_id]))
    manifest = list(select_dataset(records, cfg))
    from .selection import SelectionRecord

    for image_id, reason in failures:
        manifest.append(SelectionRecord(image_id=image_id, ib=None, ob=None,
                                        selected=0, error=reason))
    manifest.sort(key=lambda r: r.image_id)
    write_manifest(manifest, args.out)
    kept = sum(r.selected for r in manifest)
    print(f"selected {kept}/{len(manifest)} images -> {args.out}", file=sys.stderr)
    return 0


def _cmd_synth_generate(args):
    with open(args.spec) as f:
        payload = json.load(f)
    specs = [scene_spec_from_dict(d) for d in payload["scenes"]]
    if args.degraded:
        from dataclasses import replace

        specs = [
            replace(s, boundary_blur=max(s.boundary_blur, 1.5),
                    noise_sigma=max(s.noise_sigma, 0.15))
            for s in specs
        ]
    samples = generate_dataset(specs, args.seed)
    write_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples -> {args.out}", file=sys.stderr)
    return 0


def _cmd_train_toy(args):
    file_cfg = _read_kv_config(args.config) if args.config else {}
    bench = {k[len("benchmark_"):]: v for k, v in file_cfg.items()
             if k.startswith("benchmark_")}
    train_keys = {k: v for k, v in file_cfg.items() if not k.startswith("benchmark_")}
    for flag in ("seed", "epochs", "learning_rate", "nce_weight"):
        value = getattr(args, flag)
        if value is not None:
            train_keys[flag] = value
    cfg = config_from_dict(train_keys)

    if args.data:
        train_set = load_dataset(args.data)
        eval_set = load_dataset(args.eval_data) if args.eval_data else None
    else:
        train_set, eval_set = benchmark_datasets(
            seed=int(bench.get("seed", 0)),
            camera=bool(bench.get("camera", True)),
            degraded=bool(bench.get("degraded", False)),
            n_train=int(bench.get("n_train", 200)),
            n_eval=int(bench.get("n_eval", 50)),
        )
    model, report = fit(train_set, cfg, eval_set)
    with open(args.out, "w") as f:
        json.dump(report_to_dict(report), f, indent=2)
    if args.model:
        save_model(model, args.model)
    print(f"CorLoc {report.corloc:.3f} -> {args.out}", file=sys.stderr)
    return 0


def _cmd_ablate(args):
    seeds = tuple(range(args.seeds))
    rows = ablation_grid(seeds=seeds, camera=not args.no_camera, degraded=args.degraded,
                         n_train=args.n_train, n_eval=args.n_eval)
    table = render_markdown(rows, seeds, not args.no_camera, args.degraded)
    Path(args.out).write_text(table)
    print(table, end="", file=sys.stderr)
    return 0


def _cmd_gradcheck(args):
    module = "all" if args.all else args.module
    rows = run_suites(module=module, instances=args.instances, seed=args.seed)
    print(format_table(rows))
    return 0 if all(r.passed for r in rows) else 2


def _cmd_eval(args):
    model = load_model(args.model)
    samples = load_dataset(args.data)
    result = evaluate(model, samples)
    payload = {
        "corloc": result.corloc,
        "per_class_corloc": {str(c): v for c, v in result.per_class_corloc.items()},
        "n_pairs": result.n_pairs,
    }
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=2)
    else:
        json.dump(payload, sys.stdout, indent=2)
        print()
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="motionmil", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"motionmil {__version__} ({active_backend()} backend)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_flow = sub.add_parser("flow", help="flow-field utilities")
    flow_sub = p_flow.add_subparsers(dest="flow_command", required=True, parser_class=_Parser)

    p = flow_sub.add_parser("colorize", help="render a .flo file to a color PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--zero-nonfinite", action="store_true",
                   help="replace NaN/Inf flow values with zeros instead of failing")
    p.set_defaults(func=_cmd_flow_colorize)

    p = flow_sub.add_parser("magnitude", help="render normalized flow magnitude to a grayscale PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--zero-nonfinite", action="store_true")
    p.set_defaults(func=_cmd_flow_magnitude)

    p = flow_sub.add_parser("normalize", help="subtract corner-estimated camera motion")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--corner-fraction", type=float, default=0.1)
    p.add_argument("--report", help="write corner stats and the estimate as JSON")
    p.add_argument("--zero-nonfinite", action="store_true")
    p.set_defaults(func=_cmd_flow_normalize)

    p = sub.add_parser("select", help="motion-driven training-image selection")
    p.add_argument("--flows", required=True, help="directory of <image_id>.flo files")
    p.add_argument("--boxes", required=True,
                   help='JSON {"image_id": [x0, y0, x1, y1], ...}')
    p.add_argument("--m", type=float, default=None, help="minimum motion threshold")
    p.add_argument("--d", type=float, default=None, help="minimum motion ratio threshold")
    p.add_argument("--out", required=True, help="line-oriented JSON manifest")
    p.add_argument("--config", help="key = value config file (flags win)")
    p.set_defaults(func=_cmd_select)

    p_synth = sub.add_parser("synth", help="synthetic scene generation")
    synth_sub = p_synth.add_subparsers(dest="synth_command", required=True, parser_class=_Parser)
    p = synth_sub.add_parser("generate", help="write .flo files, features, labels")
    p.add_argument("--spec", required=True, help='JSON {"scenes": [...]}')
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--degraded", action="store_true",
                   help="blur flow boundaries and raise flow noise")
    p.set_defaults(func=_cmd_synth_generate)

    p = sub.add_parser("train-toy", help="train on synthetic data and report CorLoc")
    p.add_argument("--config", help="JSON or key = value config file")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--model", help="also save the trained model as JSON")
    p.add_argument("--data", help="dataset directory from 'synth generate'")
    p.add_argument("--eval-data", help="held-out dataset directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--nce-weight", type=float, default=None)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("ablate", help="run the toggle grid and write a markdown table")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--n-train", type=int, default=120)
    p.add_argument("--n-eval", type=int, default=40)
    p.add_argument("--degraded", action="store_true")
    p.add_argument("--no-camera", action="store_true")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--module", choices=("all", "milhead", "contrastive"), default="all")
    p.add_argument("--all", action="store_true", help="check every module (the default)")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FlowFormatError, OSError, ValueError, KeyError, RuntimeError,
            json.JSONDecodeError) as exc:
        print(f"motionmil: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

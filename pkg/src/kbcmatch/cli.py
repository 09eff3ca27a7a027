"""Command-line surface.

Subcommands run in-process by default; pass ``--server URL`` to send the same
request to a running service instead (the CLI then acts as a thin HTTP
client). File formats are identical either way, and every run with a fixed
seed and fixed inputs is byte-deterministic in its output files.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from .annotations import dump_records, read_annotations, read_records, write_records
from .bench import DEFAULT_REPEATS, DEFAULT_SHAPE, bench_conv4d
from .config import DATASET_THRESHOLDS, KBC_MODES, RunConfig
from .errors import KbcMatchError
from .tensorfile import read_tensor, tensor_bytes

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2


def _error_line(code: str, detail: str) -> None:
    print(json.dumps({"error": code, "detail": detail}, sort_keys=True), file=sys.stderr)


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(server.rstrip("/") + route, json=payload, timeout=600.0)
    if response.status_code != 200:
        raise KbcMatchError(f"server returned {response.status_code}: {response.text}")
    return response.json()


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "dataset", None):
        cfg = cfg.for_dataset(args.dataset)
    overrides = {}
    for attr, key in (("seed", "seed"), ("threshold", "kbc_threshold"),
                      ("temperature", "temperature"), ("input_size", "input_size")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _load_weights(args, cfg: RunConfig):
    from .pipeline import ModelWeights

    if getattr(args, "weights", None):
        return ModelWeights.load(args.weights)
    return ModelWeights.inference_default(cfg.seed, cfg.feature_channels)


def _image_loader(images_dir: str):
    root = Path(images_dir)

    def load(image_id: str):
        path = root / f"{image_id}.kbct"
        if not path.exists():
            raise KbcMatchError(f"image tensor not found: {path}")
        return read_tensor(path)

    return load


def cmd_infer(args) -> int:
    cfg = _config_from_args(args)
    annotations = read_annotations(args.annotations)
    if args.server:
        images = {}
        load = _image_loader(args.images)
        for ann in annotations:
            for image_id in (ann.src_image, ann.trg_image):
                if image_id not in images:
                    blob = tensor_bytes(load(image_id))
                    images[image_id] = {"data_b64": base64.b64encode(blob).decode("ascii")}
        payload = {
            "pairs": [a.to_record() for a in annotations],
            "images": images,
            "kbc": args.kbc,
            "config": cfg.to_dict(),
        }
        records = _post(args.server, "/infer", payload)["predictions"]
        records = [{k: v for k, v in r.items() if v is not None} for r in records]
    else:
        from .features import FileFeatureProvider, ToyFeatureProvider
        from .runner import infer_pairs

        provider = (FileFeatureProvider(args.features) if args.features
                    else ToyFeatureProvider(cfg.seed, cfg.feature_channels))
        weights = _load_weights(args, cfg)
        records = infer_pairs(annotations, _image_loader(args.images), weights,
                              provider, cfg, kbc_mode=args.kbc)
    write_records(args.out, records)
    print(f"wrote {len(records)} prediction records to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    alphas = tuple(float(a) for a in args.alphas.split(","))
    annotations = read_annotations(args.annotations)
    predictions = read_records(args.predictions)
    if args.server:
        payload = {
            "annotations": [a.to_record() for a in annotations],
            "predictions": predictions,
            "alphas": list(alphas),
            "alpha_reference": args.alpha_ref,
        }
        report = _post(args.server, "/evaluate", payload)["report"]
    else:
        from .runner import evaluate_pairs

        report = evaluate_pairs(annotations, predictions, alphas=alphas,
                                alpha_reference=args.alpha_ref)
    if args.out:
        write_records(args.out, report)
    else:
        sys.stdout.write(dump_records(report))
    footer = report[-1]
    for alpha, value in footer["mean_pck"].items():
        print(f"mean PCK@{alpha} = {value:.4f}  ({footer['pairs']} pairs)", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    shape = tuple(int(v) for v in args.shape.split(","))
    if args.server:
        result = _post(args.server, "/bench/conv4d",
                       {"shape": list(shape), "kernel": args.kernel,
                        "repeats": args.repeats, "seed": args.seed or 0})
    else:
        result = bench_conv4d(shape=shape, kernel_size=args.kernel,
                              repeats=args.repeats, seed=args.seed or 0)
    print(f"dense         {result['dense_median_s'] * 1e3:10.2f} ms")
    print(f"center-pivot  {result['center_pivot_median_s'] * 1e3:10.2f} ms")
    print(f"speedup       {result['speedup']:10.2f}x")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.server:
        result = _post(args.server, "/gradcheck",
                       {"seed": args.seed or 0, "step": args.step,
                        "max_per_group": args.max_per_group})
        per_group, max_err = result["per_group"], result["max_rel_error"]
    else:
        from .gradcheck_harness import run_gradcheck

        report = run_gradcheck(seed=args.seed or 0, step=args.step,
                               max_per_group=args.max_per_group)
        max_err = report["max"]
        per_group = report["groups"]
    for name in sorted(per_group):
        g = per_group[name]
        print(f"{name:30s} max rel err {g['max_rel']:.3e}  "
              f"(norm {g['norm_rel']:.3e}, {g['checked']} checked, "
              f"{g['kink_skipped']} kink-skipped)")
    print(f"{'OVERALL':30s} max rel err {max_err:.3e}")
    return EXIT_OK if max_err < args.tolerance else EXIT_FAILURE


def cmd_selftest(args) -> int:
    if args.server:
        result = _post(args.server, "/selftest", {})
        results = result["results"]
    else:
        from .selftest import run_selftest

        results = run_selftest()
    failed = 0
    for record in results:
        status = "PASS" if record["passed"] else "FAIL"
        suffix = f"  {record['detail']}" if record["detail"] else ""
        print(f"{status} {record['name']}{suffix}")
        failed += 0 if record["passed"] else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def cmd_make_synthetic(args) -> int:
    from .synthetic import write_benchmark

    manifest = write_benchmark(args.out, n_pairs=args.pairs, seed=args.seed or 0,
                               size=args.size)
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbcmatch",
                                     description="semantic keypoint correspondence engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, server=True):
        if server:
            p.add_argument("--server", help="run against a service instead of in-process")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("infer", help="predict target keypoints for annotated pairs")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True, help="directory of <image_id>.kbct tensors")
    p.add_argument("--out", required=True)
    p.add_argument("--kbc", choices=KBC_MODES, default="src+trg")
    p.add_argument("--weights", help="named-tensor weight bundle")
    p.add_argument("--features", help="directory of pre-extracted feature files")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", choices=sorted(DATASET_THRESHOLDS))
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--input-size", dest="input_size", type=int, default=None)
    add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="report path (stdout when omitted)")
    p.add_argument("--alphas", default="0.05,0.1,0.15")
    p.add_argument("--alpha-ref", dest="alpha_ref", choices=("bbox", "img"), default="bbox")
    add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("bench-conv4d", help="time dense vs center-pivot convolution")
    p.add_argument("--shape", default=",".join(str(v) for v in DEFAULT_SHAPE))
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    add_common(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of decoder gradients")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-per-group", dest="max_per_group", type=int, default=None)
    add_common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("selftest", help="run the built-in assertion registry")
    add_common(p)
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("make-synthetic", help="generate the small-object benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--size", type=int, default=256)
    add_common(p, server=False)
    p.set_defaults(fn=cmd_make_synthetic)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KbcMatchError as exc:
        _error_line(exc.code, str(exc))
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        _error_line("not_found", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - unexpected failures
        _error_line("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

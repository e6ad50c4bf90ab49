"""Command-line surface: curate, train, eval, spectra, serve-review.

Exit codes: 0 success, 1 runtime failure, 2 usage error. A --config file of
`key = value` lines supplies defaults for any long flag (dashes or
underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import boosting, curation, datasets, metrics, nn, review, spectra
from .errors import DomainError, ManifestParseError, NumericError, ValidationError

SWEEP_GRID = "1,3,5,7,9,10"


def parse_config(path) -> dict:
    """Read `key = value` lines; values go through JSON, falling back to str."""
    overrides = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line without '=': {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            overrides[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key.replace("-", "_")] = value
    return overrides


def _comma_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="mdboost", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--config", help="key = value file of flag defaults")
    subs = parser.add_subparsers(dest="command", required=True)
    sub_map = {}

    p = subs.add_parser("curate", help="run the filtering pipeline over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="path for the filtered manifest")
    p.add_argument("--stages", default="prompt,detect,style,word,manual,crop",
                   help='comma list from {prompt,detect,style,word,manual,crop}; "" copies')
    p.add_argument("--image-root", help="directory image paths are relative to")
    p.add_argument("--out-dir", help="directory for cropped images")
    p.add_argument("--report", help="also write the report as JSON here")
    p.add_argument("--prompt-threshold", type=float, default=0.5)
    p.add_argument("--detect-threshold", type=float, default=0.5)
    p.add_argument("--edge-threshold", type=float, default=100.0)
    p.add_argument("--color-threshold", type=float, default=200.0)
    p.add_argument("--exclude", default="anime", help="comma list of style exclusion words")
    p.add_argument("--crop-size", type=int, default=256)
    p.add_argument("--min-face-px", type=int, default=64)
    p.add_argument("--edge-metric", choices=("components", "pixel_fraction"),
                   default="components")
    sub_map["curate"] = p

    p = subs.add_parser("train", help="train one or more strategies and report metrics")
    p.add_argument("--train-manifest", action="append", required=True)
    p.add_argument("--test-manifest", action="append", required=True)
    p.add_argument("--strategy", default="mdb",
                   help="comma list from {vanilla,kd,dw,mdb}")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.0001)
    p.add_argument("--momentum-m", type=float, default=0.97)
    p.add_argument("--cap-C", type=float, default=5.0)
    p.add_argument("--kd-temperature", type=float, default=2.0)
    p.add_argument("--kd-beta", type=float, default=0.5)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--hidden-dims", default="8", help="comma list of hidden layer sizes")
    p.add_argument("--activation", choices=nn.ACTIVATIONS, default="relu")
    p.add_argument("--threshold", type=float, default=0.5, help="accuracy threshold")
    p.add_argument("--sweep-C", nargs="?", const=SWEEP_GRID, default=None,
                   help=f"run a grid of C values (default grid {SWEEP_GRID})")
    p.add_argument("--image-root")
    p.add_argument("--out-dir", help="directory for per-run training logs")
    sub_map["train"] = p

    p = subs.add_parser("eval", help="score file + manifest labels -> metrics")
    p.add_argument("--scores", required=True, help="JSONL of {id, score}")
    p.add_argument("--manifest", required=True, help="manifest supplying labels")
    p.add_argument("--threshold", type=float, default=0.5)
    sub_map["eval"] = p

    p = subs.add_parser("spectra", help="average spectra of high-pass-filtered images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--group-by", choices=("source", "label", "source-label"),
                   default="source-label")
    p.add_argument("--sigma", type=float, default=3.0)
    sub_map["spectra"] = p

    p = subs.add_parser("serve-review", help="serve the manual-review API and UI")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-root")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--log", default="review-decisions.jsonl", help="decision log path")
    p.add_argument("--static-dir", help="built UI bundle to host at /")
    sub_map["serve-review"] = p

    return parser, sub_map


def cmd_curate(args, parser) -> int:
    if args.prompt_threshold < 0 or args.detect_threshold < 0:
        parser.error("score thresholds must be nonnegative")
    config = curation.StageConfig(
        prompt_threshold=args.prompt_threshold,
        detect_threshold=args.detect_threshold,
        edge_threshold=args.edge_threshold,
        color_threshold=args.color_threshold,
        exclusion_words=tuple(_comma_list(args.exclude)),
        crop_size=args.crop_size,
        min_face_px=args.min_face_px,
        edge_metric=args.edge_metric,
    )
    manifest = datasets.load_manifest(args.manifest)
    stages = _comma_list(args.stages)
    final, report = curation.run_pipeline(
        manifest, config, stages, image_root=args.image_root, out_dir=args.out_dir
    )
    datasets.save_manifest(final, args.out)
    if report.rows:
        print(report.to_table())
    print(f"retained {len(final)} of {len(manifest)} records -> {args.out}")
    if args.report:
        rows = [
            {
                "stage": r.name,
                "input": r.input_count,
                "retained": r.retained_count,
                "dropped": r.dropped_count,
                "missing": r.missing_count,
                **({"notes": r.notes} if r.notes else {}),
            }
            for r in report.rows
        ]
        Path(args.report).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return 0


def _dataset_label(path: str, manifest) -> str:
    # A single-source test set reads better under its source name.
    if len(manifest.sources) == 1:
        return next(iter(manifest.sources))
    return Path(path).stem


def _evaluate_params(spec, params, manifest, image_root, threshold):
    x, y, _ = datasets.training_arrays(manifest, image_root=image_root)
    scores = nn.forward_batch(spec, params, x)[:, 1]
    return metrics.evaluate(metrics.ScoredSet(scores=scores, labels=y), threshold)


def cmd_train(args, parser) -> int:
    strategies = _comma_list(args.strategy)
    for s in strategies:
        if s not in boosting.STRATEGY_KINDS:
            parser.error(f"unknown strategy {s!r}")
    caps = [float(c) for c in _comma_list(args.sweep_C)] if args.sweep_C else [args.cap_C]

    train_manifests = [datasets.load_manifest(p) for p in args.train_manifest]
    merged = datasets.merge_sources(train_manifests, seed=args.seed)
    test_sets = [(p, datasets.load_manifest(p)) for p in args.test_manifest]

    x_probe, _, _ = datasets.training_arrays(merged, image_root=args.image_root)
    spec = nn.ClassifierSpec(
        input_dim=x_probe.shape[1],
        hidden_dims=tuple(int(h) for h in _comma_list(args.hidden_dims)),
        activation=args.activation,
    )

    rows = []
    for strategy in strategies:
        for cap in caps:
            config = boosting.StrategyConfig(
                kind=strategy,
                cap_C=cap,
                momentum_m=args.momentum_m,
                kd_temperature=args.kd_temperature,
                kd_beta=args.kd_beta,
                weight_decay=args.weight_decay,
            )
            log = boosting.train(
                spec, config, merged,
                epochs=args.epochs, batch_size=args.batch_size,
                seed=args.seed, lr=args.lr, image_root=args.image_root,
            )
            if args.out_dir:
                out = Path(args.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                name = f"trainlog-{strategy}" + (f"-C{cap:g}" if args.sweep_C else "")
                (out / f"{name}.jsonl").write_text(log.to_jsonl() + "\n", encoding="utf-8")
            for path, test_manifest in test_sets:
                report = _evaluate_params(
                    spec, log.final_params, test_manifest, args.image_root, args.threshold
                )
                rows.append((strategy, cap, _dataset_label(path, test_manifest), report))

    for strategy, cap, label, report in rows:
        print(
            f"{strategy:<8} C={cap:<6g} {label:<16} "
            f"acc={report.acc:.4f} eer={report.eer:.4f} auc={report.auc:.4f}"
        )
    return 0


def cmd_eval(args, parser) -> int:
    manifest = datasets.load_manifest(args.manifest)
    labels = {r.id: r.label for r in manifest.records}
    scores, y = [], []
    for line_no, line in enumerate(Path(args.scores).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj["id"] not in labels:
            raise ValidationError(f"scores line {line_no}: id {obj['id']!r} not in manifest")
        scores.append(float(obj["score"]))
        y.append(labels[obj["id"]])
    report = metrics.evaluate(metrics.ScoredSet(scores=np.array(scores), labels=np.array(y)),
                              args.threshold)
    print(json.dumps(report.to_record(), sort_keys=True))
    return 0


def cmd_spectra(args, parser) -> int:
    manifest = datasets.load_manifest(args.manifest)
    grouped = spectra.group_spectra(manifest, args.image_root,
                                    group_by=args.group_by, sigma=args.sigma)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .imaging import save_image

    for name, spectrum in grouped.items():
        np.save(out / f"{name}.npy", spectrum.grid)
        save_image(spectra.spectrum_to_image(spectrum), out / f"{name}.png")
        print(f"{name}: {spectrum.size}x{spectrum.size} -> {out / name}.{{npy,png}}")
    return 0


def cmd_serve_review(args, parser) -> int:
    manifest = datasets.load_manifest(args.manifest)
    # Bind before announcing so --port 0 reports the actual port.
    server = review.make_server(manifest, args.log, port=args.port,
                                image_root=args.image_root, static_dir=args.static_dir)
    print(f"serving {len(manifest)} records on http://127.0.0.1:{server.server_port} "
          f"(log: {args.log})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.state.close()
        server.server_close()
    return 0


COMMANDS = {
    "curate": cmd_curate,
    "train": cmd_train,
    "eval": cmd_eval,
    "spectra": cmd_spectra,
    "serve-review": cmd_serve_review,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    boot = argparse.ArgumentParser(add_help=False)
    boot.add_argument("--config")
    known, _ = boot.parse_known_args(argv)

    parser, sub_map = build_parser()
    if known.config:
        try:
            overrides = parse_config(known.config)
        except (OSError, ValidationError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        parser.set_defaults(**overrides)
        for sub in sub_map.values():
            sub.set_defaults(**{k: v for k, v in overrides.items()})

    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, parser)
    except (DomainError, ValidationError, ManifestParseError, NumericError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""``hardgap`` command line.

Every subcommand prints a human-readable report on stdout and, with
``--json PATH``, writes a machine-readable run document holding the full
config snapshot and seed. Exit codes: 0 ok, 2 bad input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .audioprep import DegradeSpec, TrimConfig, degrade_set, read_wav
from .decomposition import (
    CELL_FIELDS,
    GapDecomposition,
    aggregate_trials,
    decompose,
    scatter_csv,
    scatter_table,
)
from .errors import GapError, TrainingDivergence
from .manifest import CLASS_ORDER, Label, Manifest, UtteranceRecord, bind_scores, load_manifest, split, write_manifest, write_score_file
from .metrics import eer
from .report import decomposition_row, dumps, gap_table, pct, run_document
from .synthlab import PRESET_TOLERANCES, PRESETS, DomainSpec, TrainConfig, run_experiment

log = logging.getLogger("hardgap")

DEFAULT_SEED = 0
CELL_NAMES = ("in_in", "outdom_outdom", "in_out")


def _emit(args, results: dict, seed: int | None = None) -> None:
    if not args.json:
        return
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "json", "config", "stamp", "verbose")}
    config = json.loads(json.dumps(config, default=str))
    doc = run_document(args.command, config, seed, results, stamp=args.stamp)
    Path(args.json).write_text(dumps(doc), encoding="utf-8")


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    man = load_manifest(args.manifest)
    scores = bind_scores(man, args.scores, strict=not args.lenient)
    res = eer(scores)
    print(f"EER: {pct(res.eer)}%")
    print(f"threshold: {res.threshold:.6g}")
    print(f"bonafide: {res.n_bonafide}  spoof: {res.n_spoof}")
    if scores.n_extra:
        print(f"ignored score ids not in manifest: {scores.n_extra}")
    _emit(
        args,
        {
            "eer": res.eer,
            "eer_percent": 100.0 * res.eer,
            "threshold": res.threshold,
            "n_bonafide": res.n_bonafide,
            "n_spoof": res.n_spoof,
            "n_extra_scores": scores.n_extra,
        },
    )
    return 0


# ---------------------------------------------------------------- decompose


def _cell_eer(manifest_path, score_path) -> float:
    return eer(bind_scores(load_manifest(manifest_path), score_path)).eer


def _trials_from_dir(root: Path) -> list[GapDecomposition]:
    if not root.is_dir():
        raise GapError(f"{root}: not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not subdirs:
        raise GapError(f"{root}: no trial subdirectories")
    trials = []
    for d in subdirs:
        cells = []
        for name in CELL_NAMES:
            m, s = d / f"{name}.tsv", d / f"{name}.scores"
            if not (m.exists() and s.exists()):
                raise GapError(f"{d}: missing cell {name!r} (need {m.name} and {s.name})")
            cells.append(_cell_eer(m, s))
        trials.append(decompose(*cells))
    return trials


def _trials_from_payload(path: Path) -> list[GapDecomposition]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        rows = doc["results"]["trials"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise GapError(f"{path}: not a run document with results.trials ({exc})") from None
    try:
        return [decompose(*(r[k] for k in CELL_FIELDS)) for r in rows]
    except KeyError as exc:
        raise GapError(f"{path}: trial missing cell {exc}") from None


def cmd_decompose(args) -> int:
    flags = [args.eer_in, args.eer_outdom, args.eer_cross]
    if args.trial_dir:
        trials = _trials_from_dir(Path(args.trial_dir))
        source = "trial-dir"
    elif args.from_payload:
        trials = _trials_from_payload(Path(args.from_payload))
        source = "payload"
    elif any(v is not None for v in flags):
        if any(v is None for v in flags):
            raise GapError("--eer-in, --eer-outdom and --eer-cross must be given together")
        trials = [decompose(*(v / 100.0 for v in flags))]
        source = "values"
    elif args.in_in or args.outdom_outdom or args.in_out:
        pairs = [args.in_in, args.outdom_outdom, args.in_out]
        missing = [n for n, p in zip(("--in-in", "--outdom-outdom", "--in-out"), pairs) if p is None]
        if missing:
            raise GapError("missing cell(s): " + ", ".join(missing))
        trials = [decompose(*(_cell_eer(m, s) for m, s in pairs))]
        source = "scores"
    else:
        raise GapError("no input: give --eer-* values, --in-in/--outdom-outdom/--in-out, --trial-dir or --from-payload")
    agg = aggregate_trials(trials)
    sys.stdout.write(gap_table([(args.label, agg)]))
    _emit(
        args,
        {
            "source": source,
            "trials": [decomposition_row(t) for t in trials],
            "aggregates": {k: v.to_dict() for k, v in agg.items()},
        },
    )
    return 0


# ---------------------------------------------------------------- split


def cmd_split(args) -> int:
    man = load_manifest(args.manifest, args.domain)
    part = split(man, args.ratio, args.seed)
    train = man.subset(part.train_ids)
    test = man.subset(part.test_ids)
    prefix = Path(args.out_prefix)
    files = {"train": f"{prefix}.train.tsv", "test": f"{prefix}.test.tsv"}
    write_manifest(train, files["train"])
    write_manifest(test, files["test"])
    counts = {}
    for side, sub in (("train", train), ("test", test)):
        counts[side] = {c.value: sum(r.label is c for r in sub.records) for c in CLASS_ORDER}
    print("| Side | bonafide | spoof | total | file |")
    print("|---|---|---|---|---|")
    for side in ("train", "test"):
        c = counts[side]
        print(f"| {side} | {c['bonafide']} | {c['spoof']} | {c['bonafide'] + c['spoof']} | {files[side]} |")
    _emit(
        args,
        {
            "counts": counts,
            "files": files,
            "train_ids": sorted(part.train_ids),
            "test_ids": sorted(part.test_ids),
        },
        seed=args.seed,
    )
    return 0


# ---------------------------------------------------------------- degrade


def cmd_degrade(args) -> int:
    man = load_manifest(args.manifest, args.domain)
    spec = DegradeSpec(args.target, args.min, args.seed)
    trim = TrimConfig(args.frame_ms, args.threshold_db)
    out = degrade_set(man, spec, trim, args.out_dir, workers=args.workers)
    rows = []
    print("| id | label | samples | seconds |")
    print("|---|---|---|---|")
    for rec in out.records:
        clip = read_wav(rec.path)
        digest = hashlib.sha256(Path(rec.path).read_bytes()).hexdigest()
        rows.append({"id": rec.id, "label": rec.label.value, "samples": len(clip), "sample_rate": clip.sample_rate, "sha256": digest})
        print(f"| {rec.id} | {rec.label.value} | {len(clip)} | {clip.duration:.4f} |")
    print(f"\nmanifest: {Path(args.out_dir) / 'manifest.tsv'}")
    _emit(args, {"domain_tag": out.domain_tag, "outputs": rows}, seed=args.seed)
    return 0


# ---------------------------------------------------------------- synth


def _load_spec_file(path: Path) -> tuple[DomainSpec, DomainSpec, tuple[float, float]]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        d, dp = DomainSpec.from_dict(doc["D"]), DomainSpec.from_dict(doc["D_prime"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise GapError(f"{path}: bad domain spec file ({exc})") from None
    tol = doc.get("tolerances", {})
    return d, dp, (float(tol.get("hardness", 0.03)), float(tol.get("difference", 0.05)))


def _write_trial_dir(root: Path, data) -> None:
    for i, trial in enumerate(data):
        d = root / f"trial-{i:02d}"
        d.mkdir(parents=True, exist_ok=True)
        for name, scores in zip(CELL_NAMES, (trial.in_in, trial.outdom_outdom, trial.in_out)):
            recs = tuple(
                UtteranceRecord(uid, None, Label.BONAFIDE if b else Label.SPOOF, name)
                for uid, b in zip(scores.ids, scores.is_bonafide)
            )
            write_manifest(Manifest(recs, name), d / f"{name}.tsv")
            write_score_file(scores, d / f"{name}.scores")


def cmd_synth(args) -> int:
    if args.spec_file:
        spec_d, spec_dp, tol = _load_spec_file(Path(args.spec_file))
        label = Path(args.spec_file).stem
    else:
        spec_d, spec_dp = PRESETS[args.preset]
        tol = PRESET_TOLERANCES[args.preset]
        label = args.preset
    cfg = TrainConfig(args.lr, args.max_epochs, args.delta, args.patience, args.batch_size, args.seed)
    result, data = run_experiment(spec_d, spec_dp, args.n, cfg, args.trials, keep_scores=True)
    if args.trial_dir:
        _write_trial_dir(Path(args.trial_dir), data)
    oracle_agg = aggregate_trials([result.oracle])
    checks = result.within(*tol)
    ok = all(checks.values())
    sys.stdout.write(gap_table([(label, result.aggregates), ("oracle", oracle_agg)]))
    print()
    for name, passed in checks.items():
        target = getattr(result.oracle, name)
        t = tol[0] if name == "hardness_gap" else tol[1]
        got = result.aggregates[name].mean
        print(f"{'PASS' if passed else 'FAIL'} {name}: {pct(got)}% vs oracle {pct(target)}% (tol ±{pct(t)})")
    print(f"verdict: {result.verdict()}")
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    _emit(
        args,
        {
            "domains": {"D": spec_d.to_dict(), "D_prime": spec_dp.to_dict()},
            "trials": [decomposition_row(t) for t in result.trials],
            "trial_seeds": list(result.trial_seeds),
            "aggregates": {k: v.to_dict() for k, v in result.aggregates.items()},
            "oracle": decomposition_row(result.oracle),
            "tolerances": {"hardness_gap": tol[0], "difference_gap": tol[1]},
            "checks": checks,
            "verdict": result.verdict(),
            "passed": ok,
            "protocol": result.metadata,
        },
        seed=args.seed,
    )
    return 0


# ---------------------------------------------------------------- scatter


def _cells_from_csv(path: Path) -> list[tuple[str, float, float]]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise GapError(f"{path}: {exc.strerror}") from None
    cells = []
    for lineno, row in enumerate(rows, start=1):
        if not row or row[0].startswith("#") or (lineno == 1 and row[0] == "model"):
            continue
        if len(row) != 3:
            raise GapError(f"{path}:{lineno}: expected model,in_domain_eer,out_of_domain_eer")
        try:
            cells.append((row[0], float(row[1]), float(row[2])))
        except ValueError:
            raise GapError(f"{path}:{lineno}: non-numeric EER") from None
    return cells


def cmd_scatter(args) -> int:
    cells = [(t, float(x), float(y)) for t, x, y in (args.cell or [])]
    if args.cells_file:
        cells += _cells_from_csv(Path(args.cells_file))
    if not cells:
        raise GapError("no cells: give --cell TAG X Y or --cells-file")
    rows = scatter_table(cells)
    text = scatter_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    _emit(
        args,
        {
            "rows": [
                {
                    "model": r.model,
                    "in_domain_eer": r.in_domain_eer,
                    "out_of_domain_eer": r.out_of_domain_eer,
                    "diagonal": r.diagonal,
                    "vertical_gap": r.vertical_gap,
                    "ideal": r.ideal,
                }
                for r in rows
            ]
        },
    )
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hardgap", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", metavar="PATH", help="write the run document here")
        sp.add_argument("--config", metavar="FILE", help="JSON object of option defaults")
        sp.add_argument("--stamp", action="store_true", help="record a UTC timestamp in the run document")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = common(sub.add_parser("eval", help="EER of one score file"))
    sp.add_argument("manifest")
    sp.add_argument("scores")
    sp.add_argument("--lenient", action="store_true", help="drop manifest ids without a score")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("decompose", help="performance = hardness + difference"))
    sp.add_argument("--label", default="run", help="row label (model or run name)")
    sp.add_argument("--eer-in", type=float, metavar="PCT", help="EER(D->D) in percent")
    sp.add_argument("--eer-outdom", type=float, metavar="PCT", help="EER(D'->D') in percent")
    sp.add_argument("--eer-cross", type=float, metavar="PCT", help="EER(D->D') in percent")
    sp.add_argument("--in-in", nargs=2, metavar=("MANIFEST", "SCORES"))
    sp.add_argument("--outdom-outdom", nargs=2, metavar=("MANIFEST", "SCORES"))
    sp.add_argument("--in-out", nargs=2, metavar=("MANIFEST", "SCORES"))
    sp.add_argument("--trial-dir", help="directory of trial-* subdirectories")
    sp.add_argument("--from-payload", metavar="JSON", help="re-decompose the cells of a run document")
    sp.set_defaults(func=cmd_decompose)

    sp = common(sub.add_parser("split", help="stratified train/test split of a manifest"))
    sp.add_argument("manifest")
    sp.add_argument("--ratio", type=float, default=0.8)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out-prefix", required=True)
    sp.add_argument("--domain", help="domain tag (default: manifest file stem)")
    sp.set_defaults(func=cmd_split)

    sp = common(sub.add_parser("degrade", help="trim, truncate and tile every utterance"))
    sp.add_argument("manifest")
    sp.add_argument("--target", type=float, default=0.25, help="seconds kept per utterance")
    sp.add_argument("--min", type=float, default=None, help="tile up to this many seconds")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--frame-ms", type=float, default=25.0)
    sp.add_argument("--threshold-db", type=float, default=-40.0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--domain")
    sp.set_defaults(func=cmd_degrade)

    sp = common(sub.add_parser("synth", help="synthetic two-domain decomposition experiment"))
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--preset", choices=sorted(PRESETS), default="hardness")
    g.add_argument("--spec-file", help="JSON with D, D_prime domain specs")
    sp.add_argument("--n", type=int, default=10_000, help="samples per class per domain")
    sp.add_argument("--trials", type=int, default=5)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--max-epochs", type=int, default=500)
    sp.add_argument("--delta", type=float, default=5e-3, help="early-stop train-EER improvement")
    sp.add_argument("--patience", type=int, default=1)
    sp.add_argument("--batch-size", type=int, default=16)
    sp.add_argument("--trial-dir", help="also write per-trial manifests and scores here")
    sp.set_defaults(func=cmd_synth)

    sp = common(sub.add_parser("scatter", help="in-domain vs out-of-domain EER points"))
    sp.add_argument("--cell", nargs=3, action="append", metavar=("TAG", "X", "Y"), help="EER fractions")
    sp.add_argument("--cells-file", help="CSV: model,in_domain_eer,out_of_domain_eer")
    sp.add_argument("--out", help="also write the CSV here")
    sp.set_defaults(func=cmd_scatter)

    return p


def _prescan(argv: list[str], names) -> tuple[str | None, str | None]:
    """(subcommand, --config value) found in argv without a full parse."""
    command = next((a for a in argv if a in names), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def parse_args(argv=None) -> argparse.Namespace:
    """Parse argv; a ``--config`` JSON object supplies defaults that flags override."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    subparsers = parser._subparsers._group_actions[0].choices
    command, config = _prescan(argv, subparsers)
    if command is not None and config is not None:
        try:
            defaults = json.loads(Path(config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"--config {config}: {exc}")
        if not isinstance(defaults, dict):
            parser.error(f"--config {config}: expected a JSON object")
        sub = subparsers[command]
        actions = {a.dest: a for a in sub._actions}
        unknown = sorted(k for k in defaults if k not in actions or k in ("func", "help", "config"))
        if unknown:
            parser.error(f"--config {config}: unknown option(s) {', '.join(unknown)}")
        for k in defaults:
            actions[k].required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (TrainingDivergence, FloatingPointError, ArithmeticError) as exc:
        print(f"hardgap: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (GapError, OSError) as exc:
        print(f"hardgap: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

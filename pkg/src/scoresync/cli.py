"""Command-line entry point: ``scoresync <subcommand> ...``.

Exit codes: 0 success, 2 input error, 3 internal invariant violation.
Every output file carries the tool version and the full flag set, either
as leading ``#`` comment lines (CSV) or as a ``provenance`` field (JSON).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, InvariantError

log = logging.getLogger("scoresync")

EXPECTED_RATE = 22050
TRAIN_BATCH = {"inflection": 8, "path": 32}


def _provenance(args) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return {"tool": "scoresync", "version": __version__, "command": args.command, "flags": flags}


def _comment(args) -> str:
    prov = _provenance(args)
    return f"scoresync {prov['version']} {prov['command']}\nflags: {json.dumps(prov['flags'], sort_keys=True)}"


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _int_list(text: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --- subcommands -----------------------------------------------------------

def cmd_features(args):
    from .features import chromagram, load_midi, load_wav, midi_to_chroma, save_features_csv

    if args.wav:
        clip = load_wav(args.wav)
        if clip.sample_rate != EXPECTED_RATE:
            log.warning("%s: sample rate %d Hz differs from %d Hz; frame and hop are in samples, no resampling",
                        args.wav, clip.sample_rate, EXPECTED_RATE)
        hop_length = args.hop_length if args.hop is None else max(1, int(round(args.hop * clip.sample_rate)))
        seq = chromagram(clip, args.frame_length, hop_length, args.window)
    else:
        hop = args.hop if args.hop is not None else args.hop_length / EXPECTED_RATE
        seq = midi_to_chroma(load_midi(args.midi), hop)
    save_features_csv(seq, args.out, _comment(args))
    print(f"frames={seq.frames} bins={seq.bins} hop_seconds={seq.hop_seconds!r} origin={seq.origin}")


def cmd_align(args):
    from .dtw import dtw_align, write_alignment_csv
    from .features import cross_similarity, load_features_csv
    from .structure import jump_dtw_align, load_inflections_json

    perf, score = load_features_csv(args.perf), load_features_csv(args.score)
    sim = cross_similarity(perf, score)
    if args.inflection:
        path = jump_dtw_align(sim, load_inflections_json(args.inflection), args.window)
    else:
        path = dtw_align(sim)
    write_alignment_csv(args.out, path, perf.hop_seconds, score.hop_seconds, _comment(args),
                        mark_jumps=bool(args.inflection))
    p, q = sim.shape
    print(f"total_cost={path.total_cost!r} matrix={p}x{q} path_length={len(path)} jumps={len(path.jumps)}")


def cmd_perturb(args):
    from .evaluation import load_ground_truth_csv, save_ground_truth_csv
    from .features import load_features_csv, save_features_csv
    from .structure import MAX_JUMPS, splice_log, synth_perturb

    if not 1 <= args.jumps <= MAX_JUMPS:
        raise InputError(f"--jumps must be between 1 and {MAX_JUMPS}, got {args.jumps}")
    seq = load_features_csv(args.features)
    gt = load_ground_truth_csv(args.gt) if args.gt else None
    res = synth_perturb(seq, gt, args.jumps, args.seed)
    prefix = args.out_prefix
    outputs = {
        "features": f"{prefix}.features.csv",
        "ground_truth": f"{prefix}.gt.csv",
        "inflections": f"{prefix}.inflections.json",
        "splices": f"{prefix}.splices.json",
    }
    comment = _comment(args)
    save_features_csv(res.features, outputs["features"], comment)
    save_ground_truth_csv(res.ground_truth, outputs["ground_truth"], comment)
    _write_json(outputs["inflections"], {**res.inflections.to_json(), "provenance": _provenance(args)})
    _write_json(outputs["splices"], {**splice_log(res, args.jumps, args.seed), "provenance": _provenance(args)})
    for kind, path in outputs.items():
        print(f"{kind}: {path}")


def _eval_piece(alignment_path, gt_path, baseline_path=None):
    from .dtw import read_alignment_csv
    from .evaluation import accuracy_at_margins, alignment_errors, diebold_mariano, load_ground_truth_csv

    path, perf_hop, score_hop = read_alignment_csv(alignment_path)
    gt = load_ground_truth_csv(gt_path)
    errors = alignment_errors(path, gt, perf_hop, score_hop)
    extra = {"signed_errors_s": errors.tolist()}
    if baseline_path:
        base, bp, bs = read_alignment_csv(baseline_path)
        base_err = alignment_errors(base, gt, bp, bs)
        if len(errors) < 8:
            raise InputError(f"significance test needs at least 8 events, {gt_path} has {len(errors)}")
        dm = diebold_mariano(np.abs(errors), np.abs(base_err))
        extra["diebold_mariano"] = {"statistic": dm.statistic, "p_value": dm.p_value, "n": dm.n,
                                    "degenerate": dm.degenerate, "baseline": str(baseline_path)}
    return accuracy_at_margins(errors), errors, extra


def _manifest_jobs(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    jobs = []
    for k, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            job = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{k}: invalid JSON ({exc.msg})") from None
        if not isinstance(job, dict) or "alignment" not in job or "gt" not in job:
            raise InputError(f'{path}:{k}: each job needs "alignment" and "gt"')
        resolve = lambda p: str(path.parent / p) if p and not Path(p).is_absolute() else p
        jobs.append((str(job.get("name", f"piece{len(jobs) + 1}")), resolve(job["alignment"]),
                     resolve(job["gt"]), resolve(job.get("baseline"))))
    if not jobs:
        raise InputError(f"{path}: manifest has no jobs")
    return jobs


def cmd_eval(args):
    from .evaluation import aggregate_reports, write_report_json

    if args.manifest:
        jobs = _manifest_jobs(args.manifest)
    elif args.alignment and args.gt:
        jobs = [(Path(args.alignment).stem, args.alignment, args.gt, args.baseline)]
    else:
        raise InputError("give either --manifest or both --alignment and --gt")
    names = [j[0] for j in jobs]
    if len(set(names)) != len(names):
        raise InputError("duplicate piece names in manifest")
    pieces, details, pooled = {}, {}, []
    for name, alignment, gt, baseline in jobs:
        report, errors, extra = _eval_piece(alignment, gt, baseline)
        pieces[name] = report
        details[name] = extra
        pooled.append(errors)
    aggregate = aggregate_reports(list(pieces.values()), pooled, pool=args.pool)
    meta = {"provenance": _provenance(args), "details": details,
            "averaging": "pooled" if args.pool else "per-piece"}
    write_report_json(args.out, pieces, aggregate, meta)
    cols = " ".join(f"{t}ms={a:.1f}%" for t, a in zip(aggregate.thresholds_ms, aggregate.accuracy_pct))
    print(f"pieces={len(pieces)} events={aggregate.n_events} {cols}")


def cmd_gradcheck(args):
    from .neural.gradcheck import standard_suite

    results = standard_suite(args.seed, include_networks=not args.skip_networks)
    worst, failed = 0.0, []
    for report, tol in results:
        err = report.max_rel_err
        worst = max(worst, err)
        ok = report.passed(tol)
        if not ok:
            failed.append(report.name)
        if args.verbose:
            kinks = f", {report.kinked} kinked entries skipped" if report.kinked else ""
            print(f"{'ok  ' if ok else 'FAIL'} {report.name}: max_rel_err={err:.3e} (tol {tol:g}{kinks})")
    if args.out:
        _write_json(args.out, {"provenance": _provenance(args),
                               "checks": [{"name": r.name, "tolerance": t, "errors": r.errors, "kinked": r.kinked,
                                           "passed": r.passed(t)} for r, t in results]})
    if failed:
        print(f"FAIL max_rel_err={worst:.3e} failed={','.join(failed)}")
        raise InvariantError(f"{len(failed)} gradient check(s) failed")
    print(f"PASS max_rel_err={worst:.3e}")


def cmd_train(args):
    from .neural.data import make_inflection_dataset, make_path_dataset
    from .neural.model import save_model
    from .neural.train import TrainConfig, train_inflection_regressor, train_path_regressor

    cfg = TrainConfig(seed=args.seed, lr=args.lr, momentum=args.momentum, batch_size=args.batch_size or TRAIN_BATCH[args.task],
                      epochs=args.epochs, lam=args.lam, loss=args.loss)
    if args.examples < 100:
        raise InputError("--examples must be at least 100")
    if args.task == "inflection":
        if args.channels:
            cfg.channels = args.channels
        x, y = make_inflection_dataset(args.examples, args.seed)
        result = train_inflection_regressor(x, y, cfg, dilations=args.dilations)
    else:
        x, y = make_path_dataset(args.examples, args.seed)
        result = train_path_regressor(x, y, cfg, attention=not args.no_attention)
    if args.out_prefix:
        save_model(result.model, args.out_prefix)
        _write_json(f"{args.out_prefix}.history.json", {
            "provenance": _provenance(args), "initial_loss": result.initial_loss,
            "epoch_losses": result.epoch_losses, "val_error": result.val_error})
    print(f"task={args.task} initial_loss={result.initial_loss:.10g} final_loss={result.final_loss:.10g} "
          f"val_error={result.val_error:.6g}")


def _load_cost_csv(path):
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        rows = [[float(v) for v in ln.split(",")] for ln in lines]
    except ValueError:
        raise InputError(f"{path}: non-numeric cell") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: empty or ragged cost matrix")
    from .features import CrossSimilarityMatrix
    return CrossSimilarityMatrix(np.array(rows)).cost


def cmd_plot(args):
    from .dtw import read_alignment_csv
    from .evaluation import load_ground_truth_csv
    from .features import cross_similarity, load_features_csv
    from .plot import render, write_ppm

    if args.cost:
        cost = _load_cost_csv(args.cost)
    elif args.perf and args.score:
        cost = cross_similarity(load_features_csv(args.perf), load_features_csv(args.score)).cost
    else:
        raise InputError("give either --cost or both --perf and --score")
    path, perf_hop, score_hop = read_alignment_csv(args.alignment)
    gt_cells = None
    if args.gt:
        rows, cols = load_ground_truth_csv(args.gt).score_frames(perf_hop, score_hop)
        gt_cells = np.stack([rows, cols], axis=1)
    img = render(cost, path.points, gt_cells)
    write_ppm(args.out, img)
    print(f"image={img.shape[1]}x{img.shape[0]} matrix={cost.shape[0]}x{cost.shape[1]}")


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoresync", description="Performance-score synchronisation toolkit.")
    parser.add_argument("--version", action="version", version=f"scoresync {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="chroma features from WAV audio or a MIDI score")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav")
    src.add_argument("--midi")
    p.add_argument("--hop", type=float, help="hop in seconds (default: hop-length / 22050 for MIDI)")
    p.add_argument("--hop-length", type=int, default=512, help="hop in samples for audio")
    p.add_argument("--frame-length", type=int, default=2048)
    p.add_argument("--window", default="hann")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("align", help="classic or structure-aware DTW between two feature CSVs")
    p.add_argument("--perf", required=True)
    p.add_argument("--score", required=True)
    p.add_argument("--inflection", help="inflection-point JSON; enables jump DTW")
    p.add_argument("--window", type=int, default=5, help="jump window half-width in frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("perturb", help="split-join a feature sequence to create structural jumps")
    p.add_argument("--features", required=True)
    p.add_argument("--gt", help="ground-truth CSV aligning the features to the score (identity if omitted)")
    p.add_argument("--jumps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("eval", help="accuracy at 25/50/100/200 ms against ground truth")
    p.add_argument("--alignment")
    p.add_argument("--gt")
    p.add_argument("--baseline", help="second alignment CSV for a Diebold-Mariano comparison")
    p.add_argument("--manifest", help="newline-delimited JSON jobs: {name, alignment, gt[, baseline]}")
    p.add_argument("--pool", action="store_true", help="pool events across pieces instead of averaging")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-networks", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train a toy regressor on synthetic data")
    p.add_argument("--task", required=True, choices=["inflection", "path"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--examples", type=int, default=500)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=None, help="default: 8 (inflection), 32 (path)")
    p.add_argument("--dilations", type=_int_list, default=(1, 2, 3))
    p.add_argument("--channels", type=_int_list)
    p.add_argument("--no-attention", action="store_true", help="path task: conv layers instead of SASA")
    p.add_argument("--loss", choices=["divergence", "mse"], default="divergence")
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plot", help="PPM image of the cost matrix with path and ground truth")
    p.add_argument("--cost", help="plain CSV cost matrix")
    p.add_argument("--perf")
    p.add_argument("--score")
    p.add_argument("--alignment", required=True)
    p.add_argument("--gt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``corpus-forge`` command line.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal error.
Every subcommand accepts ``--config file.json``; explicit flags override it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .audio import AudioFormatError
from .augment import AugmentConfig, PlanError, apply_plan, make_plan, read_plan, write_plan
from .diphone_stats import DiphoneDistribution, SupportError, distribution_report
from .manifest import Manifest, ManifestError, embedding_matrix, read_embeddings, read_manifest, write_manifest
from .phonemize import Lexicon, phonemize_sentence, read_lexicon
from .score import read_trn, score_report
from .sentence_select import Candidate, SentenceSelector
from .speaker_select import CRITERIA, nearest_neighbor_report, select_speakers

logger = logging.getLogger("corpus_forge")

LOG_ENV = "CORPUS_FORGE_LOG"
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


DATA_ERRORS = (
    DataError,
    ManifestError,
    SupportError,
    PlanError,
    AudioFormatError,
    FileNotFoundError,
    IsADirectoryError,
    UnicodeDecodeError,
    ValueError,
    json.JSONDecodeError,
)


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    workers: int = 1
    smoothing_alpha: float = 0.0
    word_boundary_marker: bool = False
    log_format: str = "text"

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        workers = getattr(args, "workers", 1)
        if workers == "auto":
            workers = os.cpu_count() or 1
        try:
            workers = int(workers)
        except (TypeError, ValueError):
            raise UsageError(f"--workers must be a positive integer or 'auto', got {workers!r}") from None
        if workers < 1:
            raise UsageError("--workers must be >= 1")
        seed = getattr(args, "seed", DEFAULT_SEED)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise UsageError(f"--seed must be an integer in [0, 2**64), got {seed!r}")
        alpha = getattr(args, "smoothing_alpha", 0.0)
        if alpha < 0:
            raise UsageError("--smoothing-alpha must be >= 0")
        return cls(seed, workers, alpha, bool(getattr(args, "word_boundary_marker", False)), args.log_format)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname, "logger": record.name, "message": record.getMessage()})


def _setup_logging(fmt: str) -> None:
    level = os.environ.get(LOG_ENV, "INFO").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if fmt == "json" else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(getattr(logging, level, logging.INFO))
    logger.propagate = False


def _seed_note(seed: int) -> None:
    print(f"seed={seed}", file=sys.stderr)


def _workers(value: str):
    return value if value == "auto" else int(value)


def _add_common(p: argparse.ArgumentParser, seed=False, workers=False, phon=False) -> None:
    p.add_argument("--config", help="JSON file of option defaults; explicit flags win")
    p.add_argument("--log-format", choices=("text", "json"), default="text")
    if seed:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    if workers:
        p.add_argument("--workers", type=_workers, default=1, help="worker count or 'auto'")
    if phon:
        p.add_argument("--lexicon", help="pronunciation lexicon (WORD PH1 PH2 ...)")
        p.add_argument("--word-boundary-marker", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="corpus-forge", description="Speech corpus curation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("validate", help="check a manifest and/or embedding table")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--embeddings")

    p = sub.add_parser("phonemize", help="phoneme sequences for a manifest's texts")
    _add_common(p, phon=True)
    p.add_argument("--manifest")
    p.add_argument("--output", help="JSON Lines output (stdout if omitted)")

    p = sub.add_parser("stats", help="di-phoneme distribution report")
    _add_common(p, phon=True)
    p.add_argument("--manifest", action="append")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--output")

    p = sub.add_parser("select-sentences", help="KL-driven sentence selection")
    _add_common(p, seed=True, workers=True, phon=True)
    p.add_argument("--real", help="manifest of real utterances (Y)")
    p.add_argument("--pool", help="manifest of candidate sentences (Z)")
    p.add_argument("--target", choices=("natural", "uniform", "random"), default="natural")
    p.add_argument("--budget-hours", type=float)
    p.add_argument("--smoothing-alpha", type=float, default=0.0)
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--output")
    p.add_argument("--trajectory", help="CSV with columns step, utt_id, t_c_s, kl; t_c_s counts selected audio only")

    p = sub.add_parser("select-speakers", help="embedding-distance speaker selection")
    _add_common(p, seed=True, workers=True)
    p.add_argument("--seen")
    p.add_argument("--unseen")
    p.add_argument("--count", type=int)
    p.add_argument("--criterion", choices=CRITERIA, default="maxmin")
    p.add_argument("--output", help="selected speaker ids, one per line")
    p.add_argument("--report", help="JSON nearest-real-neighbor statistics")

    p = sub.add_parser("plan", help="seeded augmentation plan")
    _add_common(p, seed=True)
    p.add_argument("--manifest")
    p.add_argument("--output")
    p.add_argument("--p-noise", type=float, default=0.0)
    p.add_argument("--p-reverb", type=float, default=0.0)
    p.add_argument("--snr-db-range", type=float, nargs=2, default=[0.0, 15.0], metavar=("LOW", "HIGH"))
    p.add_argument("--p-stretch", type=float, default=0.0)
    p.add_argument("--stretch-range", type=float, nargs=2, default=[0.9, 1.1], metavar=("LOW", "HIGH"))
    p.add_argument("--p-pitch", type=float, default=0.0)
    p.add_argument("--pitch-range", type=float, nargs=2, default=[-2.0, 2.0], metavar=("LOW", "HIGH"))
    p.add_argument("--reassign-duration-speaker", action="store_true", default=False)
    p.add_argument("--reassign-pitch-speaker", action="store_true", default=False)
    p.add_argument("--noise-pool", nargs="*", default=[])
    p.add_argument("--rir-pool", nargs="*", default=[])
    p.add_argument("--speaker-pool", nargs="*", default=[], help="defaults to the manifest's speakers")
    p.add_argument("--realizations", type=int, default=1)

    p = sub.add_parser("apply", help="render a plan's noise and reverb")
    _add_common(p, workers=True)
    p.add_argument("--manifest")
    p.add_argument("--plan")
    p.add_argument("--out-dir")
    p.add_argument("--output", help="output manifest (default OUT_DIR/manifest.jsonl)")

    p = sub.add_parser("score", help="WER/CER and the matched-pairs segment test")
    _add_common(p)
    p.add_argument("--ref")
    p.add_argument("--hyp", action="append", help="hypothesis trn; give twice to compare systems")
    p.add_argument("--output")
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise DataError("config file must hold a JSON object")
        sub = _subparser(parser, args.command)
        dests = {a.dest for a in sub._actions}
        defaults = {}
        for key, value in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in dests or dest in ("help", "config"):
                raise UsageError(f"unknown option {key!r} in config for {args.command}")
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = ["--" + n.replace("_", "-") for n in names if getattr(args, n, None) in (None, [])]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s) {', '.join(missing)}")


def _emit(obj, path: str | None) -> None:
    text = json.dumps(obj, ensure_ascii=False, indent=2, allow_nan=False) + "\n"
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _lexicon(args) -> Lexicon:
    return read_lexicon(args.lexicon) if args.lexicon else Lexicon()


def cmd_validate(args, run: RunConfig) -> int:
    if not args.manifest and not args.embeddings:
        raise UsageError("validate: give --manifest and/or --embeddings")
    out = {}
    if args.manifest:
        m = read_manifest(args.manifest)
        out["manifest"] = {
            "n_records": len(m),
            "total_duration_s": m.total_duration_s,
            "n_speakers": len({r.speaker_id for r in m}),
            "origins": dict(sorted(Counter(r.origin for r in m).items())),
        }
    if args.embeddings:
        table = read_embeddings(args.embeddings)
        out["embeddings"] = {"n_speakers": len(table), "dim": table[0].dim if table else 0}
    _emit(out, None)
    return 0


def cmd_phonemize(args, run: RunConfig) -> int:
    _require(args, "manifest")
    m = read_manifest(args.manifest)
    lex = _lexicon(args)
    lines = [
        json.dumps({"utt_id": r.utt_id, "phonemes": phonemize_sentence(r.text, lex, run.word_boundary_marker)}, ensure_ascii=False)
        for r in m
    ]
    text = "".join(line + "\n" for line in lines)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args, run: RunConfig) -> int:
    _require(args, "manifest")
    lex = _lexicon(args)
    seqs = [phonemize_sentence(r.text, lex, run.word_boundary_marker) for path in args.manifest for r in read_manifest(path)]
    _emit(distribution_report(DiphoneDistribution.from_sentences(seqs), args.top_k), args.output)
    return 0


def cmd_select_sentences(args, run: RunConfig) -> int:
    _require(args, "pool", "budget_hours", "output")
    if args.budget_hours < 0:
        raise UsageError("--budget-hours must be >= 0")
    _seed_note(run.seed)
    lex = _lexicon(args)
    pool = read_manifest(args.pool)
    real = read_manifest(args.real) if args.real else Manifest()
    overlap = {r.utt_id for r in real} & {r.utt_id for r in pool}
    if overlap:
        raise DataError(f"real and pool manifests share utt_ids, e.g. {sorted(overlap)[0]!r}")
    real_seqs = [phonemize_sentence(r.text, lex, run.word_boundary_marker) for r in real]
    candidates = [
        Candidate.from_sequence(r.utt_id, phonemize_sentence(r.text, lex, run.word_boundary_marker), r.duration_s)
        for r in pool
    ]
    started = time.perf_counter()
    selector = SentenceSelector(
        target=args.target,
        budget_s=args.budget_hours * 3600.0,
        seed=run.seed,
        smoothing_alpha=run.smoothing_alpha,
        n_workers=run.workers,
        beam_width=args.beam_width,
    ).fit(candidates, real=real_seqs)
    logger.info("selected %d sentences in %.2fs", len(selector.selected_ids_), time.perf_counter() - started)
    if selector.exhausted_:
        logger.warning("candidate pool exhausted before the budget was met")
    write_manifest(pool.subset(selector.selected_ids_), args.output)
    if args.trajectory:
        path = Path(args.trajectory)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "utt_id", "t_c_s", "kl"])
            for step, (t_c, kl_val) in enumerate(selector.trajectory_):
                w.writerow([step, "" if step == 0 else selector.selected_ids_[step - 1], repr(t_c), repr(kl_val)])
    final = selector.kl_
    _emit(
        {
            "n_selected": len(selector.selected_ids_),
            "selected_duration_s": selector.trajectory_[-1][0],
            "final_kl": final if final == final else None,
            "exhausted": selector.exhausted_,
            "target": args.target,
            "seed": run.seed,
        },
        None,
    )
    return 0


def cmd_select_speakers(args, run: RunConfig) -> int:
    _require(args, "unseen", "count", "output")
    _seed_note(run.seed)
    seen = read_embeddings(args.seen) if args.seen else []
    unseen = read_embeddings(args.unseen)
    overlap = {r.speaker_id for r in seen} & {r.speaker_id for r in unseen}
    if overlap:
        raise DataError(f"seen and unseen tables share speaker ids, e.g. {sorted(overlap)[0]!r}")
    seen_ids, S = embedding_matrix(seen)
    unseen_ids, U = embedding_matrix(unseen)
    if args.criterion != "random" and not seen:
        raise DataError(f"{args.criterion} needs a non-empty --seen table")
    picked = select_speakers(S, U, args.count, args.criterion, run.seed, unseen_ids)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(s + "\n" for s in picked), encoding="utf-8")
    if args.report:
        if not seen or not picked:
            raise DataError("--report needs non-empty seen and selected sets")
        pos = {s: i for i, s in enumerate(unseen_ids)}
        rep = nearest_neighbor_report(S, U[[pos[s] for s in picked]], picked)
        _emit({"criterion": args.criterion, **rep.to_json()}, args.report)
    _emit({"n_selected": len(picked), "criterion": args.criterion, "seed": run.seed}, None)
    return 0


def cmd_plan(args, run: RunConfig) -> int:
    _require(args, "manifest", "output")
    _seed_note(run.seed)
    m = read_manifest(args.manifest)
    cfg = AugmentConfig(
        p_noise=args.p_noise,
        p_reverb=args.p_reverb,
        snr_db_range=tuple(args.snr_db_range),
        p_stretch=args.p_stretch,
        stretch_range=tuple(args.stretch_range),
        p_pitch=args.p_pitch,
        pitch_range=tuple(args.pitch_range),
        reassign_duration_speaker=args.reassign_duration_speaker,
        reassign_pitch_speaker=args.reassign_pitch_speaker,
        seed=run.seed,
        noise_pool=list(args.noise_pool),
        rir_pool=list(args.rir_pool),
        speaker_pool=list(args.speaker_pool) or sorted({r.speaker_id for r in m}),
        realizations=args.realizations,
    ).validate()
    plan = make_plan(m, cfg)
    write_plan(plan, args.output, cfg)
    _emit(
        {
            "n_entries": len(plan),
            "noise": sum(e.noise is not None for e in plan),
            "reverb": sum(e.reverb is not None for e in plan),
            "stretch": sum(e.stretch_rate is not None for e in plan),
            "pitch": sum(e.pitch_semitones is not None for e in plan),
            "seed": run.seed,
        },
        None,
    )
    return 0


def cmd_apply(args, run: RunConfig) -> int:
    _require(args, "manifest", "plan", "out_dir")
    m = read_manifest(args.manifest)
    _, plan = read_plan(args.plan)
    out = apply_plan(m, plan, args.out_dir, Path(args.manifest).parent, run.workers)
    output = Path(args.output) if args.output else Path(args.out_dir) / "manifest.jsonl"
    if output.resolve().parent != Path(args.out_dir).resolve():
        # audio paths are relative to the out dir; re-anchor them for another location
        rel = os.path.relpath(Path(args.out_dir).resolve(), output.resolve().parent)
        out = Manifest([
            type(r)(r.utt_id, r.text, r.speaker_id, r.duration_s, str(Path(rel) / r.audio_path), r.origin, r.meta)
            for r in out
        ])
    write_manifest(out, output)
    clipped = sum(r.meta.get("clipped_samples", 0) for r in out)
    if clipped:
        logger.warning("%d samples clipped while writing 16-bit PCM", clipped)
    _emit({"n_written": len(out), "clipped_samples": clipped}, None)
    return 0


def cmd_score(args, run: RunConfig) -> int:
    _require(args, "ref", "hyp")
    if len(args.hyp) > 2:
        raise UsageError("score: at most two --hyp files")
    refs = read_trn(args.ref)
    hyps = [read_trn(h) for h in args.hyp]
    report = score_report(refs, *hyps)
    report["hyp_files"] = list(args.hyp)
    _emit(report, args.output)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "phonemize": cmd_phonemize,
    "stats": cmd_stats,
    "select-sentences": cmd_select_sentences,
    "select-speakers": cmd_select_speakers,
    "plan": cmd_plan,
    "apply": cmd_apply,
    "score": cmd_score,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        print(build_parser().format_help(), file=sys.stderr)
        return 1
    try:
        args = parse_args(argv)
        _setup_logging(args.log_format)
        run_cfg = RunConfig.from_args(args)
        return COMMANDS[args.command](args, run_cfg)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    except DATA_ERRORS as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", 3)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line pipeline: align, score, train, calibrate, evaluate.

Exit codes: 0 success, 1 usage error, 2 bad data or file format,
3 numeric failure. Every failure prints a single diagnostic line to
stderr. All commands are deterministic given their --seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .align import AlignConfig, align as force_align
from .balance import BalanceRecord, fit_balance_table
from .detector import (
    VARIANTS,
    DetectorConfig,
    calibrate_thresholds,
    detect,
    score_utterance,
)
from .duration.net import desk_config, full_config, predict_durations, tiny_config
from .duration.training import train
from .formats import (
    ScoreFile,
    ScoreRow,
    read_annotations,
    read_balance_table,
    read_checkpoint,
    read_ctm,
    read_lexicon,
    read_phone_set,
    read_posteriorgram,
    read_score_file,
    read_thresholds,
    text_to_phones,
    write_balance_table,
    write_checkpoint,
    write_ctm,
    write_score_file,
    write_thresholds,
    write_training_log,
)
from .metrics import confusion_counts, pearson, spearman
from .model import CagopError, DataError, NumericError, validate_posteriorgram
from .scoring import entropy_profile
from .synth import SynthConfig, generate_corpus, read_text_manifest, write_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_CONFIGS = {"desk": desk_config, "full": full_config, "tiny": tiny_config}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; remap to the documented 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _posteriorgram_for(utt_id: str, posteriors: str, single_ok: bool):
    path = Path(posteriors)
    if path.is_dir():
        candidate = path / f"{utt_id}.pgm"
        if not candidate.exists():
            candidate = path / f"{utt_id}.pgt"
        if not candidate.exists():
            raise DataError(f"no posteriorgram for {utt_id!r} under {path}")
        return read_posteriorgram(candidate)
    if not single_ok:
        raise DataError(
            f"--posteriors {posteriors} is a single file but the input names "
            "several utterances"
        )
    return read_posteriorgram(path)


def _cmd_synth_corpus(args) -> int:
    cfg = SynthConfig(num_utterances=args.utterances, seed=args.seed)
    write_corpus(args.out, generate_corpus(cfg))
    print(f"wrote {args.utterances} utterances to {args.out}")
    return EXIT_OK


def _cmd_align(args) -> int:
    phone_set = read_phone_set(args.phones)
    lexicon = read_lexicon(args.lexicon, phone_set)
    manifest = read_text_manifest(args.text)
    cfg = AlignConfig(
        allow_optional_silence=not args.no_silence,
        min_segment_frames=args.min_frames,
        silence_self_loop_penalty=args.silence_penalty,
        silence_index=phone_set.silence_index,
    )
    entries = []
    for utt_id, text in manifest:
        pg = _posteriorgram_for(utt_id, args.posteriors, len(manifest) == 1)
        pg = validate_posteriorgram(pg, phone_set)
        phones = text_to_phones(text, lexicon, phone_set)
        entries.append((utt_id, force_align(pg, phones, cfg)))
    write_ctm(args.out, entries, phone_set)
    print(f"aligned {len(entries)} utterances -> {args.out}")
    return EXIT_OK


def _duration_predictor(checkpoint_path):
    params, net_cfg = read_checkpoint(checkpoint_path)

    def predict(phones, speed):
        return predict_durations(params, net_cfg, phones, speed)

    return predict


def _cmd_score(args) -> int:
    phone_set = read_phone_set(args.phones)
    entries = read_ctm(args.ctm, phone_set)
    cfg = DetectorConfig(
        beta=args.beta, variant=args.variant,
        clamp_delta_at_zero=args.clamp_delta,
    )
    balance = None
    predict = None
    if cfg.needs_durations:
        if args.balance is None or args.checkpoint is None:
            raise UsageError(
                f"variant {args.variant} with beta={args.beta} needs "
                "--balance and --checkpoint"
            )
        balance = read_balance_table(args.balance, phone_set)
        predict = _duration_predictor(args.checkpoint)
    thresholds = (
        read_thresholds(args.thresholds, phone_set)
        if args.thresholds is not None else None
    )

    rows: list[ScoreRow] = []
    sentences: list[tuple[str, float]] = []
    for utt_id, alignment in entries:
        pg = _posteriorgram_for(utt_id, args.posteriors, len(entries) == 1)
        pg = validate_posteriorgram(pg, phone_set)
        predicted = None
        if predict is not None:
            segments = alignment.non_silence(phone_set)
            speed = float(np.mean([s.length for s in segments]))
            predicted = predict([s.phone for s in segments], speed)
        report = score_utterance(
            pg, alignment, phone_set, cfg,
            predicted_durations=predicted, balance=balance, utterance_id=utt_id,
        )
        if thresholds is not None:
            report = detect(report, thresholds)
        for pos, record in enumerate(report.per_phone):
            rows.append(ScoreRow(
                utt_id=utt_id,
                position=pos,
                phone=record.phone,
                start=record.segment.start,
                length=record.segment.length,
                score=record.score,
                flag=(record.detected_mispronounced
                      if thresholds is not None else None),
            ))
        sentences.append((utt_id, report.sentence_score))
    write_score_file(
        args.out,
        ScoreFile(variant=args.variant, rows=tuple(rows),
                  sentences=tuple(sentences)),
        phone_set,
    )
    print(f"scored {len(entries)} utterances -> {args.out}")
    return EXIT_OK


def _samples_from_ctm(entries, phone_set):
    from .duration.net import DurationSample

    samples = []
    for _, alignment in entries:
        segments = alignment.non_silence(phone_set)
        if not segments:
            continue
        samples.append(DurationSample.from_durations(
            [s.phone for s in segments],
            [float(s.length) for s in segments],
        ))
    if not samples:
        raise DataError("alignment file has no non-silence phones")
    return samples


def _cmd_train_dur(args) -> int:
    phone_set = read_phone_set(args.phones)
    entries = read_ctm(args.ctm, phone_set)
    samples = _samples_from_ctm(entries, phone_set)
    net_cfg = _CONFIGS[args.config](seed=args.seed)
    if len(samples) < 2:
        raise DataError("need at least 2 sequences to split train/validation")
    splitter = np.random.default_rng(args.seed)
    order = splitter.permutation(len(samples))
    n_val = max(1, int(round(len(samples) * args.val_fraction)))
    val = [samples[i] for i in order[:n_val]]
    tr = [samples[i] for i in order[n_val:]]
    params, log = train(
        tr, net_cfg, val, num_phones=len(phone_set), epochs=args.epochs,
    )
    write_checkpoint(args.out, params, net_cfg)
    if args.log is not None:
        write_training_log(args.log, log)
    best = min(e.val_mae for e in log)
    print(
        f"trained {args.epochs} epochs on {len(tr)} sequences, "
        f"best val MAE {best:.4f} frames -> {args.out}"
    )
    return EXIT_OK


def _cmd_predict_dur(args) -> int:
    phone_set = read_phone_set(args.phones)
    entries = read_ctm(args.ctm, phone_set)
    predict = _duration_predictor(args.checkpoint)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("utt\tpos\tphone\taligned\tpredicted\n")
        for utt_id, alignment in entries:
            segments = alignment.non_silence(phone_set)
            if not segments:
                continue
            speed = float(np.mean([s.length for s in segments]))
            preds = predict([s.phone for s in segments], speed)
            for pos, (seg, pred) in enumerate(zip(segments, preds)):
                fh.write(
                    f"{utt_id}\t{pos}\t{phone_set.label(seg.phone)}"
                    f"\t{seg.length}\t{repr(float(pred))}\n"
                )
    print(f"wrote duration predictions -> {args.out}")
    return EXIT_OK


def _cmd_fit_balance(args) -> int:
    phone_set = read_phone_set(args.phones)
    entries = read_ctm(args.ctm, phone_set)
    predict = _duration_predictor(args.checkpoint)
    records = []
    for _, alignment in entries:
        segments = alignment.non_silence(phone_set)
        if not segments:
            continue
        speed = float(np.mean([s.length for s in segments]))
        preds = predict([s.phone for s in segments], speed)
        records.append(BalanceRecord(
            phones=tuple(s.phone for s in segments),
            aligned=tuple(float(s.length) for s in segments),
            predicted=tuple(float(p) for p in preds),
            speed=speed,
        ))
    table = fit_balance_table(
        records, bucket_width=args.bucket_width, min_count=args.min_count
    )
    write_balance_table(args.out, table, phone_set)
    print(
        f"fitted {len(table.entries)} cells from {len(records)} utterances "
        f"-> {args.out}"
    )
    return EXIT_OK


def _join_labels(score_file, annotations):
    labels = annotations.phone_label_map()
    phones, scores, truth = [], [], []
    for row in score_file.rows:
        key = (row.utt_id, row.position)
        if key in labels:
            phones.append(row.phone)
            scores.append(row.score)
            truth.append(labels[key])
    if not phones:
        raise DataError("no scored phones have annotation labels")
    return phones, scores, truth


def _cmd_calibrate(args) -> int:
    phone_set = read_phone_set(args.phones)
    score_file = read_score_file(args.scores, phone_set)
    annotations = read_annotations(args.annotations)
    phones, scores, truth = _join_labels(score_file, annotations)
    table = calibrate_thresholds(phones, scores, truth,
                                 min_count=args.min_count)
    write_thresholds(args.out, table, phone_set)
    print(
        f"calibrated {len(table.per_phone)} phone thresholds "
        f"(+ global) on {len(scores)} labeled phones -> {args.out}"
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    phone_set = read_phone_set(args.phones)
    score_file = read_score_file(args.scores, phone_set)
    annotations = read_annotations(args.annotations)
    phones, scores, truth = _join_labels(score_file, annotations)

    if args.thresholds is not None:
        table = read_thresholds(args.thresholds, phone_set)
        labels = annotations.phone_label_map()
        flags = []
        truth = []
        for row in score_file.rows:
            key = (row.utt_id, row.position)
            if key not in labels:
                continue
            threshold = table.per_phone.get(row.phone, table.global_threshold)
            flags.append(row.score < threshold)
            truth.append(labels[key])
    else:
        flagged_rows = [r for r in score_file.rows if r.flag is not None]
        if not flagged_rows:
            raise UsageError(
                "score file has no detection flags; pass --thresholds"
            )
        labels = annotations.phone_label_map()
        flags, truth = [], []
        for row in flagged_rows:
            key = (row.utt_id, row.position)
            if key in labels:
                flags.append(row.flag)
                truth.append(labels[key])
        if not flags:
            raise DataError("no flagged phones have annotation labels")

    counts = confusion_counts(flags, truth)
    lines = [
        ("detection_accuracy", counts.accuracy),
        ("detection_f1", counts.f1),
        ("tp", counts.tp), ("fp", counts.fp),
        ("fn", counts.fn), ("tn", counts.tn),
    ]

    system = dict(score_file.sentences)
    raters = annotations.rater_scores()
    if system and raters:
        per_rater_p, per_rater_s = [], []
        for scores_by_utt in raters.values():
            common = sorted(set(system) & set(scores_by_utt))
            if len(common) < 2:
                continue
            sys_scores = [system[u] for u in common]
            rater_scores = [scores_by_utt[u] for u in common]
            if len(set(sys_scores)) < 2 or len(set(rater_scores)) < 2:
                continue
            per_rater_p.append(pearson(sys_scores, rater_scores))
            per_rater_s.append(spearman(sys_scores, rater_scores))
        if per_rater_p:
            lines.append(("sentence_pearson", float(np.mean(per_rater_p))))
            lines.append(("sentence_spearman", float(np.mean(per_rater_s))))

    with open(args.out, "w", encoding="utf-8") as fh:
        for name, value in lines:
            fh.write(f"{name}\t{repr(float(value))}\n")
    summary = " ".join(f"{n}={float(v):.4f}" for n, v in lines[:2])
    print(f"{summary} -> {args.out}")
    return EXIT_OK


def _cmd_entropy_dump(args) -> int:
    pg = read_posteriorgram(args.posteriors)
    entropies = entropy_profile(pg)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("frame,entropy\n")
        for i, value in enumerate(entropies):
            fh.write(f"{i},{repr(float(value))}\n")
    print(f"wrote {entropies.size} frame entropies -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cagop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", parents=[], help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterances", type=int, default=200)
    p.set_defaults(fn=_cmd_synth_corpus)

    p = sub.add_parser("align", help="forced-align posteriors to reference text")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-frames", type=int, default=1)
    p.add_argument("--no-silence", action="store_true",
                   help="disallow optional silences between phones")
    p.add_argument("--silence-penalty", type=float, default=0.0)
    p.set_defaults(fn=_cmd_align)

    p = sub.add_parser("score", help="score aligned phones under a variant")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--ctm", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--variant", choices=VARIANTS, default="cagop")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--clamp-delta", action="store_true")
    p.add_argument("--balance")
    p.add_argument("--checkpoint")
    p.add_argument("--thresholds")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("train-dur", help="train the duration predictor")
    p.add_argument("--ctm", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--config", choices=sorted(_CONFIGS), default="desk")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--log")
    p.set_defaults(fn=_cmd_train_dur)

    p = sub.add_parser("predict-dur", help="dump duration predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ctm", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_predict_dur)

    p = sub.add_parser("fit-balance", help="fit duration tolerances")
    p.add_argument("--ctm", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bucket-width", type=float, default=1.0)
    p.add_argument("--min-count", type=int, default=5)
    p.set_defaults(fn=_cmd_fit_balance)

    p = sub.add_parser("calibrate", help="fit detection thresholds")
    p.add_argument("--scores", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=10)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="detection and correlation metrics")
    p.add_argument("--scores", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--phones", required=True)
    p.add_argument("--thresholds")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("entropy-dump", help="per-frame entropy CSV")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_entropy_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CagopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())

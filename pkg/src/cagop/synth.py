"""Seeded synthetic corpus for desk-scale pipeline runs.

Real mispronunciation corpora are licensed, so experiments and tests run on
generated data with the statistics the scorers care about: per-frame phone
posteriors with uncertain (high-entropy) frames inside otherwise-correct
segments, phone substitutions toward fixed confusion partners, duration
distortions, and speed variation across utterances. Everything derives
from one integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .duration.net import DurationSample
from .formats import (
    AnnotationSet,
    PhoneAnnotation,
    SentenceRating,
    write_annotations,
    write_ctm,
    write_lexicon,
    write_phone_set,
    write_posteriorgram_binary,
)
from .model import (
    Alignment,
    DataError,
    PhoneSegment,
    PhoneSet,
    Posteriorgram,
)

SILENCE_LABEL = "SIL"
PHONE_LABELS = (
    SILENCE_LABEL,
    "AA", "AE", "AH", "B", "D", "EH", "IY", "K", "M", "N", "S", "T",
)
# Substitution partner for each real phone; roughly "adjacent" sounds.
CONFUSIONS = {
    "AA": "AE", "AE": "AA", "AH": "EH", "B": "D", "D": "T", "EH": "AH",
    "IY": "EH", "K": "T", "M": "N", "N": "M", "S": "T", "T": "D",
}
# Typical duration in frames at tempo 1.0; vowels run longer.
MEAN_FRAMES = {
    "AA": 9.0, "AE": 8.5, "AH": 6.5, "B": 4.0, "D": 4.0, "EH": 7.5,
    "IY": 8.0, "K": 4.5, "M": 5.5, "N": 5.0, "S": 6.0, "T": 4.0,
}
STOPS = frozenset(("B", "D", "K", "T"))
VOWELS = frozenset(("AA", "AE", "AH", "EH", "IY"))
WORDS = {
    "BADGE": ("B", "AE", "D"),
    "DEED": ("D", "IY", "D"),
    "HUT": ("AH", "T"),
    "KEEN": ("K", "IY", "N"),
    "MASS": ("M", "AE", "S"),
    "MEADOW": ("M", "EH", "D", "AH"),
    "NEAT": ("N", "IY", "T"),
    "ODD": ("AA", "D"),
    "SEEK": ("S", "IY", "K"),
    "SETTEE": ("S", "EH", "T", "IY"),
    "TACK": ("T", "AE", "K"),
    "TOMB": ("T", "AA", "M"),
}


def default_phone_set() -> PhoneSet:
    return PhoneSet(phones=PHONE_LABELS, silence_index=0)


def default_lexicon() -> dict[str, tuple[str, ...]]:
    return dict(WORDS)


@dataclass(frozen=True)
class SynthConfig:
    """Generation knobs; defaults are tuned for clear variant contrasts."""

    num_utterances: int = 200
    seed: int = 0
    frame_shift_ms: float = 30.0
    min_words: int = 2
    max_words: int = 4
    tempo_low: float = 0.8
    tempo_high: float = 1.25
    duration_noise: float = 0.5
    substitution_rate: float = 0.28
    duration_error_rate: float = 0.08
    stretch_factor: float = 1.7
    squeeze_factor: float = 0.45
    clear_mass_low: float = 0.78
    clear_mass_high: float = 0.9
    leak_low: float = 0.08
    leak_high: float = 0.22
    mumble_rate_low: float = 0.08
    mumble_rate_high: float = 0.28
    mumble_alpha: float = 3.0
    mumble_tilt: float = 0.0
    blur_mix: float = 0.5
    num_raters: int = 3

    def __post_init__(self):
        if self.num_utterances < 1:
            raise DataError("num_utterances must be >= 1")
        if not 1 <= self.min_words <= self.max_words:
            raise DataError("need 1 <= min_words <= max_words")
        if self.frame_shift_ms <= 0:
            raise DataError("frame_shift_ms must be positive")


@dataclass(frozen=True)
class SynthUtterance:
    utt_id: str
    text: str
    reference_phones: tuple[int, ...]
    alignment: Alignment
    posteriorgram: Posteriorgram
    mispronounced: tuple[bool, ...]
    ratings: tuple[SentenceRating, ...]


@dataclass(frozen=True)
class SynthCorpus:
    phone_set: PhoneSet
    lexicon: dict[str, tuple[str, ...]]
    utterances: tuple[SynthUtterance, ...]

    def annotations(self) -> AnnotationSet:
        phones = []
        sentences = []
        for utt in self.utterances:
            for pos, wrong in enumerate(utt.mispronounced):
                phones.append(PhoneAnnotation(
                    utt_id=utt.utt_id, position=pos, mispronounced=wrong,
                ))
            sentences.extend(utt.ratings)
        return AnnotationSet(phones=tuple(phones), sentences=tuple(sentences))


def _clear_distribution(
    rng: np.random.Generator,
    phone_set: PhoneSet,
    true_phone: int,
    cfg: SynthConfig,
    leak_phone: int | None = None,
    leak: float = 0.0,
) -> np.ndarray:
    """One confident frame: most mass on true_phone, optional leak phone."""
    n = len(phone_set)
    mass = rng.uniform(cfg.clear_mass_low, cfg.clear_mass_high)
    rest = np.asarray(rng.dirichlet(np.ones(n - 1)))
    probs = np.empty(n)
    others = [i for i in range(n) if i != true_phone]
    probs[true_phone] = mass
    probs[others] = rest * (1.0 - mass)
    if leak_phone is not None:
        # carve the leak out of the non-dominant remainder, keep sum at 1
        take = min(leak, 1.0 - mass - 1e-6)
        probs[others] *= (1.0 - mass - take) / probs[others].sum()
        probs[leak_phone] += take
    return probs / probs.sum()


def _mumble_distribution(
    rng: np.random.Generator, phone_set: PhoneSet, true_phone: int,
    cfg: SynthConfig,
) -> np.ndarray:
    """One uncertain frame: near-flat posteriors, optionally tilted to truth.

    mumble_alpha controls flatness (higher = flatter = higher entropy);
    these are the frames entropy weighting is supposed to discount.
    """
    n = len(phone_set)
    probs = np.asarray(rng.dirichlet(np.full(n, cfg.mumble_alpha)))
    if cfg.mumble_tilt > 0.0:
        probs[true_phone] += cfg.mumble_tilt
        probs = probs / probs.sum()
    return probs


@dataclass(frozen=True)
class _SegmentPlan:
    reference: int        # phone the speaker intended (CTM label)
    realized: int         # phone actually produced
    length: int
    is_silence: bool
    leak_to: int | None   # reference phone leaking into a substituted frame


def rule_durations(
    rng: np.random.Generator,
    phone_set: PhoneSet,
    phones: list[int],
    tempo: float,
    noise: float,
) -> list[int]:
    """Duration rule: phone base, neighbor effects, tempo scaling, noise.

    Phones lengthen before a stop; after a vowel, consonants stretch and
    vowels shorten. Deterministic up to the rng.
    """
    labels = [phone_set.label(p) for p in phones]
    out = []
    for i, label in enumerate(labels):
        base = MEAN_FRAMES[label]
        nxt = labels[i + 1] if i + 1 < len(labels) else None
        prev = labels[i - 1] if i > 0 else None
        if nxt in STOPS:
            base += 1.2
        if prev in VOWELS:
            base += 0.7 if label not in VOWELS else -0.8
        out.append(max(2, round(base * tempo + rng.normal(0.0, noise))))
    return out


def _render_segment(
    rng: np.random.Generator, phone_set: PhoneSet, plan: _SegmentPlan,
    prev_realized: int | None, cfg: SynthConfig,
) -> np.ndarray:
    frames = np.empty((plan.length, len(phone_set)))
    if plan.is_silence:
        for i in range(plan.length):
            frames[i] = _clear_distribution(rng, phone_set, plan.realized, cfg)
    else:
        mumble_rate = rng.uniform(cfg.mumble_rate_low, cfg.mumble_rate_high)
        leak = rng.uniform(cfg.leak_low, cfg.leak_high)
        for i in range(plan.length):
            if rng.random() < mumble_rate:
                frames[i] = _mumble_distribution(rng, phone_set, plan.realized, cfg)
            else:
                frames[i] = _clear_distribution(
                    rng, phone_set, plan.realized, cfg,
                    leak_phone=plan.leak_to, leak=leak,
                )
    if prev_realized is not None and plan.length > 0:
        # coarticulation: the entry frame still carries the previous phone
        carry = _clear_distribution(rng, phone_set, prev_realized, cfg)
        frames[0] = cfg.blur_mix * carry + (1.0 - cfg.blur_mix) * frames[0]
    return frames


def generate_corpus(cfg: SynthConfig) -> SynthCorpus:
    """Build a fully deterministic corpus from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    phone_set = default_phone_set()
    lexicon = default_lexicon()
    words = sorted(lexicon)
    sil = phone_set.silence_index
    utterances = []
    width = len(str(cfg.num_utterances - 1))

    for u in range(cfg.num_utterances):
        utt_id = f"synth{u:0{width}d}"
        count = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        chosen = [words[int(rng.integers(len(words)))] for _ in range(count)]
        text = " ".join(chosen)
        reference = [
            phone_set.index(label) for w in chosen for label in lexicon[w]
        ]
        tempo = rng.uniform(cfg.tempo_low, cfg.tempo_high)
        durations = rule_durations(rng, phone_set, reference, tempo,
                                   cfg.duration_noise)

        realized = list(reference)
        wrong = [False] * len(reference)
        if rng.random() < cfg.substitution_rate:
            k = 1 if len(reference) < 6 else int(rng.integers(1, 3))
            for pos in rng.choice(len(reference), size=k, replace=False):
                label = phone_set.label(reference[pos])
                realized[pos] = phone_set.index(CONFUSIONS[label])
                wrong[pos] = True
        if rng.random() < cfg.duration_error_rate:
            # distort a long phone; short ones cannot move past tolerance
            eligible = [
                i for i in range(len(reference))
                if not wrong[i] and durations[i] >= 5
            ]
            if eligible:
                pos = int(eligible[int(rng.integers(len(eligible)))])
                factor = cfg.stretch_factor if rng.random() < 0.5 else cfg.squeeze_factor
                durations[pos] = max(2, round(durations[pos] * factor))
                wrong[pos] = True

        plans: list[_SegmentPlan] = []
        if rng.random() < 0.7:
            plans.append(_SegmentPlan(sil, sil, int(rng.integers(2, 7)),
                                      True, None))
        for pos, phone in enumerate(reference):
            plans.append(_SegmentPlan(
                reference=phone,
                realized=realized[pos],
                length=durations[pos],
                is_silence=False,
                leak_to=phone if wrong[pos] and realized[pos] != phone else None,
            ))
        if rng.random() < 0.7:
            plans.append(_SegmentPlan(sil, sil, int(rng.integers(2, 7)),
                                      True, None))

        chunks = []
        prev: int | None = None
        segments = []
        start = 0
        for plan in plans:
            chunks.append(_render_segment(rng, phone_set, plan, prev, cfg))
            segments.append(PhoneSegment(phone=plan.reference, start=start,
                                         length=plan.length))
            start += plan.length
            prev = plan.realized
        probs = np.vstack(chunks)
        pg = Posteriorgram(probs=probs, frame_shift_ms=cfg.frame_shift_ms)

        wrong_frac = sum(wrong) / len(wrong)
        ratings = tuple(
            SentenceRating(
                utt_id=utt_id,
                rater_id=f"r{r}",
                score=float(np.clip(
                    10.0 * (1.0 - 1.8 * wrong_frac) + rng.normal(0.0, 0.5),
                    0.0, 10.0,
                )),
            )
            for r in range(cfg.num_raters)
        )
        utterances.append(SynthUtterance(
            utt_id=utt_id,
            text=text,
            reference_phones=tuple(reference),
            alignment=Alignment(segments=tuple(segments)),
            posteriorgram=pg,
            mispronounced=tuple(wrong),
            ratings=ratings,
        ))
    return SynthCorpus(
        phone_set=phone_set, lexicon=lexicon, utterances=tuple(utterances)
    )


def write_corpus(directory, corpus: SynthCorpus) -> None:
    """Materialize a corpus for the command-line pipeline.

    Layout: phones.txt, lexicon.txt, text.tsv, reference.ctm,
    annotations.tsv, and post/<utt>.pgm binaries.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    (root / "post").mkdir(exist_ok=True)
    write_phone_set(root / "phones.txt", corpus.phone_set)
    write_lexicon(root / "lexicon.txt", corpus.lexicon)
    with open(root / "text.tsv", "w", encoding="utf-8") as fh:
        for utt in corpus.utterances:
            fh.write(f"{utt.utt_id}\t{utt.text}\n")
    write_ctm(
        root / "reference.ctm",
        [(u.utt_id, u.alignment) for u in corpus.utterances],
        corpus.phone_set,
    )
    write_annotations(root / "annotations.tsv", corpus.annotations())
    for utt in corpus.utterances:
        write_posteriorgram_binary(root / "post" / f"{utt.utt_id}.pgm",
                                   utt.posteriorgram)


def read_text_manifest(path) -> list[tuple[str, str]]:
    """Parse text.tsv lines utt_id<TAB>words."""
    from .model import FormatError

    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, raw in enumerate(fh.read().splitlines(), start=1):
            if not raw.strip():
                continue
            parts = raw.split("\t")
            if len(parts) != 2:
                raise FormatError("expected utt<TAB>text", path=path, line=i)
            out.append((parts[0], parts[1]))
    if not out:
        raise FormatError("empty text manifest", path=path)
    return out


def rule_duration_corpus(
    num_sequences: int,
    seed: int,
    min_len: int = 4,
    max_len: int = 12,
    tempo_low: float = 0.8,
    tempo_high: float = 1.25,
    noise: float = 0.5,
) -> list[DurationSample]:
    """Duration-only training data following the full duration rule.

    Per-phone base plus neighbor effects plus tempo scaling plus rounding
    noise: a predictor that reads the sequence context and the speed input
    can beat any per-phone constant by a wide margin.
    """
    if num_sequences < 1:
        raise DataError("num_sequences must be >= 1")
    rng = np.random.default_rng(seed)
    phone_set = default_phone_set()
    real = [i for i in range(len(phone_set)) if not phone_set.is_silence(i)]
    samples = []
    for _ in range(num_sequences):
        n = int(rng.integers(min_len, max_len + 1))
        phones = [real[int(rng.integers(len(real)))] for _ in range(n)]
        tempo = rng.uniform(tempo_low, tempo_high)
        durations = [
            float(d)
            for d in rule_durations(rng, phone_set, phones, tempo, noise)
        ]
        samples.append(DurationSample.from_durations(phones, durations))
    return samples

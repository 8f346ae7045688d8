"""Corpus data model, on-disk format, windowing, fold splits, synthetic generator.

The on-disk corpus is newline-delimited JSON, one post per line, with exactly
the fields: user_id, post_id, timestamp, text, risk_level, risk_factors,
protective_factors. Unknown fields are rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

SECONDS_PER_DAY = 86400.0


class CorpusError(Exception):
    pass


class CorpusParseError(CorpusError):
    """A line of the corpus file is not a well-formed record."""


class CorpusSchemaError(CorpusError):
    """A record violates the schema (unknown code/field, duplicate id, bad type)."""


class RiskLevel(IntEnum):
    """Ordinal severity levels, total order IN < ID < BR < AT."""

    IN = 0  # indicator
    ID = 1  # ideation
    BR = 2  # behavior
    AT = 3  # attempt


RISK_FACTOR_CODES = (
    "MHI", "PH", "SU", "HL", "ED", "LS", "PSP", "LSS", "IV", "PSST",
    "PSS", "ID", "DF", "EOS", "SLE", "TE", "CD", "SM", "SORI",
)
PROTECTIVE_FACTOR_CODES = ("SS", "CS", "PC", "SR", "ML")


@dataclass(frozen=True)
class FactorCatalog:
    """Closed taxonomy of factor codes; the orderings fix label-vector indices."""

    risk_codes: tuple = RISK_FACTOR_CODES
    protective_codes: tuple = PROTECTIVE_FACTOR_CODES

    def __post_init__(self):
        if len(set(self.risk_codes)) != len(self.risk_codes):
            raise ValueError("duplicate risk factor codes")
        if len(set(self.protective_codes)) != len(self.protective_codes):
            raise ValueError("duplicate protective factor codes")

    @property
    def n_risk(self) -> int:
        return len(self.risk_codes)

    @property
    def n_protective(self) -> int:
        return len(self.protective_codes)

    def risk_vector(self, codes) -> np.ndarray:
        """Multi-hot indicator over risk codes."""
        v = np.zeros(self.n_risk)
        for c in codes:
            v[self.risk_codes.index(c)] = 1.0
        return v

    def protective_vector(self, codes) -> np.ndarray:
        v = np.zeros(self.n_protective)
        for c in codes:
            v[self.protective_codes.index(c)] = 1.0
        return v


DEFAULT_CATALOG = FactorCatalog()


@dataclass
class Post:
    user_id: str
    post_id: str
    timestamp: int  # epoch seconds, UTC
    text: str
    risk_level: RiskLevel
    risk_factors: tuple = ()
    protective_factors: tuple = ()


@dataclass
class UserTimeline:
    """A user's posts, chronologically sorted (post_id breaks timestamp ties)."""

    user_id: str
    posts: list


@dataclass
class LabeledWindow:
    """window_len consecutive posts plus the immediately subsequent post's level.

    delta_days[t] is elapsed days from observed post t to the last observed
    post, so the most recent observed post always has delta_days == 0.
    """

    user_id: str
    observed: list
    target_level: RiskLevel
    target_post_id: str
    delta_days: np.ndarray


@dataclass
class FoldAssignment:
    k: int
    fold_of_user: dict

    def users_in_fold(self, i) -> list:
        return sorted(u for u, f in self.fold_of_user.items() if f == i)


_RECORD_FIELDS = (
    "user_id", "post_id", "timestamp", "text",
    "risk_level", "risk_factors", "protective_factors",
)


def _post_from_record(rec: dict, lineno: int, catalog: FactorCatalog) -> Post:
    got = set(rec)
    want = set(_RECORD_FIELDS)
    if got != want:
        unknown = sorted(got - want)
        missing = sorted(want - got)
        parts = []
        if unknown:
            parts.append(f"unknown fields {unknown}")
        if missing:
            parts.append(f"missing fields {missing}")
        raise CorpusSchemaError(f"line {lineno}: " + "; ".join(parts))
    if not isinstance(rec["user_id"], str) or not isinstance(rec["post_id"], str):
        raise CorpusSchemaError(f"line {lineno}: user_id/post_id must be strings")
    if not isinstance(rec["timestamp"], int) or isinstance(rec["timestamp"], bool):
        raise CorpusSchemaError(f"line {lineno}: timestamp must be integer epoch seconds")
    if rec["timestamp"] < 0:
        raise CorpusSchemaError(f"line {lineno}: negative timestamp")
    if not isinstance(rec["text"], str):
        raise CorpusSchemaError(f"line {lineno}: text must be a string")
    try:
        level = RiskLevel[rec["risk_level"]]
    except KeyError:
        raise CorpusSchemaError(
            f"line {lineno}: unknown risk_level {rec['risk_level']!r}"
        ) from None
    for key, valid in (
        ("risk_factors", catalog.risk_codes),
        ("protective_factors", catalog.protective_codes),
    ):
        codes = rec[key]
        if not isinstance(codes, list):
            raise CorpusSchemaError(f"line {lineno}: {key} must be an array")
        for c in codes:
            if c not in valid:
                raise CorpusSchemaError(f"line {lineno}: unknown factor code {c!r}")
        if len(set(codes)) != len(codes):
            raise CorpusSchemaError(f"line {lineno}: duplicate codes in {key}")
    return Post(
        user_id=rec["user_id"],
        post_id=rec["post_id"],
        timestamp=rec["timestamp"],
        text=rec["text"],
        risk_level=level,
        risk_factors=tuple(rec["risk_factors"]),
        protective_factors=tuple(rec["protective_factors"]),
    )


def load_corpus(path, catalog: FactorCatalog = DEFAULT_CATALOG) -> list:
    """Read a JSONL corpus into per-user chronological timelines.

    Users are returned sorted by user_id; posts sorted by (timestamp, post_id).
    """
    by_user: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"line {lineno}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise CorpusParseError(f"line {lineno}: record is not an object")
            post = _post_from_record(rec, lineno, catalog)
            by_user.setdefault(post.user_id, []).append(post)
    timelines = []
    for user_id in sorted(by_user):
        posts = by_user[user_id]
        seen = set()
        for p in posts:
            if p.post_id in seen:
                raise CorpusSchemaError(
                    f"duplicate post_id {p.post_id!r} for user {user_id!r}"
                )
            seen.add(p.post_id)
        posts.sort(key=lambda p: (p.timestamp, p.post_id))
        timelines.append(UserTimeline(user_id=user_id, posts=posts))
    return timelines


def write_corpus(timelines, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tl in timelines:
            for p in tl.posts:
                rec = {
                    "user_id": p.user_id,
                    "post_id": p.post_id,
                    "timestamp": p.timestamp,
                    "text": p.text,
                    "risk_level": p.risk_level.name,
                    "risk_factors": list(p.risk_factors),
                    "protective_factors": list(p.protective_factors),
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def build_windows(timeline: UserTimeline, window_len: int) -> list:
    """Slide a window of window_len posts one post at a time.

    Window i observes posts[i : i+window_len] and is labeled with the level of
    posts[i+window_len]; timelines shorter than window_len+1 yield no windows.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    posts = timeline.posts
    out = []
    for i in range(max(0, len(posts) - window_len)):
        observed = posts[i : i + window_len]
        target = posts[i + window_len]
        last_ts = observed[-1].timestamp
        dd = np.array(
            [(last_ts - p.timestamp) / SECONDS_PER_DAY for p in observed]
        )
        out.append(
            LabeledWindow(
                user_id=timeline.user_id,
                observed=observed,
                target_level=target.risk_level,
                target_post_id=target.post_id,
                delta_days=dd,
            )
        )
    return out


def build_all_windows(timelines, window_len: int) -> list:
    windows = []
    for tl in timelines:
        windows.extend(build_windows(tl, window_len))
    return windows


def majority_level(timeline: UserTimeline) -> RiskLevel:
    """User's most frequent level; ties resolve to the lower level."""
    counts = np.zeros(len(RiskLevel), dtype=int)
    for p in timeline.posts:
        counts[int(p.risk_level)] += 1
    return RiskLevel(int(np.argmax(counts)))


def split_users(timelines, k: int, seed: int) -> FoldAssignment:
    """Deterministic k-fold user assignment, stratified by majority level.

    Users are grouped by their majority risk level, shuffled within each
    stratum, then dealt round-robin across folds with a single running
    pointer, which keeps fold sizes within one of each other even when a
    stratum is smaller than k.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(timelines):
        raise ValueError(f"k={k} exceeds number of users ({len(timelines)})")
    rng = np.random.default_rng(seed)
    strata: dict = {lv: [] for lv in RiskLevel}
    for tl in sorted(timelines, key=lambda t: t.user_id):
        strata[majority_level(tl)].append(tl.user_id)
    fold_of_user = {}
    pointer = int(rng.integers(k))
    for lv in RiskLevel:
        users = strata[lv]
        order = rng.permutation(len(users))
        for idx in order:
            fold_of_user[users[idx]] = pointer % k
            pointer += 1
    return FoldAssignment(k=k, fold_of_user=fold_of_user)


# Token templates used by the synthetic generator. Each factor code and each
# level maps to a distinctive token set so the hashed bag-of-words embedding
# carries learnable signal about the labels.
_LEVEL_TOKENS = {
    RiskLevel.IN: "rough day tired venting",
    RiskLevel.ID: "wish i was gone cant keep going",
    RiskLevel.BR: "made a plan wrote the note ready",
    RiskLevel.AT: "tried last night woke up hospital",
}
_FACTOR_TOKENS = {
    "MHI": "diagnosed depression disorder meds",
    "PH": "chronic pain sick body failing",
    "SU": "drinking again blackout pills",
    "HL": "hopeless trapped no way out",
    "ED": "cant stop crying rage spiraling",
    "LS": "worthless burden hate myself",
    "PSP": "failed exams flunking school",
    "LSS": "broke evicted jobless",
    "IV": "assaulted attacked unsafe",
    "PSST": "cut before previous attempt history",
    "PSS": "nobody cares alone isolated",
    "ID": "cant make friends awkward outsider",
    "DF": "parents screaming home toxic",
    "EOS": "friend killed himself funeral",
    "SLE": "divorce moving lost everything",
    "TE": "flashbacks nightmares abuse",
    "CD": "cant focus memory fog confused",
    "SM": "rope bridge stockpiled means",
    "SORI": "closeted rejected identity",
    "SS": "family checked in friends support hotline",
    "CS": "breathing exercise journaling therapy coping",
    "PC": "hopeful stronger resilient growth",
    "SR": "kids need me responsibility promised",
    "ML": "purpose faith reasons meaning",
}
_FILLER_TOKENS = (
    "today", "week", "night", "again", "still", "really", "just",
    "thing", "time", "maybe", "anyway", "lately",
)


@dataclass
class SyntheticConfig:
    """Knobs for the seeded corpus generator.

    protective_pull / risk_push are the probabilities that a post carrying a
    protective / risk factor forces the next level one step down / up.
    """

    n_users: int
    seed: int = 0
    posts_per_user_range: tuple = (6, 16)
    level_marginals: tuple = (0.375, 0.315, 0.240, 0.070)
    protective_pull: float = 0.3
    risk_push: float = 0.3
    factor_emission_rates: dict = field(default_factory=dict)
    interval_mean_days: float = 2.54

    def resolved_rates(self, catalog: FactorCatalog = DEFAULT_CATALOG) -> dict:
        rates = {c: 0.04 for c in catalog.risk_codes}
        rates.update({c: 0.12 for c in catalog.protective_codes})
        for code, r in self.factor_emission_rates.items():
            if code not in rates:
                raise ValueError(f"unknown factor code in emission rates: {code!r}")
            rates[code] = r
        return rates

    def validate(self, catalog: FactorCatalog = DEFAULT_CATALOG) -> None:
        if self.n_users < 1:
            raise ValueError("n_users must be >= 1")
        lo, hi = self.posts_per_user_range
        if lo < 1 or hi < lo:
            raise ValueError("invalid posts_per_user_range")
        if len(self.level_marginals) != len(RiskLevel):
            raise ValueError("level_marginals must have 4 entries")
        if any(m < 0 or m > 1 for m in self.level_marginals):
            raise ValueError("level_marginals must lie in [0, 1]")
        if abs(sum(self.level_marginals) - 1.0) > 1e-9:
            raise ValueError("level_marginals must sum to 1")
        for name, v in (("protective_pull", self.protective_pull),
                        ("risk_push", self.risk_push)):
            if v < 0 or v > 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for code, r in self.resolved_rates(catalog).items():
            if r < 0 or r > 1:
                raise ValueError(f"emission rate for {code!r} must lie in [0, 1]")
        if self.interval_mean_days <= 0:
            raise ValueError("interval_mean_days must be positive")


PROTECTIVE_EFFECTIVE = "protective-effective"
RISK_EFFECTIVE = "risk-effective"
NO_EFFECT = "none"

_EPOCH_2020 = 1577836800  # 2020-01-01T00:00:00Z


def generate_synthetic(config: SyntheticConfig,
                       catalog: FactorCatalog = DEFAULT_CATALOG):
    """Sample a corpus from a latent Markov chain over risk levels.

    Each user walks the level chain; a post carrying a protective factor pulls
    the next level down with probability protective_pull (risk factors push up
    symmetrically, tried only if no pull fired), otherwise the next level is a
    fresh draw from level_marginals. Returns (timelines, truth) where truth
    maps (user_id, post_id) to the effect that caused the transition INTO that
    post: "protective-effective", "risk-effective", or "none".
    """
    config.validate(catalog)
    rng = np.random.default_rng(config.seed)
    rates = config.resolved_rates(catalog)
    marginals = np.asarray(config.level_marginals, dtype=float)
    marginals = marginals / marginals.sum()
    all_codes = list(catalog.risk_codes) + list(catalog.protective_codes)

    timelines = []
    truth = {}
    lo, hi = config.posts_per_user_range
    for uidx in range(config.n_users):
        user_id = f"u{uidx:04d}"
        n_posts = int(rng.integers(lo, hi + 1))
        ts = _EPOCH_2020 + int(rng.integers(0, SECONDS_PER_DAY))
        level = int(rng.choice(len(RiskLevel), p=marginals))
        posts = []
        pending_effect = NO_EFFECT
        for pidx in range(n_posts):
            present = [c for c in all_codes if rng.random() < rates[c]]
            rf = tuple(c for c in present if c in catalog.risk_codes)
            pf = tuple(c for c in present if c in catalog.protective_codes)
            tokens = _LEVEL_TOKENS[RiskLevel(level)].split()
            for c in rf + pf:
                tokens.extend(_FACTOR_TOKENS[c].split())
            tokens.extend(rng.choice(_FILLER_TOKENS, size=2))
            post_id = f"{user_id}-p{pidx:04d}"
            posts.append(
                Post(
                    user_id=user_id,
                    post_id=post_id,
                    timestamp=ts,
                    text=" ".join(tokens),
                    risk_level=RiskLevel(level),
                    risk_factors=rf,
                    protective_factors=pf,
                )
            )
            truth[(user_id, post_id)] = pending_effect

            # transition to the level of the next post
            nxt = None
            pending_effect = NO_EFFECT
            if pf and rng.random() < config.protective_pull:
                nxt = max(level - 1, 0)
                if nxt < level:
                    pending_effect = PROTECTIVE_EFFECTIVE
            elif rf and rng.random() < config.risk_push:
                nxt = min(level + 1, len(RiskLevel) - 1)
                if nxt > level:
                    pending_effect = RISK_EFFECTIVE
            if nxt is None:
                nxt = int(rng.choice(len(RiskLevel), p=marginals))
            level = nxt
            ts += max(1, int(rng.exponential(config.interval_mean_days)
                             * SECONDS_PER_DAY))
        timelines.append(UserTimeline(user_id=user_id, posts=posts))
    return timelines, truth


def write_truth(truth: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (user_id, post_id), effect in truth.items():
            fh.write(json.dumps(
                {"user_id": user_id, "post_id": post_id, "effect": effect}
            ) + "\n")


def load_truth(path) -> dict:
    truth = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            truth[(rec["user_id"], rec["post_id"])] = rec["effect"]
    return truth

"""Sentence-level BLEU, NIST and METEOR with language-aware tokenization.

BLEU and NIST follow NLTK's ``sentence_bleu`` / ``sentence_nist`` with a
single reference and no smoothing. METEOR uses exact and Porter-stem
matching only (no synonym stage), so its column is labelled ``METEOR(es)``.
"""

from __future__ import annotations

import enum
import math
import re
import string
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from nltk.stem.porter import PorterStemmer

METRIC_NAMES = ("bleu2", "bleu4", "meteor", "nist2", "nist4")
METRIC_LABELS = {
    "bleu2": "BLEU-2",
    "bleu4": "BLEU-4",
    "meteor": "METEOR(es)",
    "nist2": "NIST-2",
    "nist4": "NIST-4",
}

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
# alignment search states before falling back to the greedy aligner
ALIGN_STATE_BUDGET = 20_000

_PUNCT = set(string.punctuation)
_CJK_TOKEN = re.compile(r"[a-z0-9À-ɏ]+|\S")


class LangMode(str, enum.Enum):
    WHITESPACE = "whitespace"
    CJK_CHAR = "cjk-char"

    @classmethod
    def for_lang(cls, lang: str) -> "LangMode":
        return cls.CJK_CHAR if lang.lower().startswith("zh") else cls.WHITESPACE


class EmptyReference(ValueError):
    pass


def tokenize(text: str, lang_mode: LangMode | str = LangMode.WHITESPACE) -> list[str]:
    mode = LangMode(lang_mode)
    text = text.lower()
    if mode is LangMode.CJK_CHAR:
        return _CJK_TOKEN.findall(text)
    tokens = []
    for chunk in text.split():
        lead = 0
        while lead < len(chunk) and chunk[lead] in _PUNCT:
            lead += 1
        trail = len(chunk)
        while trail > lead and chunk[trail - 1] in _PUNCT:
            trail -= 1
        tokens.extend(chunk[:lead])
        if trail > lead:
            tokens.append(chunk[lead:trail])
        tokens.extend(chunk[trail:])
    return tokens


@dataclass(frozen=True)
class TokenizedPair:
    hypothesis: tuple[str, ...]
    reference: tuple[str, ...]
    lang_mode: LangMode = LangMode.WHITESPACE

    def __post_init__(self):
        object.__setattr__(self, "hypothesis", tuple(self.hypothesis))
        object.__setattr__(self, "reference", tuple(self.reference))
        object.__setattr__(self, "lang_mode", LangMode(self.lang_mode))
        if not self.reference:
            raise EmptyReference("reference has no tokens")

    @classmethod
    def from_text(cls, hyp: str, ref: str, lang_mode=LangMode.WHITESPACE) -> "TokenizedPair":
        return cls(tuple(tokenize(hyp, lang_mode)), tuple(tokenize(ref, lang_mode)), lang_mode)


def ngrams(tokens: Sequence[str], k: int) -> Counter:
    return Counter(tuple(tokens[i:i + k]) for i in range(len(tokens) - k + 1))


def bleu_n(pair: TokenizedPair, n: int) -> float:
    """Sentence BLEU with uniform weights over orders 1..n, no smoothing."""
    hyp, ref = pair.hypothesis, pair.reference
    if not hyp:
        return 0.0
    log_precisions = []
    for k in range(1, n + 1):
        h = ngrams(hyp, k)
        total = sum(h.values())
        matched = sum((h & ngrams(ref, k)).values())
        if matched == 0 or total == 0:
            return 0.0
        log_precisions.append(math.log(matched / total) / n)
    bp = 1.0 if len(hyp) > len(ref) else math.exp(1 - len(ref) / len(hyp))
    return bp * math.exp(math.fsum(log_precisions))


def _nist_info(ref: Sequence[str], n: int) -> dict[tuple[str, ...], float]:
    counts: Counter = Counter()
    for k in range(1, n + 1):
        counts.update(ngrams(ref, k))
    info = {}
    for gram, c in counts.items():
        numer = counts[gram[:-1]] if len(gram) > 1 else len(ref)
        info[gram] = math.log2(numer / c)
    return info


def nist_length_penalty(ref_len: int, hyp_len: int) -> float:
    """``exp(beta * log(min(h/r, 1))**2)`` with beta set so the factor is 0.5 at h/r = 2/3."""
    ratio = hyp_len / ref_len
    if ratio >= 1:
        return 1.0
    if ratio <= 0:
        return 0.0
    beta = math.log(0.5) / math.log(1.5) ** 2
    return math.exp(beta * math.log(ratio) ** 2)


def nist_n(pair: TokenizedPair, n: int) -> float:
    """Sentence NIST; information weights come from the single reference."""
    hyp, ref = pair.hypothesis, pair.reference
    if not hyp:
        return 0.0
    info = _nist_info(ref, n)
    score = 0.0
    for k in range(1, n + 1):
        h = ngrams(hyp, k)
        total = sum(h.values())
        if total == 0:
            continue
        overlap = h & ngrams(ref, k)
        score += sum(info[g] * c for g, c in overlap.items()) / total
    return score * nist_length_penalty(len(ref), len(hyp))


_stemmer = PorterStemmer()


@lru_cache(maxsize=65536)
def stem(token: str) -> str:
    if token.isascii() and any(ch.isalpha() for ch in token):
        return _stemmer.stem(token)
    return token


def count_chunks(alignment: Iterable[tuple[int, int]]) -> int:
    """Number of runs of (hyp, ref) pairs adjacent in both strings."""
    pairs = sorted(alignment)
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or not (i == prev[0] + 1 and j == prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def _stage_targets(hyp, ref, hstem, rstem) -> tuple[int, int]:
    exact = Counter(hyp) & Counter(ref)
    m_exact = sum(exact.values())
    h_left = Counter(hyp) - exact
    r_left = Counter(ref) - exact
    hs = Counter()
    rs = Counter()
    for w, c in h_left.items():
        hs[stem(w)] += c
    for w, c in r_left.items():
        rs[stem(w)] += c
    return m_exact, sum((hs & rs).values())


def align(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[int, int]]:
    """Exact-then-stem alignment with the fewest chunks.

    Matches are maximal per stage: every available exact pair first, then
    stem pairs among the leftovers. Among such alignments the one with the
    fewest chunks is found by memoized search; past ``ALIGN_STATE_BUDGET``
    states the greedy alignment is returned instead.
    """
    hyp, ref = list(hyp), list(ref)
    hstem = [stem(t) for t in hyp]
    rstem = [stem(t) for t in ref]
    m_exact, m_stem = _stage_targets(hyp, ref, hstem, rstem)
    if m_exact + m_stem == 0:
        return []
    cand = []
    for i, (w, s) in enumerate(zip(hyp, hstem)):
        opts = [(j, True) for j, v in enumerate(ref) if v == w]
        opts += [(j, False) for j, v in enumerate(ref) if v != w and rstem[j] == s]
        cand.append(opts)
    try:
        return _search(hyp, cand, m_exact, m_stem)
    except (_BudgetExceeded, RecursionError):
        return _greedy(hyp, ref, hstem, rstem)


class _BudgetExceeded(Exception):
    pass


def _search(hyp, cand, m_exact, m_stem):
    H = len(hyp)
    # suffix upper bounds on how many exact / any matches remain possible
    exact_left = [0] * (H + 1)
    any_left = [0] * (H + 1)
    # ref positions still reachable from hyp index i onward
    future = [0] * (H + 1)
    for i in range(H - 1, -1, -1):
        exact_left[i] = exact_left[i + 1] + any(e for _, e in cand[i])
        any_left[i] = any_left[i + 1] + bool(cand[i])
        future[i] = future[i + 1]
        for j, _ in cand[i]:
            future[i] |= 1 << j
    memo: dict = {}
    inf = float("inf")

    def canon(i, used, prev_j):
        # drop state that cannot affect the rest of the search
        if prev_j is not None and all(j != prev_j + 1 for j, _ in cand[i]):
            prev_j = None
        return used & future[i], prev_j

    def best(i, used, prev_j, ne, ns):
        if ne > m_exact or ns > m_stem:
            return inf, None
        if i == H:
            return (0, None) if (ne == m_exact and ns == m_stem) else (inf, None)
        if ne + exact_left[i] < m_exact or ne + ns + any_left[i] < m_exact + m_stem:
            return inf, None
        used, prev_j = canon(i, used, prev_j)
        key = (i, used, prev_j, ne, ns)
        if key in memo:
            return memo[key]
        if len(memo) >= ALIGN_STATE_BUDGET:
            raise _BudgetExceeded
        result = (inf, None)
        # extending the current chunk first keeps the search close to optimal early
        opts = sorted(cand[i], key=lambda o: (prev_j is None or o[0] != prev_j + 1, o[0]))
        for j, is_exact in opts:
            if used >> j & 1:
                continue
            new_chunk = 0 if (prev_j is not None and j == prev_j + 1) else 1
            sub, _ = best(i + 1, used | (1 << j), j, ne + is_exact, ns + (not is_exact))
            if sub + new_chunk < result[0]:
                result = (sub + new_chunk, (j, is_exact))
        sub, _ = best(i + 1, used, None, ne, ns)
        if sub < result[0]:
            result = (sub, None)
        memo[key] = result
        return result

    total, _ = best(0, 0, None, 0, 0)
    if total == inf:
        raise _BudgetExceeded
    pairs = []
    used, prev_j, ne, ns = 0, None, 0, 0
    for i in range(H):
        used, prev_j = canon(i, used, prev_j)
        choice = memo[(i, used, prev_j, ne, ns)][1]
        if choice is None:
            prev_j = None
            continue
        j, is_exact = choice
        pairs.append((i, j))
        used |= 1 << j
        prev_j = j
        ne += is_exact
        ns += not is_exact
    return pairs


def _greedy(hyp, ref, hstem, rstem):
    pairs: dict[int, int] = {}
    used: set[int] = set()
    for keys_h, keys_r in ((hyp, ref), (hstem, rstem)):
        prev_j = None
        for i, key in enumerate(keys_h):
            if i in pairs:
                prev_j = pairs[i]
                continue
            opts = [j for j, v in enumerate(keys_r) if v == key and j not in used]
            if not opts:
                prev_j = None
                continue
            if prev_j is not None and prev_j + 1 in opts:
                j = prev_j + 1
            else:
                j = max(opts, key=lambda j: (_run(keys_h, keys_r, i, j, used), -j))
            pairs[i] = j
            used.add(j)
            prev_j = j
    return sorted(pairs.items())


def _run(h, r, i, j, used):
    n = 0
    while i + n < len(h) and j + n < len(r) and h[i + n] == r[j + n] and (j + n) not in used:
        n += 1
    return n


def meteor(pair: TokenizedPair) -> float:
    """METEOR(es): exact + stem matching, alpha 0.9, fragmentation penalty 0.5 * frag**3."""
    hyp, ref = pair.hypothesis, pair.reference
    if not hyp:
        return 0.0
    alignment = align(hyp, ref)
    m = len(alignment)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (count_chunks(alignment) / m) ** METEOR_BETA
    return fmean * (1 - penalty)


@dataclass(frozen=True)
class MetricVector:
    bleu2: float = 0.0
    bleu4: float = 0.0
    meteor: float = 0.0
    nist2: float = 0.0
    nist4: float = 0.0
    empty_hypothesis: bool = False

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in METRIC_NAMES)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricVector":
        return cls(**{k: d[k] for k in METRIC_NAMES}, empty_hypothesis=d.get("empty_hypothesis", False))


def score_tokens(pair: TokenizedPair) -> MetricVector:
    if not pair.hypothesis:
        return MetricVector(empty_hypothesis=True)
    return MetricVector(
        bleu2=bleu_n(pair, 2),
        bleu4=bleu_n(pair, 4),
        meteor=meteor(pair),
        nist2=nist_n(pair, 2),
        nist4=nist_n(pair, 4),
    )


def score_pair(hyp_text: str, ref_text: str,
               lang_mode: LangMode | str = LangMode.WHITESPACE) -> MetricVector:
    return score_tokens(TokenizedPair.from_text(hyp_text, ref_text, lang_mode))


def mean_vector(vectors: Sequence[MetricVector]) -> MetricVector:
    if not vectors:
        raise ValueError("no metric vectors to average")
    n = len(vectors)
    sums = [math.fsum(v.values()[k] for v in vectors) / n for k in range(len(METRIC_NAMES))]
    return MetricVector(*sums)


def std_vector(vectors: Sequence[MetricVector]) -> MetricVector:
    """Population standard deviation per metric."""
    mean = mean_vector(vectors).values()
    n = len(vectors)
    out = []
    for k in range(len(METRIC_NAMES)):
        out.append(math.sqrt(math.fsum((v.values()[k] - mean[k]) ** 2 for v in vectors) / n))
    return MetricVector(*out)

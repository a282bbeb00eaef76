"""Evaluation metrics: image fidelity, classifier performance, paired
statistics, text-generation overlap, and a transparent keyword/negation
report labeler."""

import importlib.resources
import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import ndimage
from scipy.stats import norm

from .errors import (DimensionMismatch, EmptyCandidate, EmptyInput,
                     ImageTooSmall, LengthMismatch, SingleClass,
                     StatUndefinedTooOften, TooFewPairs)
from .imaging import to_grayscale
from .stemmer import stem


@dataclass(frozen=True)
class MetricSample:
    score: float
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True)
class ConfidenceInterval:
    point: float
    lo: float
    hi: float
    level: float
    resamples: int

    def __post_init__(self):
        if not self.lo <= self.point <= self.hi:
            raise ValueError("interval must contain the point estimate")


# ---------------------------------------------------------------------------
# image fidelity

def psnr(a, b):
    """10 log10(1 / MSE), peak 1.0; +inf for identical images."""
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"{a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, k1=0.01, k2=0.03):
    """Mean local SSIM, 11x11 Gaussian window sigma 1.5, dynamic range 1.

    Tables conventionally display this value multiplied by 100.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(f"{a.width}x{a.height} vs "
                                f"{b.width}x{b.height}")
    x = to_grayscale(a).data[:, :, 0]
    y = to_grayscale(b).data[:, :, 0]
    if min(x.shape) < 11:
        raise ImageTooSmall("SSIM needs at least 11x11 images")
    win = _gaussian_window()
    c1 = k1 ** 2
    c2 = k2 ** 2

    def filt(img):
        full = ndimage.convolve(img, win, mode="constant")
        return full[5:-5, 5:-5]  # valid region only

    mx = filt(x)
    my = filt(y)
    mxx = filt(x * x)
    myy = filt(y * y)
    mxy = filt(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# classifier performance

def roc_auc(samples):
    """Mann-Whitney AUC; ties count half."""
    scores = np.array([s.score for s in samples])
    labels = np.array([s.label for s in samples])
    pos = labels == 1
    npos = int(pos.sum())
    nneg = len(labels) - npos
    if npos == 0 or nneg == 0:
        raise SingleClass("need at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    # average ranks over ties
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rsum = ranks[pos].sum()
    return float((rsum - npos * (npos + 1) / 2.0) / (npos * nneg))


def prf1(predicted, truth):
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} vs {len(truth)}")
    tp = sum(1 for p, t in zip(predicted, truth) if p == 1 and t == 1)
    fp = sum(1 for p, t in zip(predicted, truth) if p == 1 and t == 0)
    fn = sum(1 for p, t in zip(predicted, truth) if p == 0 and t == 1)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def bootstrap_ci(stat, data, resamples=1000, level=0.95, seed=0):
    """Seeded percentile bootstrap; per-resample RNG derives from
    (seed, i) so results are schedule-independent. Undefined resamples
    (the statistic raising) are redrawn up to a 10x budget."""
    data = list(data)
    if not data:
        raise EmptyInput("bootstrap needs data")
    point = stat(data)
    n = len(data)
    values = []
    draw = 0
    budget = 10 * resamples
    while len(values) < resamples:
        if draw >= budget:
            raise StatUndefinedTooOften(
                f"{len(values)} valid resamples after {draw} draws")
        rng = np.random.default_rng([int(seed), draw])
        idx = rng.integers(0, n, size=n)
        draw += 1
        try:
            values.append(stat([data[i] for i in idx]))
        except Exception:
            continue
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(values, [100 * alpha, 100 * (1 - alpha)])
    # percentile intervals can exclude the point estimate on tiny samples;
    # widen so the declared invariant holds
    lo = min(float(lo), point)
    hi = max(float(hi), point)
    return ConfidenceInterval(point=float(point), lo=lo, hi=hi,
                              level=level, resamples=resamples)


def _signed_ranks(diffs):
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="mergesort")
    ranks = np.empty(len(diffs))
    s = absd[order]
    i = 0
    while i < len(diffs):
        j = i
        while j + 1 < len(diffs) and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(x, y, exact_max_n=12):
    """Two-sided Wilcoxon signed-rank test on paired lists.

    Zero differences are dropped; tied magnitudes get average ranks. The
    statistic is W+ - W- (negates when x and y swap). p is exact by sign
    enumeration for n <= exact_max_n, else a normal approximation with
    tie-corrected variance and continuity correction.
    """
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)}")
    diffs = np.array([float(a) - float(b) for a, b in zip(x, y)])
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n < 5:
        raise TooFewPairs(f"{n} nonzero pairs < 5")
    ranks = _signed_ranks(diffs)
    w_plus = float(ranks[diffs > 0].sum())
    total = float(ranks.sum())
    statistic = 2.0 * w_plus - total  # = W+ - W-
    mu = total / 2.0
    if n <= exact_max_n:
        count = 0
        for signs in product((0, 1), repeat=n):
            wp = sum(r for s, r in zip(signs, ranks) if s)
            if abs(wp - mu) >= abs(w_plus - mu) - 1e-12:
                count += 1
        p = count / (1 << n)
    else:
        var = float(np.sum(ranks ** 2)) / 4.0
        delta = abs(w_plus - mu)
        z = max(delta - 0.5, 0.0) / math.sqrt(var)
        p = 2.0 * (1.0 - norm.cdf(z))
        p = min(p, 1.0)
    return statistic, p


# ---------------------------------------------------------------------------
# text generation metrics

def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(candidate, references, max_n=4, smooth=False):
    """Modified n-gram precision BLEU-1..max_n with brevity penalty.

    No smoothing by default: any zero precision zeroes that order's score.
    """
    if not candidate:
        raise EmptyCandidate("candidate must be non-empty")
    refs = [list(r) for r in references]
    if not refs or any(not r for r in refs):
        raise EmptyInput("references must be non-empty")
    c = len(candidate)
    r = min((len(ref) for ref in refs),
            key=lambda L: (abs(L - c), L))  # closest reference length
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    precisions = []
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        if not cand:
            precisions.append(0.0)
            continue
        clipped = 0
        for g, cnt in cand.items():
            best = max(_ngrams(ref, n).get(g, 0) for ref in refs)
            clipped += min(cnt, best)
        total = sum(cand.values())
        if smooth:
            precisions.append((clipped + 1) / (total + 1))
        else:
            precisions.append(clipped / total)
    scores = []
    for k in range(1, max_n + 1):
        ps = precisions[:k]
        if any(p == 0.0 for p in ps):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(sum(math.log(p) for p in ps) / k))
    return scores


def _lcs_len(a, b):
    dp = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, 1):
            cur = dp[j]
            dp[j] = prev + 1 if x == y else max(dp[j], dp[j - 1])
            prev = cur
    return dp[-1]


def rouge_l(candidate, reference):
    """LCS F-score with beta = 1."""
    if not candidate or not reference:
        raise EmptyInput("both sequences must be non-empty")
    L = _lcs_len(list(candidate), list(reference))
    if L == 0:
        return 0.0
    p = L / len(candidate)
    r = L / len(reference)
    return 2 * p * r / (p + r)


def _greedy_align(cand_keys, ref_keys, cand_free, ref_free):
    """Match equal keys preferring contiguity with the previous match."""
    pairs = []
    last_ref = -2
    for i, ck in enumerate(cand_keys):
        if not cand_free[i]:
            continue
        choice = None
        for j, rk in enumerate(ref_keys):
            if ref_free[j] and rk == ck:
                if j == last_ref + 1:
                    choice = j
                    break
                if choice is None:
                    choice = j
        if choice is not None:
            cand_free[i] = False
            ref_free[choice] = False
            pairs.append((i, choice))
            last_ref = choice
    return pairs


def meteor_lite(candidate, reference, alpha=0.9, beta=3.0, gamma=0.5):
    """Two-stage (exact, then Porter-stemmed) unigram matcher with the
    standard fragmentation penalty; no synonym stage."""
    cand = list(candidate)
    ref = list(reference)
    if not cand or not ref:
        raise EmptyInput("both sequences must be non-empty")
    cand_free = [True] * len(cand)
    ref_free = [True] * len(ref)
    pairs = _greedy_align(cand, ref, cand_free, ref_free)
    pairs += _greedy_align([stem(t) for t in cand], [stem(t) for t in ref],
                           cand_free, ref_free)
    m = len(pairs)
    if m == 0:
        return 0.0
    pairs.sort()
    chunks = 1
    for (c0, r0), (c1, r1) in zip(pairs, pairs[1:]):
        if not (c1 == c0 + 1 and r1 == r0 + 1):
            chunks += 1
    p = m / len(cand)
    r = m / len(ref)
    f_mean = p * r / (alpha * p + (1.0 - alpha) * r)
    penalty = gamma * (chunks / m) ** beta
    return f_mean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# keyword/negation report labeler (simplified; not the full NLP labeler)

@dataclass(frozen=True)
class LabelLexicon:
    conditions: dict       # condition -> tuple of synonym phrases
    negation_cues: tuple
    window: int = 5

    def __post_init__(self):
        for cond, phrases in self.conditions.items():
            if not phrases:
                raise ValueError(f"no phrases for condition {cond}")
            for p in phrases:
                if not p or p != p.lower():
                    raise ValueError(f"phrase must be lowercase: {p!r}")
        object.__setattr__(self, "conditions",
                           {k: tuple(v) for k, v in self.conditions.items()})
        object.__setattr__(self, "negation_cues", tuple(self.negation_cues))


def default_lexicon():
    ref = importlib.resources.files("screendx") / "data" / "lexicon.json"
    raw = json.loads(ref.read_text())
    return LabelLexicon(conditions=raw["conditions"],
                        negation_cues=tuple(raw["negation_cues"]),
                        window=int(raw.get("window", 5)))


def _tokenize(text):
    return re.findall(r"[a-z0-9']+", text.lower())


def extract_labels(report_text, lexicon):
    """Per-condition {positive, negative, absent} from free text.

    A condition is negative when a negation cue occurs within the window
    on either side of a synonym phrase inside the same clause; positive
    when the phrase appears un-negated; absent otherwise.
    """
    out = {}
    clauses = re.split(r"[.;!?\n]", report_text.lower())
    tokenized = [_tokenize(c) for c in clauses if c.strip()]
    cues = set(lexicon.negation_cues)
    for cond, phrases in lexicon.conditions.items():
        status = "absent"
        for tokens in tokenized:
            for phrase in phrases:
                ptoks = phrase.split()
                for i in range(len(tokens) - len(ptoks) + 1):
                    if tokens[i:i + len(ptoks)] != ptoks:
                        continue
                    lo = max(0, i - lexicon.window)
                    hi = min(len(tokens), i + len(ptoks) + lexicon.window)
                    ctx = tokens[lo:i] + tokens[i + len(ptoks):hi]
                    if any(t in cues for t in ctx):
                        status = "negative"
                    elif status != "negative":
                        status = "positive"
        out[cond] = status
    return out

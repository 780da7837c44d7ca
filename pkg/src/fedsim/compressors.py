"""Compression operators with exact bit accounting.

Every operator maps R^d -> R^d; `compress` returns the reconstructed vector
together with the number of bits the payload would occupy on a real uplink
(32 bits per raw float, ceil(log2 d) bits per index, 1 bit per coin flip).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np


class CompressorError(ValueError):
    """Invalid compressor specification or misuse."""


FLOAT_BITS = 32

IDENTITY = "identity"
BERNOULLI = "bern"
RANDK = "randk"
TOPK = "topk"
NATURAL = "natural"
STD_DITHERING = "dith"
NATURAL_DITHERING = "ndith"
TERNGRAD = "terngrad"
QSGD = "qsgd"
COMPOSE = "compose"
SWITCH = "switch"

_UNBIASED_LEAVES = {IDENTITY, BERNOULLI, RANDK, NATURAL, STD_DITHERING,
                    NATURAL_DITHERING, TERNGRAD, QSGD}


def index_bits(d: int) -> int:
    return max(1, math.ceil(math.log2(d))) if d > 1 else 0


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    p: Optional[float] = None          # bernoulli / switch probability
    k: Optional[int] = None            # randk / topk absolute k
    k_pct: Optional[float] = None      # randk / topk percentage of d
    levels: Optional[int] = None       # dithering / qsgd level count
    first: Optional["CompressorSpec"] = None   # compose outer / switch first
    second: Optional["CompressorSpec"] = None  # compose inner / switch second

    def __post_init__(self):
        kind = self.kind
        if kind == BERNOULLI and not (self.p is not None and 0.0 < self.p <= 1.0):
            raise CompressorError("bernoulli probability must lie in (0, 1]")
        if kind in (RANDK, TOPK):
            if self.k is None and self.k_pct is None:
                raise CompressorError(f"{kind} needs k or a percentage")
            if self.k is not None and self.k < 1:
                raise CompressorError("k must be >= 1")
            if self.k_pct is not None and not (0.0 < self.k_pct <= 100.0):
                raise CompressorError("percentage must lie in (0, 100]")
        if kind in (STD_DITHERING, NATURAL_DITHERING, QSGD):
            if self.levels is None or self.levels < 1:
                raise CompressorError(f"{kind} needs levels >= 1")
        if kind == COMPOSE and (self.first is None or self.second is None):
            raise CompressorError("compose needs outer and inner specs")
        if kind == SWITCH:
            if self.first is None or self.second is None:
                raise CompressorError("switch needs two branch specs")
            if not (self.p is not None and 0.0 <= self.p <= 1.0):
                raise CompressorError("switch probability must lie in [0, 1]")
        if kind not in _UNBIASED_LEAVES | {TOPK, COMPOSE, SWITCH}:
            raise CompressorError(f"unknown compressor kind {self.kind!r}")

    @property
    def unbiased(self) -> bool:
        if self.kind == TOPK:
            return False
        if self.kind in (COMPOSE, SWITCH):
            return self.first.unbiased and self.second.unbiased
        return True

    def resolved_k(self, d: int) -> int:
        if self.k is not None:
            return min(d, self.k)
        return min(d, max(1, round(self.k_pct * d / 100.0)))


@dataclass(frozen=True)
class CompressedMessage:
    values: np.ndarray        # reconstructed C(x)
    bits: int                 # realized payload size
    realization: dict         # structural record, enough to recompute bits


# --------------------------------------------------------------------------
# spec grammar
# --------------------------------------------------------------------------

def parse_compressor(text: str) -> CompressorSpec:
    """Parse the config grammar: ``identity``, ``bern:0.8``, ``randk:40%``,
    ``topk:8``, ``qsgd:4``, ``compose(outer,inner)``, ``switch:0.5(a,b)``."""
    spec, rest = _parse_compressor(text.strip())
    if rest:
        raise CompressorError(f"trailing characters {rest!r} in compressor spec")
    return spec


def _parse_compressor(text: str) -> tuple[CompressorSpec, str]:
    for name in (COMPOSE, SWITCH):
        if text.startswith(name):
            rest = text[len(name):]
            p = None
            if name == SWITCH:
                if not rest.startswith(":"):
                    raise CompressorError("switch needs a probability, e.g. switch:0.5(a,b)")
                num, _, rest = rest[1:].partition("(")
                p = float(num)
                rest = "(" + rest
            if not rest.startswith("("):
                raise CompressorError(f"{name} needs parenthesized arguments")
            first, rest = _parse_compressor(rest[1:])
            if not rest.startswith(","):
                raise CompressorError(f"{name} needs two arguments")
            second, rest = _parse_compressor(rest[1:])
            if not rest.startswith(")"):
                raise CompressorError(f"unbalanced parentheses in {name}")
            return CompressorSpec(name, p=p, first=first, second=second), rest[1:]

    # leaf: name[:arg]
    stop = len(text)
    for ch in (",", ")"):
        pos = text.find(ch)
        if pos != -1:
            stop = min(stop, pos)
    token, rest = text[:stop], text[stop:]
    name, _, arg = token.partition(":")
    try:
        if name == IDENTITY or name == NATURAL or name == TERNGRAD:
            if arg:
                raise CompressorError(f"{name} takes no argument")
            return CompressorSpec(name), rest
        if name == BERNOULLI:
            return CompressorSpec(BERNOULLI, p=float(arg)), rest
        if name in (RANDK, TOPK):
            if arg.endswith("%"):
                return CompressorSpec(name, k_pct=float(arg[:-1])), rest
            return CompressorSpec(name, k=int(arg)), rest
        if name in (STD_DITHERING, NATURAL_DITHERING, QSGD):
            return CompressorSpec(name, levels=int(arg)), rest
    except CompressorError:
        raise
    except ValueError as exc:
        raise CompressorError(f"bad argument for {name}: {arg!r}") from exc
    raise CompressorError(f"unknown compressor {name!r}")


def format_compressor(spec: CompressorSpec) -> str:
    """Inverse of :func:`parse_compressor`."""
    kind = spec.kind
    if kind in (IDENTITY, NATURAL, TERNGRAD):
        return kind
    if kind == BERNOULLI:
        return f"bern:{_num(spec.p)}"
    if kind in (RANDK, TOPK):
        return f"{kind}:{spec.k}" if spec.k is not None else f"{kind}:{_num(spec.k_pct)}%"
    if kind in (STD_DITHERING, NATURAL_DITHERING, QSGD):
        return f"{kind}:{spec.levels}"
    if kind == COMPOSE:
        return f"compose({format_compressor(spec.first)},{format_compressor(spec.second)})"
    if kind == SWITCH:
        return (f"switch:{_num(spec.p)}({format_compressor(spec.first)},"
                f"{format_compressor(spec.second)})")
    raise CompressorError(kind)


def _num(v: float) -> str:
    return str(int(v)) if float(v) == int(v) else repr(float(v))


# --------------------------------------------------------------------------
# compression
# --------------------------------------------------------------------------

def compress(spec: CompressorSpec, x: np.ndarray,
             rng: Optional[np.random.Generator] = None) -> CompressedMessage:
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    kind = spec.kind

    if kind == IDENTITY:
        real = {"kind": kind}
        return CompressedMessage(x.copy(), bit_cost(spec, d, real), real)

    if kind == BERNOULLI:
        keep = bool(rng.random() < spec.p)
        real = {"kind": kind, "keep": keep}
        out = x / spec.p if keep else np.zeros(d)
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == RANDK:
        k = spec.resolved_k(d)
        idx = np.sort(rng.choice(d, size=k, replace=False))
        out = np.zeros(d)
        out[idx] = x[idx] * (d / k)
        real = {"kind": kind, "k": k}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == TOPK:
        k = spec.resolved_k(d)
        order = np.argsort(-np.abs(x), kind="stable")  # ties -> lowest index
        out = np.zeros(d)
        out[order[:k]] = x[order[:k]]
        real = {"kind": kind, "k": k}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == NATURAL:
        out = _natural_round(x, rng)
        real = {"kind": kind}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind in (STD_DITHERING, QSGD):
        out = _std_dither(x, spec.levels, rng)
        real = {"kind": kind, "levels": spec.levels}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == NATURAL_DITHERING:
        out = _natural_dither(x, spec.levels, rng)
        real = {"kind": kind, "levels": spec.levels}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == TERNGRAD:
        norm = float(np.max(np.abs(x)))
        if norm == 0.0:
            out = np.zeros(d)
        else:
            keep = rng.random(d) < np.abs(x) / norm
            out = np.sign(x) * norm * keep
        real = {"kind": kind}
        return CompressedMessage(out, bit_cost(spec, d, real), real)

    if kind == COMPOSE:
        inner = compress(spec.second, x, rng)
        outer = compress(spec.first, inner.values, rng)
        real = {"kind": kind, "outer": outer.realization}
        return CompressedMessage(outer.values, bit_cost(spec, d, real), real)

    if kind == SWITCH:
        use_first = bool(rng.random() < spec.p)
        chosen = compress(spec.first if use_first else spec.second, x, rng)
        real = {"kind": kind, "first": use_first, "chosen": chosen.realization}
        return CompressedMessage(chosen.values, bit_cost(spec, d, real), real)

    raise CompressorError(f"unknown compressor kind {kind!r}")


def _natural_round(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Randomly round each entry to one of its two neighbouring powers of two,
    unbiased per coordinate."""
    out = np.zeros_like(x)
    nz = x != 0.0
    if not np.any(nz):
        return out
    v = np.abs(x[nz])
    mant, exp = np.frexp(v)            # v = mant * 2^exp, mant in [0.5, 1)
    low = np.ldexp(0.5, exp)           # 2^(exp-1) <= v < 2^exp
    p_up = (v - low) / low
    up = rng.random(v.shape) < p_up
    rounded = np.where(up, 2.0 * low, low)
    out[nz] = np.sign(x[nz]) * rounded
    return out


def _std_dither(x: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    """s uniform levels against the l2 norm; per-coordinate unbiased."""
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.zeros_like(x)
    u = np.abs(x) / norm * s
    base = np.floor(u)
    frac = u - base
    level = base + (rng.random(x.shape) < frac)
    return np.sign(x) * norm * level / s


def _natural_dither(x: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    """Exponentially spaced (power-of-two) levels {0, 2^(1-s), ..., 1/2, 1}
    against the l2 norm; per-coordinate unbiased."""
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.zeros_like(x)
    u = np.abs(x) / norm               # in [0, 1]
    floor_level = np.zeros_like(u)
    ceil_level = np.full_like(u, 2.0 ** (1 - s))
    pos = u > 0
    big = u >= 2.0 ** (1 - s)
    with np.errstate(divide="ignore"):
        expo = np.clip(np.floor(np.log2(np.where(big, u, 1.0))), 1 - s, -1)
    floor_level[big] = 2.0 ** expo[big]
    ceil_level[big] = np.minimum(2.0 * floor_level[big], 1.0)
    exact = big & (u >= 1.0)           # u == 1 sits on the top level
    gap = ceil_level - floor_level
    p_up = np.where(gap > 0, (u - floor_level) / np.where(gap > 0, gap, 1.0), 0.0)
    level = np.where(rng.random(u.shape) < p_up, ceil_level, floor_level)
    level = np.where(exact, 1.0, level)
    level[~pos] = 0.0
    return np.sign(x) * norm * level


# --------------------------------------------------------------------------
# bit accounting
# --------------------------------------------------------------------------

def bit_cost(spec: CompressorSpec, d: int, realization: Optional[dict] = None) -> int:
    """Payload bits for one message; depends only on the spec, d, and the
    realized structure (branches/support sizes), never on entry magnitudes."""
    kind = spec.kind
    if kind == IDENTITY:
        return FLOAT_BITS * d
    if kind == BERNOULLI:
        keep = True if realization is None else realization["keep"]
        return 1 + (FLOAT_BITS * d if keep else 0)
    if kind in (RANDK, TOPK):
        k = spec.resolved_k(d)
        return k * (FLOAT_BITS + index_bits(d))
    if kind == NATURAL:
        return 9 * d
    if kind in (STD_DITHERING, NATURAL_DITHERING, QSGD):
        return FLOAT_BITS + d * (1 + math.ceil(math.log2(spec.levels + 1)))
    if kind == TERNGRAD:
        return FLOAT_BITS + 2 * d
    if kind == COMPOSE:
        outer_real = None if realization is None else realization.get("outer")
        return bit_cost(spec.first, d, outer_real)
    if kind == SWITCH:
        if realization is None:
            raise CompressorError("switch bit cost needs the realized branch")
        branch = spec.first if realization["first"] else spec.second
        return 1 + bit_cost(branch, d, realization.get("chosen"))
    raise CompressorError(f"unknown compressor kind {kind!r}")


def exact_recovery(spec: CompressorSpec, msg: CompressedMessage,
                   ) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """For compressors whose reconstruction is invertible coordinate by
    coordinate, return (mask, raw) where raw[mask] equals the compressed input
    up to one rescaling multiply; None when no such recovery exists (lossy
    quantizers)."""
    kind = spec.kind
    values = msg.values
    if kind == IDENTITY:
        return np.ones(values.shape, dtype=bool), values.copy()
    if kind == BERNOULLI:
        if msg.realization.get("keep"):
            return np.ones(values.shape, dtype=bool), values * spec.p
        return np.zeros(values.shape, dtype=bool), np.zeros_like(values)
    if kind == RANDK:
        k = msg.realization["k"]
        mask = values != 0.0
        return mask, values * (k / values.shape[0])
    if kind == TOPK:
        return values != 0.0, values.copy()
    if kind == SWITCH:
        branch = spec.first if msg.realization["first"] else spec.second
        sub = CompressedMessage(values, 0, msg.realization["chosen"])
        return exact_recovery(branch, sub)
    return None


def variance_bound(spec: CompressorSpec, d: int) -> float:
    """Upper bound on the variance parameter omega in
    E||C(x)||^2 <= (omega + 1) ||x||^2 (standard bounds per operator)."""
    kind = spec.kind
    if kind == IDENTITY:
        return 0.0
    if kind == BERNOULLI:
        return 1.0 / spec.p - 1.0
    if kind in (RANDK, TOPK):
        return d / spec.resolved_k(d) - 1.0
    if kind == NATURAL:
        return 0.125
    if kind in (STD_DITHERING, QSGD):
        s = spec.levels
        return min(d / s ** 2, math.sqrt(d) / s)
    if kind == NATURAL_DITHERING:
        return 0.125 + 2.0 ** (1 - spec.levels) * math.sqrt(d)
    if kind == TERNGRAD:
        return math.sqrt(d) - 1.0
    if kind == COMPOSE:
        return ((1.0 + variance_bound(spec.first, d))
                * (1.0 + variance_bound(spec.second, d)) - 1.0)
    if kind == SWITCH:
        return (spec.p * variance_bound(spec.first, d)
                + (1.0 - spec.p) * variance_bound(spec.second, d))
    raise CompressorError(f"unknown compressor kind {kind!r}")


# --------------------------------------------------------------------------
# exact enumeration and Monte-Carlo certification
# --------------------------------------------------------------------------

class NotEnumerable(CompressorError):
    """The spec's randomness cannot be exhaustively enumerated."""


def enumerate_outcomes(spec: CompressorSpec, x: np.ndarray,
                       ) -> Iterator[tuple[float, np.ndarray, int]]:
    """Yield (probability, reconstructed, bits) over the spec's full support.
    Only Identity/Bernoulli/RandK/TopK and Compose/Switch thereof enumerate."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    kind = spec.kind
    if kind == IDENTITY:
        yield 1.0, x.copy(), bit_cost(spec, d)
    elif kind == TOPK:
        k = spec.resolved_k(d)
        order = np.argsort(-np.abs(x), kind="stable")
        out = np.zeros(d)
        out[order[:k]] = x[order[:k]]
        yield 1.0, out, bit_cost(spec, d)
    elif kind == BERNOULLI:
        yield spec.p, x / spec.p, bit_cost(spec, d, {"keep": True})
        if spec.p < 1.0:
            yield 1.0 - spec.p, np.zeros(d), bit_cost(spec, d, {"keep": False})
    elif kind == RANDK:
        k = spec.resolved_k(d)
        total = math.comb(d, k)
        for support in itertools.combinations(range(d), k):
            out = np.zeros(d)
            out[list(support)] = x[list(support)] * (d / k)
            yield 1.0 / total, out, bit_cost(spec, d)
    elif kind == SWITCH:
        for prob, out, bits in enumerate_outcomes(spec.first, x):
            if spec.p > 0:
                yield spec.p * prob, out, 1 + bits
        for prob, out, bits in enumerate_outcomes(spec.second, x):
            if spec.p < 1:
                yield (1.0 - spec.p) * prob, out, 1 + bits
    elif kind == COMPOSE:
        for p_in, mid, _ in enumerate_outcomes(spec.second, x):
            for p_out, out, bits in enumerate_outcomes(spec.first, mid):
                yield p_in * p_out, out, bits
    else:
        raise NotEnumerable(f"{kind} randomness is not enumerable")


def exact_expectation(spec: CompressorSpec, x: np.ndarray) -> np.ndarray:
    ex = np.zeros_like(np.asarray(x, dtype=np.float64))
    for prob, out, _ in enumerate_outcomes(spec, x):
        ex += prob * out
    return ex


def unbiasedness_certificate(spec: CompressorSpec, d: int, trials: int = 10_000,
                             rng: Optional[np.random.Generator] = None,
                             exhaustive: bool = False) -> dict:
    """Check E[C(x)] = x at 5 random points. Exhaustive mode enumerates the
    support; otherwise a Monte-Carlo mean is compared against its 4-sigma bound."""
    if not spec.unbiased:
        raise CompressorError("certificate requested for a biased compressor")
    rng = rng if rng is not None else np.random.default_rng(0)
    max_dev = 0.0
    sigma_bound = 0.0
    for _ in range(5):
        x = rng.normal(size=d)
        if exhaustive:
            dev = float(np.max(np.abs(exact_expectation(spec, x) - x)))
            max_dev = max(max_dev, dev)
            continue
        draws = np.empty((trials, d))
        for t in range(trials):
            draws[t] = compress(spec, x, rng).values
        mean = draws.mean(axis=0)
        sigma = draws.std(axis=0, ddof=1)
        max_dev = max(max_dev, float(np.max(np.abs(mean - x))))
        sigma_bound = max(sigma_bound, 4.0 * float(np.max(sigma)) / math.sqrt(trials))
    return {"max_abs_dev": max_dev, "sigma_bound": sigma_bound,
            "mode": "exhaustive" if exhaustive else "monte-carlo"}

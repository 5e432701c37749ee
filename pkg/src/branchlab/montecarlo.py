"""Counter-based simulation of the branching chain and its conditioned twin.

Determinism contract: every uniform consumed anywhere is addressed by
(seed, domain tag, replica id, position), so results are reproducible
across runs, machines, and any partition of the replica range. Replica r
of a split run (replica_offset=r, reps=1) produces byte-identical output
to replica r of a monolithic run. Merging partial results re-sorts by
replica id, which makes the merge associative and order-free.

The generator is Philox4x64-10, implemented here directly on numpy uint64
lanes so that thousands of independently keyed streams can be evaluated in
one vectorized call at arbitrary counter offsets. numpy's own Philox
exposes a single stream per BitGenerator instance, which would force a
Python-level loop over replicas; the tests pin this implementation against
numpy's, bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .offspring import model_constants

__all__ = [
    "stream_key",
    "philox4",
    "uniforms_for_key",
    "AliasTable",
    "GWResult",
    "simulate_gw",
    "QRowSampler",
    "QResult",
    "simulate_q",
    "merge_results",
    "EnsembleStats",
    "ks_distance",
    "empirical_transform",
    "SimulationConfig",
]

_MASK = (1 << 64) - 1
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_SHIFT32 = np.uint64(32)
_MASK32 = np.uint64(0xFFFFFFFF)

TAG_GW = 1
TAG_Q = 2


def _sm64(x):
    # splitmix64 finalizer on python ints, used only for key derivation
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(seed, tag, replica):
    """(k0, k1) for one replica's stream within a tagged domain."""
    base = _sm64((seed & _MASK) ^ _sm64(tag))
    k0 = _sm64(base ^ ((replica * 0x9E3779B97F4A7C15 + 1) & _MASK))
    k1 = _sm64(k0 ^ 0xBB67AE8584CAA73B)
    return k0, k1


def _mul_hi_lo(a, b):
    # full 64x64 -> 128 product via 32-bit limbs; low half is the wrapping product
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    carry = ((lo_lo >> _SHIFT32) + (hi_lo & _MASK32) + (lo_hi & _MASK32)) >> _SHIFT32
    hi = a_hi * b_hi + (hi_lo >> _SHIFT32) + (lo_hi >> _SHIFT32) + carry
    return hi, a * b


def philox4(counter, key):
    """Philox4x64-10 block function.

    counter: uint64 array (..., 4); key: uint64 array (..., 2). Returns the
    (..., 4) output block. Broadcasting over leading axes is the caller's
    job; shapes are taken as given.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    x0 = counter[..., 0].copy()
    x1 = counter[..., 1].copy()
    x2 = counter[..., 2].copy()
    x3 = counter[..., 3].copy()
    k0 = key[..., 0].copy()
    k1 = key[..., 1].copy()
    with np.errstate(over="ignore"):
        for _ in range(10):
            hi0, lo0 = _mul_hi_lo(_M0, x0)
            hi1, lo1 = _mul_hi_lo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return np.stack([x0, x1, x2, x3], axis=-1)


def _to_uniforms(words):
    # 53-bit mantissa convention, u in [0, 1)
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def uniforms_for_key(k0, k1, start_block, n_blocks):
    """4*n_blocks uniforms for a single stream, blocks [start, start+n)."""
    ctr = np.zeros((n_blocks, 4), dtype=np.uint64)
    ctr[:, 0] = np.arange(start_block, start_block + n_blocks, dtype=np.uint64)
    key = np.empty((n_blocks, 2), dtype=np.uint64)
    key[:, 0] = np.uint64(k0)
    key[:, 1] = np.uint64(k1)
    return _to_uniforms(philox4(ctr, key)).reshape(-1)


def _uniform_block_multi(key, block):
    """One 4-lane block per stream at a common counter value: (reps, 4)."""
    reps = key.shape[0]
    ctr = np.zeros((reps, 4), dtype=np.uint64)
    ctr[:, 0] = np.uint64(block)
    return _to_uniforms(philox4(ctr, key))


class AliasTable:
    """Walker/Vose alias sampler; two uniforms per draw."""

    def __init__(self, pmf):
        p = np.asarray(pmf, dtype=np.float64)
        if p.ndim != 1 or len(p) == 0 or np.any(p < 0):
            raise ValueError("pmf must be a nonnegative vector")
        p = p / p.sum()
        k = len(p)
        self.k = k
        self.prob = np.ones(k)
        self.alias = np.arange(k, dtype=np.int64)
        scaled = p * k
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        # leftovers keep prob 1 (self-alias); rounding puts them here

    def sample(self, u_index, u_flip):
        idx = np.minimum((u_index * self.k).astype(np.int64), self.k - 1)
        return np.where(u_flip < self.prob[idx], idx, self.alias[idx])


@dataclass
class GWResult:
    n: int
    i0: int
    replica_ids: np.ndarray
    z: np.ndarray
    extinction_time: np.ndarray  # first generation with Z=0, else -1
    truncated: np.ndarray
    z_at: dict = field(default_factory=dict)

    def extinct_fraction(self):
        return float(np.mean(self.extinction_time >= 0))


def simulate_gw(law, n, reps, seed, i0=1, cap=10 ** 6, checkpoints=(),
                replica_offset=0):
    """Forward simulation of the population chain.

    A replica whose population exceeds cap is frozen where it stands and
    flagged; with supercritical laws pick n and cap so that the expected
    size i0 * mean^n stays well under cap (see SimulationConfig).
    """
    alias = AliasTable(law.pmf)
    cp = sorted(set(int(g) for g in checkpoints if 0 <= int(g) <= n))
    cpset = set(cp)
    ids = np.arange(replica_offset, replica_offset + reps, dtype=np.int64)
    z = np.empty(reps, dtype=np.int64)
    ext = np.full(reps, -1, dtype=np.int64)
    trunc = np.zeros(reps, dtype=bool)
    z_at = {g: np.empty(reps, dtype=np.int64) for g in cp}

    for r in range(reps):
        k0, k1 = stream_key(seed, TAG_GW, int(ids[r]))
        pos = 0
        pop = int(i0)
        rec = {}
        for t in range(n):
            if t in cpset:
                rec[t] = pop
            if pop == 0:
                ext[r] = t
                break
            if pop > cap:
                trunc[r] = True
                break
            nblk = (2 * pop + 3) // 4
            u = uniforms_for_key(k0, k1, pos, nblk)
            pos += nblk
            off = alias.sample(u[0:2 * pop:2], u[1:2 * pop:2])
            pop = int(off.sum())
        else:
            if pop == 0:
                ext[r] = n
        # an early exit leaves pop at 0 (extinct) or at the frozen value
        for g in cp:
            z_at[g][r] = rec.get(g, pop)
        z[r] = pop
    return GWResult(n=n, i0=i0, replica_ids=ids, z=z, extinction_time=ext,
                    truncated=trunc, z_at=z_at)


class QRowSampler:
    """Windowed one-step rows of the conditioned chain, built incrementally.

    Row i is the (i-1)-fold dual-law convolution against the size-biased
    first factor. Each extension trims a cumulative 1e-18 from both ends;
    the trimmed mass is inherited by children and reported, so the sampler
    never silently loses more than it says.
    """

    TRIM = 1e-18
    MAX_ENTRIES = 30_000_000

    def __init__(self, law):
        dual = law.conjugate()
        self.p_hat = np.asarray(dual.pmf, dtype=np.float64)
        k = np.arange(len(self.p_hat), dtype=np.float64)
        yb = k * self.p_hat
        self.ybar = yb / yb.sum()
        self.rows = {}  # i -> (lo, cdf, trimmed)
        self._last_pmf = None
        self._last_i = 0
        self._last_lo = 0
        self._last_trim = 0.0
        self._entries = 0

    def _trim_window(self, pmf, lo):
        c = np.cumsum(pmf)
        total = c[-1]
        i0 = int(np.searchsorted(c, self.TRIM))
        i1 = int(np.searchsorted(c, total - self.TRIM))
        i1 = min(i1, len(pmf) - 1)
        cut = (c[i0 - 1] if i0 > 0 else 0.0) + (total - c[i1])
        return pmf[i0:i1 + 1], lo + i0, cut

    def _store(self, i, pmf, lo, trimmed):
        cdf = np.cumsum(pmf)
        self.rows[i] = (lo, cdf, trimmed)
        self._entries += len(cdf)
        if self._entries > self.MAX_ENTRIES:
            raise RuntimeError(
                "row cache exceeded %d entries; state space too large for "
                "windowed rows" % self.MAX_ENTRIES)
        self._last_pmf = pmf
        self._last_i = i
        self._last_lo = lo
        self._last_trim = trimmed

    def row(self, i):
        if i < 1:
            raise ValueError("conditioned chain lives on {1, 2, ...}")
        got = self.rows.get(i)
        if got is not None:
            return got
        if self._last_pmf is None:
            pmf, lo, cut = self._trim_window(self.ybar.copy(), 0)
            self._store(1, pmf, lo, cut)
            if i == 1:
                return self.rows[1]
        while self._last_i < i:
            conv = np.convolve(self._last_pmf, self.p_hat)
            pmf, lo, cut = self._trim_window(conv, self._last_lo)
            self._store(self._last_i + 1, pmf, lo, self._last_trim + cut)
        return self.rows[i]

    def max_trimmed(self):
        return max((t for (_, _, t) in self.rows.values()), default=0.0)


@dataclass
class QResult:
    n: int
    i0: int
    replica_ids: np.ndarray
    w: np.ndarray
    s: np.ndarray  # S_n = sum_{k<n} W_k, so S_1 = W_0 = i0
    truncated: np.ndarray
    w_at: dict = field(default_factory=dict)
    s_at: dict = field(default_factory=dict)
    trim_leak: float = 0.0


def simulate_q(law, n, reps, seed, i0=1, state_cap=10 ** 6, checkpoints=(),
               replica_offset=0, sampler=None):
    """Conditioned-chain simulation, one uniform per replica per step.

    All replicas advance in lockstep; each step groups replicas by current
    state and inverts the cached row CDF for each group. Replicas that pass
    state_cap are frozen and flagged.
    """
    if sampler is None:
        sampler = QRowSampler(law)
    cp = set(int(g) for g in checkpoints)
    ids = np.arange(replica_offset, replica_offset + reps, dtype=np.int64)
    key = np.empty((reps, 2), dtype=np.uint64)
    for r in range(reps):
        a, b = stream_key(seed, TAG_Q, int(ids[r]))
        key[r, 0] = a
        key[r, 1] = b
    w = np.full(reps, int(i0), dtype=np.int64)
    s = np.zeros(reps, dtype=np.int64)
    frozen = np.zeros(reps, dtype=bool)
    w_at, s_at = {}, {}
    cache = None
    for t in range(n):
        if t in cp:
            w_at[t] = w.copy()
            s_at[t] = s.copy()
        s += w
        lane = t & 3
        if lane == 0:
            cache = _uniform_block_multi(key, t >> 2)
        u = cache[:, lane]
        active = np.flatnonzero(~frozen)
        if len(active) == 0:
            continue
        order = active[np.argsort(w[active], kind="stable")]
        sw = w[order]
        uniq, starts = np.unique(sw, return_index=True)
        ends = np.append(starts[1:], len(sw))
        for v, a, b in zip(uniq, starts, ends):
            lo, cdf, _ = sampler.row(int(v))
            seg = order[a:b]
            j = np.searchsorted(cdf, u[seg] * cdf[-1], side="right")
            w[seg] = lo + np.minimum(j, len(cdf) - 1)
        newly = w > state_cap
        frozen |= newly
    if n in cp:
        w_at[n] = w.copy()
        s_at[n] = s.copy()
    return QResult(n=n, i0=i0, replica_ids=ids, w=w, s=s, truncated=frozen,
                   w_at=w_at, s_at=s_at, trim_leak=sampler.max_trimmed())


def merge_results(parts):
    """Merge partial GWResult/QResult runs into canonical replica order.

    The output is independent of how the replica range was partitioned.
    """
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    ids = np.concatenate([p.replica_ids for p in parts])
    order = np.argsort(ids, kind="stable")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("overlapping replica ids")

    def cat(name):
        return np.concatenate([getattr(p, name) for p in parts])[order]

    def cat_dict(name):
        keys = set()
        for p in parts:
            keys |= set(getattr(p, name).keys())
        out = {}
        for g in sorted(keys):
            if not all(g in getattr(p, name) for p in parts):
                raise ValueError("checkpoint %d missing from a part" % g)
            out[g] = np.concatenate([getattr(p, name)[g] for p in parts])[order]
        return out

    if isinstance(first, QResult):
        return QResult(n=first.n, i0=first.i0, replica_ids=ids[order],
                       w=cat("w"), s=cat("s"), truncated=cat("truncated"),
                       w_at=cat_dict("w_at"), s_at=cat_dict("s_at"),
                       trim_leak=max(p.trim_leak for p in parts))
    return GWResult(n=first.n, i0=first.i0, replica_ids=ids[order],
                    z=cat("z"), extinction_time=cat("extinction_time"),
                    truncated=cat("truncated"), z_at=cat_dict("z_at"))


class EnsembleStats:
    """Replica-indexed scalar sample with an order-free merge."""

    def __init__(self, replica_ids, values):
        ids = np.asarray(replica_ids, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        order = np.argsort(ids, kind="stable")
        self.replica_ids = ids[order]
        self.values = vals[order]

    @classmethod
    def merge(cls, parts):
        ids = np.concatenate([p.replica_ids for p in parts])
        vals = np.concatenate([p.values for p in parts])
        if len(np.unique(ids)) != len(ids):
            raise ValueError("overlapping replica ids")
        return cls(ids, vals)

    @property
    def n(self):
        return len(self.values)

    def mean(self):
        return float(np.mean(self.values))

    def var(self):
        return float(np.var(self.values, ddof=1))

    def se(self):
        return math.sqrt(self.var() / self.n)


def ks_distance(values, cdf, min_n=1):
    """sup-norm distance between the empirical CDF of values and cdf."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    m = len(x)
    if m < min_n:
        raise ValueError("need at least %d samples" % min_n)
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def empirical_transform(values, theta):
    """(mean, standard error) of exp(-theta * value)."""
    v = np.exp(-theta * np.asarray(values, dtype=np.float64))
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


@dataclass
class SimulationConfig:
    """Validated bundle of simulation parameters for the CLI."""

    n: int
    reps: int
    seed: int
    i0: int = 1
    cap: int = 10 ** 6
    checkpoints: tuple = ()
    replica_offset: int = 0

    def validate(self, law, kind="gw"):
        if self.n < 1 or self.reps < 1 or self.i0 < 1:
            raise ValueError("n, reps and i0 must be positive")
        c = model_constants(law)
        if kind == "gw" and c.mean > 1.0:
            expect = self.i0 * c.mean ** self.n
            if expect > self.cap / 4:
                warnings.warn(
                    "expected population %.3g is within 4x of cap %d; "
                    "truncation likely" % (expect, self.cap))
        return self

"""Deterministic sampling and mask-alignment kernels.

Everything random in this library flows through one frozen generator so that
plans are byte-identical across runs, platforms, and the compiled/interpreted
split below. The generator is SplitMix64 (Steele et al.'s 64-bit mixer);
bounded draws use rejection sampling (draw until >= 2**64 mod n, return
u mod n), and sampling without replacement is a partial Fisher-Yates shuffle.
These choices are part of the mask-plan file format: bumping any of them
requires bumping the format version.

The alignment loop and the prefix shuffle are the only per-token sequential
hot paths, so both have a numba-compiled kernel plus a pure-Python twin with
identical draw-for-draw semantics. The twin is the fallback when numba is
unavailable and the cross-check in tests.

Frozen ordering rules the two implementations share:
  * neighbor visits: (r-1,c), (r+1,c), (r,c-1), (r,c+1), in-grid only;
  * initial candidate lists are built in ascending token index order;
  * removal is swap-with-last; insertions append.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Seedable 64-bit generator; the single source of randomness."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection; n must be positive."""
        threshold = ((1 << 64) - n) % n
        while True:
            u = self.next_u64()
            if u >= threshold:
                return u % n

    def choice(self, items):
        return items[self.randbelow(len(items))]


def _py_sample_prefix(n: int, k: int, rng: SplitMix64) -> np.ndarray:
    arr = list(range(n))
    for i in range(k):
        j = i + rng.randbelow(n - i)
        arr[i], arr[j] = arr[j], arr[i]
    return np.sort(np.asarray(arr[:k], dtype=np.int64))


def _py_align(masked, window, decoder, tdim, gh, gw, target, rng: SplitMix64) -> int:
    """Pure-Python alignment twin; mutates ``masked`` in place, returns steps."""
    plane = gh * gw
    n = tdim * plane
    masked_l = masked.tolist()
    window_l = window.tolist()
    decoder_l = decoder.tolist()

    mnc = [0] * n
    count = 0
    for tok in range(n):
        if masked_l[tok]:
            count += 1
            base = tok - tok % plane
            rc = tok - base
            r, c = rc // gw, rc % gw
            if r > 0:
                mnc[tok - gw] += 1
            if r + 1 < gh:
                mnc[tok + gw] += 1
            if c > 0:
                mnc[tok - 1] += 1
            if c + 1 < gw:
                mnc[tok + 1] += 1

    pos = [-1] * n
    cand: list[int] = []
    steps = 0

    if count < target:
        # Grow the masked set from the visible-set boundary.
        for tok in range(n):
            if not masked_l[tok] and mnc[tok] > 0:
                pos[tok] = len(cand)
                cand.append(tok)
        while count < target:
            if cand:
                j = rng.randbelow(len(cand))
                tok = cand[j]
                last = cand[-1]
                cand[j] = last
                pos[last] = j
                cand.pop()
                pos[tok] = -1
            else:
                visible = [i for i in range(n) if not masked_l[i]]
                tok = visible[rng.randbelow(len(visible))]
            masked_l[tok] = 1
            count += 1
            steps += 1
            base = tok - tok % plane
            rc = tok - base
            r, c = rc // gw, rc % gw
            for v in ((tok - gw) if r > 0 else -1,
                      (tok + gw) if r + 1 < gh else -1,
                      (tok - 1) if c > 0 else -1,
                      (tok + 1) if c + 1 < gw else -1):
                if v >= 0:
                    mnc[v] += 1
                    if not masked_l[v] and pos[v] < 0:
                        pos[v] = len(cand)
                        cand.append(v)
    elif count > target:
        # Shrink: prefer masked tokens touching a visible one, then masked
        # non-targets, then anything; the temporal window yields only in the
        # final tier.
        for tok in range(n):
            if masked_l[tok] and not window_l[tok]:
                base = tok - tok % plane
                rc = tok - base
                r, c = rc // gw, rc % gw
                deg = (r > 0) + (r + 1 < gh) + (c > 0) + (c + 1 < gw)
                if deg - mnc[tok] > 0:
                    pos[tok] = len(cand)
                    cand.append(tok)
        while count > target:
            if cand:
                j = rng.randbelow(len(cand))
                tok = cand[j]
                last = cand[-1]
                cand[j] = last
                pos[last] = j
                cand.pop()
                pos[tok] = -1
            else:
                pool = [i for i in range(n)
                        if masked_l[i] and not decoder_l[i] and not window_l[i]]
                if not pool:
                    pool = [i for i in range(n) if masked_l[i]]
                tok = pool[rng.randbelow(len(pool))]
            masked_l[tok] = 0
            count -= 1
            steps += 1
            base = tok - tok % plane
            rc = tok - base
            r, c = rc // gw, rc % gw
            for v in ((tok - gw) if r > 0 else -1,
                      (tok + gw) if r + 1 < gh else -1,
                      (tok - 1) if c > 0 else -1,
                      (tok + 1) if c + 1 < gw else -1):
                if v >= 0:
                    mnc[v] -= 1
                    if masked_l[v] and not window_l[v] and pos[v] < 0:
                        pos[v] = len(cand)
                        cand.append(v)

    masked[:] = np.asarray(masked_l, dtype=np.uint8)
    return steps


try:
    from numba import njit

    _U_GAMMA = np.uint64(_GAMMA)
    _U_MIX1 = np.uint64(_MIX1)
    _U_MIX2 = np.uint64(_MIX2)
    _U30 = np.uint64(30)
    _U27 = np.uint64(27)
    _U31 = np.uint64(31)
    _U0 = np.uint64(0)

    @njit(cache=True)
    def _nb_next(st):
        st[0] = st[0] + _U_GAMMA
        z = st[0]
        z = (z ^ (z >> _U30)) * _U_MIX1
        z = (z ^ (z >> _U27)) * _U_MIX2
        return z ^ (z >> _U31)

    @njit(cache=True)
    def _nb_randbelow(st, n):
        un = np.uint64(n)
        threshold = (_U0 - un) % un
        while True:
            u = _nb_next(st)
            if u >= threshold:
                return np.int64(u % un)

    @njit(cache=True)
    def _nb_sample_prefix(n, k, st):
        arr = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + _nb_randbelow(st, n - i)
            tmp = arr[i]
            arr[i] = arr[j]
            arr[j] = tmp
        return np.sort(arr[:k])

    @njit(cache=True)
    def _nb_align(masked, window, decoder, tdim, gh, gw, target, st):
        plane = gh * gw
        n = tdim * plane
        mnc = np.zeros(n, dtype=np.int8)
        count = 0
        for tok in range(n):
            if masked[tok]:
                count += 1
                rc = tok % plane
                r = rc // gw
                c = rc % gw
                if r > 0:
                    mnc[tok - gw] += 1
                if r + 1 < gh:
                    mnc[tok + gw] += 1
                if c > 0:
                    mnc[tok - 1] += 1
                if c + 1 < gw:
                    mnc[tok + 1] += 1

        pos = np.full(n, -1, dtype=np.int64)
        cand = np.empty(n, dtype=np.int64)
        cand_len = 0
        scratch = np.empty(n, dtype=np.int64)
        steps = 0

        if count < target:
            for tok in range(n):
                if masked[tok] == 0 and mnc[tok] > 0:
                    pos[tok] = cand_len
                    cand[cand_len] = tok
                    cand_len += 1
            while count < target:
                if cand_len > 0:
                    j = _nb_randbelow(st, cand_len)
                    tok = cand[j]
                    last = cand[cand_len - 1]
                    cand[j] = last
                    pos[last] = j
                    cand_len -= 1
                    pos[tok] = -1
                else:
                    m = 0
                    for i in range(n):
                        if masked[i] == 0:
                            scratch[m] = i
                            m += 1
                    tok = scratch[_nb_randbelow(st, m)]
                masked[tok] = 1
                count += 1
                steps += 1
                rc = tok % plane
                r = rc // gw
                c = rc % gw
                for side in range(4):
                    if side == 0:
                        v = tok - gw if r > 0 else -1
                    elif side == 1:
                        v = tok + gw if r + 1 < gh else -1
                    elif side == 2:
                        v = tok - 1 if c > 0 else -1
                    else:
                        v = tok + 1 if c + 1 < gw else -1
                    if v >= 0:
                        mnc[v] += 1
                        if masked[v] == 0 and pos[v] < 0:
                            pos[v] = cand_len
                            cand[cand_len] = v
                            cand_len += 1
        elif count > target:
            for tok in range(n):
                if masked[tok] == 1 and window[tok] == 0:
                    rc = tok % plane
                    r = rc // gw
                    c = rc % gw
                    deg = 0
                    if r > 0:
                        deg += 1
                    if r + 1 < gh:
                        deg += 1
                    if c > 0:
                        deg += 1
                    if c + 1 < gw:
                        deg += 1
                    if deg - mnc[tok] > 0:
                        pos[tok] = cand_len
                        cand[cand_len] = tok
                        cand_len += 1
            while count > target:
                if cand_len > 0:
                    j = _nb_randbelow(st, cand_len)
                    tok = cand[j]
                    last = cand[cand_len - 1]
                    cand[j] = last
                    pos[last] = j
                    cand_len -= 1
                    pos[tok] = -1
                else:
                    m = 0
                    for i in range(n):
                        if masked[i] == 1 and decoder[i] == 0 and window[i] == 0:
                            scratch[m] = i
                            m += 1
                    if m == 0:
                        for i in range(n):
                            if masked[i] == 1:
                                scratch[m] = i
                                m += 1
                    tok = scratch[_nb_randbelow(st, m)]
                masked[tok] = 0
                count -= 1
                steps += 1
                rc = tok % plane
                r = rc // gw
                c = rc % gw
                for side in range(4):
                    if side == 0:
                        v = tok - gw if r > 0 else -1
                    elif side == 1:
                        v = tok + gw if r + 1 < gh else -1
                    elif side == 2:
                        v = tok - 1 if c > 0 else -1
                    else:
                        v = tok + 1 if c + 1 < gw else -1
                    if v >= 0:
                        mnc[v] -= 1
                        if masked[v] == 1 and window[v] == 0 and pos[v] < 0:
                            pos[v] = cand_len
                            cand[cand_len] = v
                            cand_len += 1
        return steps

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def sample_without_replacement(n: int, k: int, rng: SplitMix64,
                               force_python: bool = False) -> np.ndarray:
    """Draw k distinct integers from [0, n), returned sorted ascending."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot sample {k} of {n}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if HAVE_NUMBA and not force_python:
        st = np.array([rng.state], dtype=np.uint64)
        out = _nb_sample_prefix(n, k, st)
        rng.state = int(st[0])
        return out
    return _py_sample_prefix(n, k, rng)


def align_masked_array(masked: np.ndarray, window: np.ndarray,
                       decoder: np.ndarray, dims: tuple[int, int, int],
                       target: int, rng: SplitMix64,
                       force_python: bool = False) -> int:
    """Move |masked| to ``target`` one boundary token at a time.

    Mutates ``masked`` (uint8 flags, token-index order) in place and returns
    the number of single-token steps taken (== abs(initial - target)).
    """
    tdim, gh, gw = dims
    if HAVE_NUMBA and not force_python:
        st = np.array([rng.state], dtype=np.uint64)
        steps = int(_nb_align(masked, window, decoder, tdim, gh, gw, target, st))
        rng.state = int(st[0])
        return steps
    return _py_align(masked, window, decoder, tdim, gh, gw, target, rng)

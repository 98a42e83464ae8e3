"""Unbiased minimum-distortion rank-r sampling of a matrix.

The matrix is rotated to its singular basis.  The leading ``k`` ("heavy")
singular components are kept in every draw; of the remaining light components
exactly ``r - k`` are picked by systematic sampling with inclusion
probabilities proportional to their singular values, and each picked component
is set to the common fill value ``c``.  Since ``p_i * c = d_i`` the draw is
unbiased, and it attains the smallest possible expected squared Frobenius
error among all unbiased rank-r approximations.

Indices are zero-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DEFAULT_RANK_TOL, SvdFactors, as_matrix, svd

BOUNDARY_TOL = 1e-9


class SamplerError(RuntimeError):
    """Internal consistency failure (a bug, not a user error)."""


def _as_spectrum(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError("singular values must be one-dimensional")
    if d.size and (not np.all(np.isfinite(d)) or np.any(d <= 0)):
        raise ValueError("singular values must be finite and strictly positive")
    if np.any(np.diff(d) > 0):
        raise ValueError("singular values must be sorted in descending order")
    return d


def _tail_sums(d: np.ndarray) -> np.ndarray:
    # tail[i] = d[i] + d[i+1] + ... ; tail[N] = 0
    tail = np.zeros(d.size + 1)
    tail[:-1] = np.cumsum(d[::-1])[::-1]
    return tail


def heavy_split(d, r: int, start: int = 0) -> int:
    """Number of heavy components for spectrum ``d`` and rank budget ``r``.

    Returns the smallest ``k >= start`` with ``(r - k) * d[k] < sum(d[k:])``, or
    ``min(r, len(d))`` if there is none.  Equality counts as heavy.
    """
    d = _as_spectrum(d)
    if r < 1:
        raise ValueError("rank budget must be at least 1")
    tail = _tail_sums(d)
    stop = min(r, d.size)
    for k in range(start, stop):
        if (r - k) * d[k] < tail[k]:
            return k
    return stop


@dataclass(frozen=True)
class SamplingPlan:
    """Precomputed state of one sampler: heavy count, fill value, probabilities.

    ``p`` and ``boundaries`` cover the light indices ``k .. N-1`` only.  When
    there is no light part (``k == N``) they are empty and ``c``/``scale`` are
    ``None``.
    """

    d: np.ndarray
    r: int
    k: int
    c: float | None
    scale: float | None
    p: np.ndarray
    boundaries: np.ndarray

    def __post_init__(self):
        for arr in (self.d, self.p, self.boundaries):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return int(self.d.size)

    @property
    def n_light(self) -> int:
        return self.n - self.k

    @property
    def n_pick(self) -> int:
        """How many light components each draw keeps (``r - k``)."""
        return 0 if self.is_deterministic else self.r - self.k

    @property
    def is_deterministic(self) -> bool:
        return self.k >= self.n

    @property
    def light_indices(self) -> np.ndarray:
        return np.arange(self.k, self.n)

    def values(self, index_set) -> np.ndarray:
        """Diagonal of the sampled matrix in the singular basis for ``index_set``."""
        q = np.zeros(self.n)
        q[: self.k] = self.d[: self.k]
        if len(index_set):
            q[np.asarray(index_set, dtype=np.intp)] = self.c
        return q


def _boundaries(lengths: np.ndarray, total: int) -> np.ndarray:
    b = np.cumsum(lengths)
    if abs(b[-1] - total) > BOUNDARY_TOL:
        raise SamplerError(f"segment lengths sum to {b[-1]!r}, expected {total}")
    b[-1] = total
    return b


def build_plan(d, r: int) -> SamplingPlan:
    d = _as_spectrum(d)
    k = heavy_split(d, r)
    n = d.size
    if k >= n:
        empty = np.zeros(0)
        return SamplingPlan(d=d.copy(), r=r, k=k, c=None, scale=None, p=empty, boundaries=empty.copy())
    light_sum = _tail_sums(d)[k]
    scale = (r - k) / light_sum
    c = light_sum / (r - k)
    p = scale * d[k:]
    if p[0] > 1.0:
        raise SamplerError(f"light inclusion probability {p[0]!r} exceeds one")
    if k >= 1 and d[k - 1] < c * (1 - 1e-12):
        raise SamplerError("last heavy value is below the fill value")
    return SamplingPlan(
        d=d.copy(), r=r, k=k, c=float(c), scale=float(scale), p=p,
        boundaries=_boundaries(p, r - k),
    )


def systematic_select(plan: SamplingPlan, s: float, order=None) -> tuple[int, ...]:
    """Indices picked by the uniform offset ``s`` in ``[0, 1)``.

    Segments of length ``p_i`` tile ``[0, r - k]``; light index ``i`` is picked
    when one of the points ``s, s + 1, ..., s + r - k - 1`` falls in its segment
    ``(b_{i-1}, b_i]``.  ``order`` optionally permutes the segment layout.
    """
    if plan.is_deterministic:
        return ()
    if order is None:
        segs = plan.light_indices
        bounds = plan.boundaries
    else:
        segs = plan.light_indices[np.asarray(order)]
        bounds = _boundaries(plan.p[np.asarray(order)], plan.n_pick)
    picked = []
    target = s
    for i, b in zip(segs, bounds):
        if b >= target:
            picked.append(int(i))
            if len(picked) == plan.n_pick:
                break
            target = s + len(picked)
            if b >= target:
                raise SamplerError(f"segment {i} hit twice")
    if len(picked) != plan.n_pick:
        raise SamplerError(f"picked {len(picked)} indices, expected {plan.n_pick}")
    return tuple(sorted(picked))


def systematic_select_many(plan: SamplingPlan, s: np.ndarray, orders=None) -> np.ndarray:
    """Vectorised :func:`systematic_select` over an array of offsets.

    Returns a boolean mask of shape ``(len(s), N - k)``.  ``orders``, when given,
    holds one permutation of the light segments per offset.
    """
    s = np.asarray(s, dtype=np.float64)
    m = s.size
    mask = np.zeros((m, plan.n_light), dtype=bool)
    if plan.is_deterministic:
        return mask
    if orders is None:
        segs = np.broadcast_to(np.arange(plan.n_light), (m, plan.n_light))
        bounds = np.broadcast_to(plan.boundaries, (m, plan.n_light))
    else:
        segs = np.asarray(orders)
        bounds = np.cumsum(plan.p[segs], axis=1)
        if np.any(np.abs(bounds[:, -1] - plan.n_pick) > BOUNDARY_TOL):
            raise SamplerError("permuted segment lengths do not sum to r - k")
        bounds[:, -1] = plan.n_pick
    rows = np.arange(m)
    count = np.zeros(m, dtype=np.int64)
    target = s.copy()
    for j in range(plan.n_light):
        b = bounds[:, j]
        hit = (b >= target) & (count < plan.n_pick)
        mask[rows[hit], segs[hit, j]] = True
        count += hit
        target = np.where(hit, s + count, target)
        if np.any(hit & (count < plan.n_pick) & (b >= target)):
            raise SamplerError("segment hit twice")
    if np.any(count != plan.n_pick):
        raise SamplerError("systematic selection returned the wrong number of indices")
    return mask


def draw_uniform(rng: np.random.Generator) -> float:
    """One uniform offset in ``[0, 1)`` with 53 random bits."""
    return float(rng.random())


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for the child stream ``stream`` of a master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=stream)))


@dataclass(frozen=True)
class LowRankSample:
    index_set: tuple[int, ...]
    diag_values: np.ndarray
    uniform_draw: float | None = None
    order: tuple[int, ...] | None = field(default=None, repr=False)


def assemble_sample(plan: SamplingPlan, index_set, s: float | None = None, order=None) -> LowRankSample:
    index_set = tuple(sorted(int(i) for i in index_set))
    if len(index_set) != plan.n_pick or len(set(index_set)) != len(index_set):
        raise SamplerError(f"index set {index_set} must hold {plan.n_pick} distinct indices")
    if any(i < plan.k or i >= plan.n for i in index_set):
        raise SamplerError(f"index set {index_set} contains non-light indices")
    values = plan.values(index_set)
    values.flags.writeable = False
    return LowRankSample(
        index_set=index_set, diag_values=values, uniform_draw=s,
        order=None if order is None else tuple(int(o) for o in order),
    )


def compose(factors: SvdFactors, diag_values: np.ndarray) -> np.ndarray:
    """``U diag(q) V*`` using only the components with nonzero ``q``."""
    keep = np.flatnonzero(diag_values)
    u = factors.u[:, keep]
    v = factors.v[:, keep]
    return (u * diag_values[keep]) @ v.conj().T


def draw_sample(plan: SamplingPlan, rng: np.random.Generator, permute_segments: bool = False) -> LowRankSample:
    if plan.is_deterministic:
        return assemble_sample(plan, ())
    order = rng.permutation(plan.n_light) if permute_segments else None
    s = draw_uniform(rng)
    return assemble_sample(plan, systematic_select(plan, s, order), s, order)


class LowRankSampler:
    """Sampler bound to one matrix; the SVD and plan are computed once.

    Parameters
    ----------
    p : array_like
        Target matrix (real or complex).
    r : int
        Rank budget, at least 1.
    factors : SvdFactors, optional
        Precomputed factors of ``p``; skips the SVD.
    permute_segments : bool
        Shuffle the segment layout before every draw.
    """

    def __init__(self, p, r: int, *, factors: SvdFactors | None = None,
                 permute_segments: bool = False, rank_tol: float = DEFAULT_RANK_TOL):
        if r < 1:
            raise ValueError("rank budget must be at least 1")
        self.p = as_matrix(p)
        self.r = r
        self.factors = svd(self.p, rank_tol) if factors is None else factors
        if self.factors.shape != self.p.shape:
            raise ValueError("factors do not match the matrix shape")
        self.plan = build_plan(self.factors.nonzero, r)
        self.permute_segments = permute_segments

    @property
    def is_deterministic(self) -> bool:
        return self.plan.is_deterministic

    def compose(self, sample: LowRankSample) -> np.ndarray:
        if self.is_deterministic:
            return self.p.copy()
        q = compose(self.factors, sample.diag_values)
        return q.real.copy() if not np.iscomplexobj(self.p) else q

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, LowRankSample]:
        sample = draw_sample(self.plan, rng, self.permute_segments)
        return self.compose(sample), sample

    def draw_many(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``count`` samples at once.

        Returns the stacked matrices ``(count, n, m)`` and the diagonal values
        ``(count, N)`` in the singular basis.
        """
        plan = self.plan
        values = np.tile(plan.values(()), (count, 1))
        if self.is_deterministic:
            return np.broadcast_to(self.p, (count,) + self.p.shape).copy(), values
        if self.permute_segments:
            orders = np.stack([rng.permutation(plan.n_light) for _ in range(count)])
        else:
            orders = None
        s = rng.random(count)
        mask = systematic_select_many(plan, s, orders)
        values[:, plan.k:] = np.where(mask, plan.c, 0.0)
        n_keep = min(self.r, plan.n)
        keep = np.argsort(values == 0, axis=1, kind="stable")[:, :n_keep]
        vals = np.take_along_axis(values, keep, axis=1)
        u = self.factors.u[:, keep].transpose(1, 0, 2) * vals[:, None, :]
        v = self.factors.v[:, keep].transpose(1, 0, 2)
        q = u @ v.conj().transpose(0, 2, 1)
        if not np.iscomplexobj(self.p):
            q = q.real.copy()
        return q, values


def sample_low_rank(p, r: int, rng: np.random.Generator, *, factors: SvdFactors | None = None,
                    permute_segments: bool = False, rank_tol: float = DEFAULT_RANK_TOL):
    """Draw one unbiased rank-``r`` approximation of ``p``.

    Returns ``(Q, sample)`` where ``E[Q] = p`` and ``rank(Q) <= r``.  When ``r``
    is at least the numerical rank of ``p`` the result is ``p`` itself.
    """
    sampler = LowRankSampler(p, r, factors=factors, permute_segments=permute_segments,
                             rank_tol=rank_tol)
    return sampler.draw(rng)

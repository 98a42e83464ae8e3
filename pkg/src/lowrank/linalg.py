"""Dense matrix helpers, Frobenius geometry and a one-sided Jacobi SVD.

Matrices are plain 2-D numpy arrays (``float64`` or ``complex128``).  The SVD
is computed from scratch with one-sided (Hestenes) Jacobi rotations so that
small singular values are resolved to high relative accuracy and the output is
a deterministic function of the input bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SWEEP_TOL = 1e-14
MAX_SWEEPS = 60
DEFAULT_RANK_TOL = 1e-12


class SVDConvergenceError(np.linalg.LinAlgError):
    """Raised when the Jacobi sweeps fail to converge."""


def as_matrix(a, *, copy: bool = False) -> np.ndarray:
    """Validate ``a`` as a finite 2-D matrix and return it as float64/complex128."""
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        arr = arr.astype(np.complex128, copy=copy)
    else:
        arr = arr.astype(np.float64, copy=copy)
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def frobenius_norm_sq(a) -> float:
    """Sum of squared moduli of the entries of ``a``."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return float(np.sum(a.real**2) + np.sum(a.imag**2))
    return float(np.sum(np.square(a, dtype=np.float64)))


def frobenius_dist_sq(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return frobenius_norm_sq(a - b)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``P = U diag(s) V*``.

    ``u`` is ``n x p`` and ``v`` is ``m x p`` with ``p = min(n, m)``; both have
    orthonormal columns.  ``s`` is sorted descending and ``rank`` counts the
    singular values above ``rank_tol * s[0]``.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rank: int
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        for arr in (self.u, self.s, self.v):
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u.shape[0], self.v.shape[0])

    @property
    def nonzero(self) -> np.ndarray:
        """The leading ``rank`` singular values."""
        return self.s[: self.rank]

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        """Return square unitary ``U`` (n x n) and ``V`` (m x m)."""
        return _complete_basis(self.u), _complete_basis(self.v)


def _complete_basis(q: np.ndarray) -> np.ndarray:
    # Extend orthonormal columns to a square unitary, deterministically.
    n, p = q.shape
    if p == n:
        return q.copy()
    cols = [q[:, j] for j in range(p)]
    for e in range(n):
        if len(cols) == n:
            break
        x = np.zeros(n, dtype=q.dtype)
        x[e] = 1.0
        for _ in range(2):
            for c in cols:
                x = x - c * np.vdot(c, x)
        nrm = np.linalg.norm(x)
        if nrm > 0.5:
            cols.append(x / nrm)
    return np.stack(cols, axis=1)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Fixed tournament ordering: each round pairs every column exactly once,
    # and n-1 rounds (n even) cover every pair, giving one cyclic sweep.
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi_columns(at: np.ndarray, tol: float, max_sweeps: int):
    """Orthogonalise the rows of ``at`` (= columns of A) in place.

    Returns the accumulated right rotations as rows of ``vt`` (so ``V = vt.T``)
    and the number of sweeps used.
    """
    n = at.shape[0]
    vt = np.eye(n, dtype=at.dtype)
    rounds = _round_robin(n)
    is_complex = np.iscomplexobj(at)
    tiny = np.finfo(np.float64).tiny
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in rounds:
            ap = at[p]
            aq = at[q]
            if is_complex:
                alpha = np.sum(ap.real**2 + ap.imag**2, axis=1)
                beta = np.sum(aq.real**2 + aq.imag**2, axis=1)
            else:
                alpha = np.einsum("ij,ij->i", ap, ap)
                beta = np.einsum("ij,ij->i", aq, aq)
            gamma = np.einsum("ij,ij->i", ap.conj(), aq)
            g = np.abs(gamma)
            active = (g > tol * np.sqrt(alpha * beta)) & (g > tiny)
            if not active.any():
                continue
            rotated = True
            p, q = p[active], q[active]
            ap, aq = ap[active], aq[active]
            alpha, beta, gamma, g = alpha[active], beta[active], gamma[active], g[active]
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            # Rotate the phase out of gamma first so the 2x2 problem is real.
            phase = gamma / g
            sc = (s * phase)[:, None] if is_complex else (s * np.sign(gamma))[:, None]
            cc = c[:, None]
            at[p] = cc * ap - sc.conj() * aq if is_complex else cc * ap - sc * aq
            at[q] = sc * ap + cc * aq
            vp = vt[p]
            vq = vt[q]
            vt[p] = cc * vp - sc.conj() * vq if is_complex else cc * vp - sc * vq
            vt[q] = sc * vp + cc * vq
        if not rotated:
            return vt, sweep
    raise SVDConvergenceError(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")


def svd(
    p,
    rank_tol: float = DEFAULT_RANK_TOL,
    *,
    tol: float = SWEEP_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> SvdFactors:
    """Thin singular value decomposition by one-sided Jacobi.

    Parameters
    ----------
    p : array_like
        Finite real or complex ``n x m`` matrix.
    rank_tol : float
        Relative threshold defining the numerical rank.
    tol : float
        A pair of columns is rotated while ``|a_i^* a_j| > tol ||a_i|| ||a_j||``.
    max_sweeps : int
        Sweep cap; exceeding it raises :class:`SVDConvergenceError`.

    Returns
    -------
    SvdFactors
        Factors with singular values descending and each column of ``u`` having
        its largest-modulus entry real and non-negative.
    """
    a = as_matrix(p)
    n, m = a.shape
    if min(n, m) < 1:
        raise ValueError("matrix must have at least one row and one column")
    wide = m > n
    if wide:
        a = a.conj().T
        n, m = m, n
    # Work on rows of A^T so each column is contiguous in memory.
    at = np.array(a.T, order="C", copy=True)
    vt, _ = _jacobi_columns(at, tol, max_sweeps)

    s = np.linalg.norm(at, axis=1)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    at = at[order]
    v = vt[order].T
    rank = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0

    u = np.zeros((n, m), dtype=at.dtype)
    for j in range(m):
        if s[j] > 0:
            u[:, j] = at[j] / s[j]
    u = _fix_null_columns(u, rank)
    u, v = _fix_phase(u, v)

    if wide:
        u, v = v, u
    return SvdFactors(u=u, s=s, v=v, rank=rank, rank_tol=rank_tol)


def _fix_null_columns(u: np.ndarray, rank: int) -> np.ndarray:
    # Columns past the numerical rank are rounding noise; replace them by an
    # orthonormal completion of the range so U keeps orthonormal columns.
    n, p = u.shape
    if rank == p:
        return u
    basis = _complete_basis(u[:, :rank]) if rank else np.eye(n, dtype=u.dtype)
    out = u.copy()
    out[:, rank:] = basis[:, rank:p]
    return out


def _fix_phase(u: np.ndarray, v: np.ndarray):
    idx = np.argmax(np.abs(u), axis=0)
    lead = u[idx, np.arange(u.shape[1])]
    mag = np.abs(lead)
    phase = np.where(mag > 0, lead / np.where(mag > 0, mag, 1.0), 1.0)
    # u_j sigma v_j^* is unchanged when both columns share the same phase.
    return u * phase.conj(), v * phase.conj()


def reconstruct(f: SvdFactors) -> np.ndarray:
    """``U diag(s) V*``."""
    return (f.u * f.s) @ f.v.conj().T


def truncate_rank(f: SvdFactors, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (truncated SVD)."""
    if r < 0:
        raise ValueError("rank must be non-negative")
    r = min(r, f.s.size)
    return (f.u[:, :r] * f.s[:r]) @ f.v[:, :r].conj().T


def numerical_rank(a, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    return svd(a, rank_tol).rank

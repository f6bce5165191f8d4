"""Sparse dictionary learning on edge vectors: greedy pursuit coding plus
singular-pair atom updates.

The coding step is orthogonal matching pursuit with an exact least-squares
re-solve on the growing support. The dictionary update sweeps atoms
sequentially, each replaced by the leading singular pair of its restricted
error matrix (computed by power iteration on the smaller Gram matrix, never a
full SVD). Atoms that no column uses are replaced by the currently
worst-reconstructed data column.

Every step is guarded so the squared-error objective never increases:
fresh pursuit codes are kept only where they beat the previous iteration's
codes, singular-pair commits are skipped in the floating-point corner cases
where they would not improve the restricted error, and the between-iteration
atom re-seeding (which escapes misallocated dictionaries) is transactional,
committed only when re-coding the affected columns strictly lowers the
objective.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .connectome import EdgeVector, mat
from .errors import DimensionError
from .rng import substream

_RESIDUAL_TOL = 1e-12
_UNIT_TOL = 1e-10
_POWER_TOL = 1e-10
_POWER_MAX_ITER = 1000
_ATOM_MATCH_TOL = 1e-8


@dataclass
class Dictionary:
    """m x K matrix of unit-norm atoms (columns)."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim != 2:
            raise DimensionError(f"dictionary atoms must be 2-d, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("dictionary contains non-finite entries")
        norms = np.linalg.norm(a, axis=0)
        if np.max(np.abs(norms - 1.0)) > _UNIT_TOL:
            raise ValueError("dictionary atoms must have unit norm within 1e-10")
        self.atoms = a

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def K(self) -> int:
        return self.atoms.shape[1]


@dataclass
class SparseCodes:
    """K x n coefficient matrix, at most L nonzeros per column."""

    codes: np.ndarray
    L: int

    def __post_init__(self):
        c = np.asarray(self.codes, dtype=float)
        if c.ndim != 2:
            raise DimensionError(f"codes must be 2-d, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("codes contain non-finite entries")
        nnz = np.count_nonzero(c, axis=0)
        if np.any(nnz > self.L):
            worst = int(np.argmax(nnz))
            raise ValueError(
                f"column {worst} has {int(nnz[worst])} nonzeros, exceeding L={self.L}"
            )
        self.codes = c


@dataclass
class KsvdReport:
    objective_history: np.ndarray
    replaced_atoms: np.ndarray
    iterations_run: int


def _omp_single(atoms: np.ndarray, y: np.ndarray, L: int) -> np.ndarray:
    """Greedy pursuit on one target; assumes validated arguments."""
    K = atoms.shape[1]
    code = np.zeros(K)
    resid = y.astype(float, copy=True)
    support: list[int] = []
    coef = None
    for _ in range(L):
        if np.linalg.norm(resid) < _RESIDUAL_TOL:
            break
        corr = atoms.T @ resid
        if support:
            corr[support] = 0.0  # residual is already orthogonal to these, up to roundoff
        j = int(np.argmax(np.abs(corr)))
        if corr[j] == 0.0:
            break
        support.append(j)
        sub = atoms[:, support]
        # exact least squares on the current support; rank-deficient supports
        # fall back to the minimum-norm solution
        coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
        resid = y - sub @ coef
    if support:
        code[support] = coef
    return code


def omp(dictionary: Dictionary, y, L: int) -> np.ndarray:
    """Sparse code for one target vector: at most L atoms, exact LS on the support.

    Stops early once the residual norm drops below 1e-12. Returns a dense
    length-K vector.
    """
    target = np.asarray(y, dtype=float)
    if target.ndim != 1:
        raise DimensionError(f"target must be 1-d, got shape {target.shape}")
    if target.size != dictionary.m:
        raise DimensionError(
            f"target length {target.size} does not match atom length {dictionary.m}"
        )
    if not np.all(np.isfinite(target)):
        raise ValueError("target contains non-finite values")
    if not (1 <= L <= min(dictionary.K, dictionary.m)):
        raise ValueError(
            f"L must satisfy 1 <= L <= min(K={dictionary.K}, m={dictionary.m}), got {L}"
        )
    return _omp_single(dictionary.atoms, target, L)


def encode_all(dictionary: Dictionary, Y, L: int, parallel: bool = False) -> SparseCodes:
    """Code every column of Y independently; column order is preserved.

    Columns share no state, so the threaded path returns bit-identical codes
    to the sequential one.
    """
    data = np.asarray(Y, dtype=float)
    if data.ndim != 2:
        raise DimensionError(f"Y must be 2-d, got shape {data.shape}")
    if data.shape[0] != dictionary.m:
        raise DimensionError(
            f"Y rows ({data.shape[0]}) must match atom length ({dictionary.m})"
        )
    if not np.all(np.isfinite(data)):
        raise ValueError("Y contains non-finite values")
    if not (1 <= L <= min(dictionary.K, dictionary.m)):
        raise ValueError(
            f"L must satisfy 1 <= L <= min(K={dictionary.K}, m={dictionary.m}), got {L}"
        )
    n = data.shape[1]
    atoms = dictionary.atoms
    if parallel:
        with ThreadPoolExecutor() as pool:
            cols = list(pool.map(lambda i: _omp_single(atoms, data[:, i], L), range(n)))
    else:
        cols = [_omp_single(atoms, data[:, i], L) for i in range(n)]
    return SparseCodes(np.column_stack(cols) if cols else np.zeros((dictionary.K, 0)), L)


def _power_leading_eigvec(M: np.ndarray) -> np.ndarray:
    """Leading eigenvector of a PSD matrix by power iteration.

    Deterministic start: the largest-norm column of M. Stops when successive
    iterates agree within 1e-10 or after 1000 rounds.
    """
    norms = np.linalg.norm(M, axis=0)
    j = int(np.argmax(norms))
    if norms[j] == 0.0:
        v = np.zeros(M.shape[0])
        v[0] = 1.0
        return v
    v = M[:, j] / norms[j]
    for _ in range(_POWER_MAX_ITER):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        w /= nw
        done = np.linalg.norm(w - v) < _POWER_TOL
        v = w
        if done:
            break
    return v


def _leading_left_vector(E: np.ndarray):
    """Approximate leading left singular vector of E, or None when E is zero.

    Power iteration runs on the smaller of the two Gram matrices; the result
    is projected back through E so the returned vector is an exact image of a
    unit vector, which keeps the subsequent least-squares row update honest.
    """
    m, q = E.shape
    if q <= m:
        v = _power_leading_eigvec(E.T @ E)
        Ev = E @ v
        s = float(np.linalg.norm(Ev))
        if s == 0.0:
            return None
        return Ev / s
    u = _power_leading_eigvec(E @ E.T)
    if float(np.linalg.norm(E.T @ u)) == 0.0:
        return None
    return u


def _is_existing_atom(column: np.ndarray, atoms: np.ndarray) -> bool:
    norm = np.linalg.norm(column)
    if norm == 0.0:
        return True  # never usable as an atom
    overlap = np.abs(atoms.T @ (column / norm))
    return bool(np.max(overlap) > 1.0 - _ATOM_MATCH_TOL)


def _sign_fixed(atom: np.ndarray) -> np.ndarray:
    """Flip the atom so its largest-magnitude entry is positive."""
    top = int(np.argmax(np.abs(atom)))
    return -atom if atom[top] < 0 else atom


def _replacement_atom(Y, atoms, X, rng) -> np.ndarray:
    """Worst-reconstructed data column not already present as an atom.

    Ties in the residual norm break toward the lowest column index. If every
    column is degenerate or duplicated, fall back to a random unit vector so
    the sweep can always continue.
    """
    resid = np.sum((Y - atoms @ X) ** 2, axis=0)
    for i in np.argsort(-resid, kind="stable"):
        col = Y[:, i]
        if not _is_existing_atom(col, atoms):
            return _sign_fixed(col / np.linalg.norm(col))
    fallback = rng.standard_normal(Y.shape[0])
    return _sign_fixed(fallback / np.linalg.norm(fallback))


def _try_reseed(data: np.ndarray, atoms: np.ndarray, X: np.ndarray, k: int, L: int) -> bool:
    """Tentatively re-seed atom k at the worst-reconstructed data column.

    The swap is evaluated as a transaction: the columns whose codes use atom
    k (plus the re-seeding target itself) are re-coded against the candidate
    dictionary, and the change is committed only when their total squared
    error strictly drops. Columns outside that set carry a zero coefficient
    on atom k, so their residuals cannot move; the objective therefore never
    increases through re-seeding. Frees atoms stuck duplicating structure
    that fewer atoms already span. Returns True when committed.
    """
    resid = np.sum((data - atoms @ X) ** 2, axis=0)
    target = -1
    for i in np.argsort(-resid, kind="stable"):
        if not _is_existing_atom(data[:, i], atoms):
            target = int(i)
            break
    if target < 0:
        return False
    candidate = atoms.copy()
    candidate[:, k] = _sign_fixed(data[:, target] / np.linalg.norm(data[:, target]))
    affected = np.union1d(np.flatnonzero(X[k] != 0.0), [target])
    new_codes = np.column_stack(
        [_omp_single(candidate, data[:, i], L) for i in affected]
    )
    old_err = float(np.sum(resid[affected]))
    new_err = float(np.sum((data[:, affected] - candidate @ new_codes) ** 2))
    if new_err < old_err - 1e-12 * max(1.0, old_err):
        atoms[:, k] = candidate[:, k]
        X[:, affected] = new_codes
        return True
    return False


def _init_atoms(Y: np.ndarray, K: int, rng) -> np.ndarray:
    """K distinct data columns, sampled without replacement and normalized.

    Zero columns are never picked; if fewer than K usable columns exist, the
    remainder is filled with random unit vectors.
    """
    m, n = Y.shape
    norms = np.linalg.norm(Y, axis=0)
    usable = np.flatnonzero(norms > 0)
    take = min(K, usable.size)
    atoms = np.empty((m, K))
    if take:
        chosen = rng.choice(usable, size=take, replace=False)
        atoms[:, :take] = Y[:, chosen] / norms[chosen]
    for k in range(take, K):
        v = rng.standard_normal(m)
        atoms[:, k] = v / np.linalg.norm(v)
    return atoms


def ksvd(Y, K: int, L: int, iters: int = 30, seed: int = 0):
    """Alternate full-data pursuit coding with sequential singular-pair atom
    updates.

    For atom k with support columns Omega, the restricted error matrix is
    E_k = Y_Omega - D X_Omega + d_k x^k_Omega; its leading singular pair
    (found by power iteration) becomes the new atom and the new coefficients
    on Omega. The atom sign is fixed so its largest-magnitude entry is
    positive. Between iterations, each atom is tentatively re-seeded at the
    worst-reconstructed data column and the swap kept only when it strictly
    lowers the objective. Every step is guarded, so the recorded objective
    ||Y - D X||_F^2 (one entry after each full iteration) is nonincreasing.
    Returns (Dictionary, SparseCodes, KsvdReport).
    """
    data = np.asarray(Y, dtype=float)
    if data.ndim != 2:
        raise DimensionError(f"Y must be 2-d, got shape {data.shape}")
    m, n = data.shape
    if m < 2:
        raise ValueError(f"Y needs at least 2 rows, got {m}")
    if n < 1:
        raise ValueError("Y needs at least one column")
    if not np.all(np.isfinite(data)):
        raise ValueError("Y contains non-finite values")
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    if not (1 <= L <= min(K, m)):
        raise ValueError(f"L must satisfy 1 <= L <= min(K={K}, m={m}), got {L}")
    if not isinstance(iters, (int, np.integer)) or iters < 1:
        raise ValueError(f"iters must be a positive integer, got {iters!r}")
    if n < K:
        warnings.warn(
            f"fewer data columns ({n}) than atoms ({K}); the dictionary is underdetermined",
            stacklevel=2,
        )

    rng = substream(seed, 0)
    atoms = _init_atoms(data, K, rng)
    X = np.zeros((K, n))
    history = []
    replaced_per_iter = []
    for it in range(iters):
        replaced = 0
        if it > 0:
            for k in range(K):
                if _try_reseed(data, atoms, X, k, L):
                    replaced += 1
        # fresh pursuit codes, kept per column only where they beat the
        # previous codes against the current dictionary
        X_new = np.column_stack([_omp_single(atoms, data[:, i], L) for i in range(n)])
        keep = np.sum((data - atoms @ X) ** 2, axis=0) < np.sum(
            (data - atoms @ X_new) ** 2, axis=0
        )
        X_new[:, keep] = X[:, keep]
        X = X_new
        for k in range(K):
            omega = np.flatnonzero(X[k] != 0.0)
            if omega.size == 0:
                atoms[:, k] = _replacement_atom(data, atoms, X, rng)
                replaced += 1
                continue
            E = data[:, omega] - atoms @ X[:, omega] + np.outer(atoms[:, k], X[k, omega])
            u = _leading_left_vector(E)
            if u is None:
                atoms[:, k] = _replacement_atom(data, atoms, X, rng)
                X[k, omega] = 0.0
                replaced += 1
                continue
            x_new = E.T @ u
            err_old = float(np.sum((E - np.outer(atoms[:, k], X[k, omega])) ** 2))
            err_new = float(np.sum(E * E)) - float(x_new @ x_new)
            # an exact singular pair cannot lose to the old pair; skip the
            # commit in the floating-point corner cases where it would
            if err_new <= err_old + 1e-12 * max(1.0, err_old):
                top = int(np.argmax(np.abs(u)))
                if u[top] < 0:
                    u, x_new = -u, -x_new
                atoms[:, k] = u
                X[k, omega] = x_new
        history.append(float(np.sum((data - atoms @ X) ** 2)))
        replaced_per_iter.append(replaced)
    return (
        Dictionary(atoms.copy()),
        SparseCodes(X, L),
        KsvdReport(np.asarray(history), np.asarray(replaced_per_iter), int(iters)),
    )


def refine(residual_matrix, dictionary: Dictionary, code) -> np.ndarray:
    """Subtract the coded edge reconstruction: R - mat(D @ x).

    With a zero code this is the identity; with a perfect code the result is
    exactly zero off the diagonal.
    """
    R = np.asarray(getattr(residual_matrix, "matrix", residual_matrix), dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionError(f"residual matrix must be square, got shape {R.shape}")
    p = R.shape[0]
    expected = p * (p - 1) // 2
    if dictionary.m != expected:
        raise DimensionError(
            f"dictionary edge length {dictionary.m} does not match p={p} "
            f"(expected {expected})"
        )
    x = np.asarray(code, dtype=float)
    if x.ndim != 1 or x.size != dictionary.K:
        raise DimensionError(f"code must be a length-{dictionary.K} vector, got shape {x.shape}")
    return R - mat(EdgeVector(dictionary.atoms @ x, p))

"""Dense symmetric spectral kernel.

Leading eigenpairs by randomized Lanczos with restarts, full symmetric
decompositions, secular-equation solvers for rank-one updates with analytic
eigenvectors, characteristic polynomials of rank-one perturbations, matrix
exponentials, and spectral-gap smoothness constants.

All routines are pure functions of their inputs plus an explicit seeded
random stream, so they are safe to call concurrently.

Cost accounting: every leading eigenpair produced counts as one
"eigenvector unit" regardless of how many matrix-vector products it took;
a full decomposition (and hence a matrix exponential) counts as n units.
Raw matrix-vector product counts are reported separately on `EigPair`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpectralError",
    "LanczosConvergenceError",
    "NonsmoothPointError",
    "EigPair",
    "SpectralDecomp",
    "SecularProblem",
    "SecularRoot",
    "symmetrize",
    "check_symmetric",
    "load_matrix",
    "save_matrix",
    "full_eig",
    "lanczos_iteration_budget",
    "lanczos_leading",
    "secular_root",
    "secular_shifts_batch",
    "rank_one_leading",
    "char_poly_rank_one",
    "matrix_exponential",
    "local_lip_constant",
    "extremal_direction",
]

# Weights below this fraction of the total are deflated out of the secular
# equation: they are rounding noise and would otherwise create spurious poles.
_DEFLATE_REL = 1e-14


class SpectralError(Exception):
    """Base class for spectral kernel failures."""


class LanczosConvergenceError(SpectralError):
    """Lanczos failed to reach tolerance within its iteration and restart budget."""


class NonsmoothPointError(SpectralError):
    """Top eigenvalue is (numerically) multiple; gap-based quantities are undefined."""


def symmetrize(X):
    """Exact symmetrization (X + X^T) / 2."""
    X = np.asarray(X, dtype=float)
    return 0.5 * (X + X.T)


def check_symmetric(X, tol=1e-12):
    """Validate a square real matrix and return it exactly symmetrized.

    Rejects non-square shapes, non-finite entries, and asymmetry beyond
    ``tol * max(1, max|X|)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix entries must be finite")
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    asym = float(np.max(np.abs(X - X.T))) if X.size else 0.0
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric: max |X - X^T| = {asym:.3e}")
    return symmetrize(X)


def load_matrix(path, tol=1e-12):
    """Read a matrix from the plain-text format: line 1 holds n, then n rows
    of n whitespace-separated decimals. Symmetry is validated, then enforced
    exactly."""
    with open(path) as fh:
        raw = fh.read().split("\n")
    rows = [(i + 1, line.split()) for i, line in enumerate(raw) if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    lineno, head = rows[0]
    if len(head) != 1:
        raise ValueError(f"{path}:{lineno}: first line must hold the dimension alone")
    try:
        n = int(head[0])
    except ValueError:
        raise ValueError(f"{path}:{lineno}: dimension {head[0]!r} is not an integer") from None
    if n <= 0:
        raise ValueError(f"{path}:{lineno}: dimension must be positive")
    if len(rows) - 1 != n:
        raise ValueError(f"{path}: expected {n} matrix rows, found {len(rows) - 1}")
    data = np.empty((n, n))
    for i, (lineno, tokens) in enumerate(rows[1:]):
        if len(tokens) != n:
            raise ValueError(f"{path}:{lineno}: expected {n} values, found {len(tokens)}")
        try:
            data[i] = [float(t) for t in tokens]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
    return check_symmetric(data, tol=tol)


def save_matrix(path, X):
    """Write a matrix in the plain-text format with round-trip decimals."""
    X = check_symmetric(X)
    with open(path, "w") as fh:
        fh.write(f"{X.shape[0]}\n")
        for row in X:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


@dataclass
class EigPair:
    """A leading eigenpair with its cost in eigenvector units.

    `vector` is unit norm with its first nonzero coordinate positive.
    `matvecs` records raw matrix-vector products (zero on analytic paths).
    `degenerate` marks rank-one updates whose vector was orthogonal to the
    leading eigenspace of the base matrix.
    """

    value: float
    vector: np.ndarray
    cost_eigvecs: float = 1.0
    matvecs: int = 0
    degenerate: bool = False


@dataclass
class SpectralDecomp:
    """Full symmetric eigendecomposition, eigenvalues decreasing.

    Columns of `vectors` are orthonormal eigenvectors, so
    ``X = vectors @ diag(values) @ vectors.T``.
    """

    values: np.ndarray
    vectors: np.ndarray
    cost_eigvecs: float

    @property
    def n(self):
        return self.values.shape[0]

    def coordinates(self, v):
        """Coordinates of a vector in the eigenbasis."""
        return self.vectors.T @ np.asarray(v, dtype=float)

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


@dataclass
class SecularProblem:
    """Data of the scalar rank-one update equation.

    The unique positive root t* of
        s(t) = 1/scale - sum_j weights_j / ((lambdas_0 - lambdas_j) + t) = 0
    is the increase of the top eigenvalue under the update
    ``X + scale * v v^T``, where `weights` are the squared eigenbasis
    coordinates of v and `scale` is the (positive) perturbation scale.
    """

    lambdas: np.ndarray
    weights: np.ndarray
    scale: float


@dataclass
class SecularRoot:
    """Root of a secular problem: the shift of the top eigenvalue.

    `degenerate` is set when the update vector carried no weight on the
    leading eigenspace; the shift then comes from the deflated problem and
    may be exactly zero (root at the pole).
    """

    shift: float
    degenerate: bool = False
    iterations: int = 0


def _canonical_sign(vec):
    nz = np.nonzero(vec)[0]
    if nz.size and vec[nz[0]] < 0:
        return -vec
    return vec


def full_eig(X):
    """Full decomposition through a dense symmetric eigensolver.

    Values come out in decreasing order with stable tie-breaking; each
    eigenvector is normalized with its first nonzero coordinate positive.
    Costs n eigenvector units.
    """
    X = check_symmetric(X)
    w, V = np.linalg.eigh(X)
    order = np.argsort(-w, kind="stable")
    w = np.ascontiguousarray(w[order])
    V = np.ascontiguousarray(V[:, order])
    for j in range(V.shape[1]):
        V[:, j] = _canonical_sign(V[:, j])
    return SpectralDecomp(values=w, vectors=V, cost_eigvecs=float(X.shape[0]))


def lanczos_iteration_budget(n, rel_tol, fail_prob):
    """Matrix-vector budget guaranteeing relative precision `rel_tol` with
    probability 1 - fail_prob from a uniform random start:
    ceil(log(n / fail_prob^2) / (4 sqrt(rel_tol)))."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    if not 0.0 < fail_prob < 1.0:
        raise ValueError("fail_prob must lie in (0, 1)")
    return int(math.ceil(math.log(n / fail_prob**2) / (4.0 * math.sqrt(rel_tol))))


def lanczos_leading(X, rel_tol=1e-8, fail_prob=0.01, rng=None, restart_limit=3, max_iter=None):
    """Leading eigenpair by Lanczos with full reorthogonalization.

    The start vector is drawn uniformly on the sphere from `rng`. The run is
    restarted with a fresh start vector on stagnation (budget exhausted or
    premature breakdown without a converged top pair). On success the Ritz
    residual satisfies ``||X v - value v|| <= rel_tol * max(1, |value|)`` and
    the pair is charged one eigenvector unit.

    Raises LanczosConvergenceError after `restart_limit` failed attempts;
    never returns a silently unconverged answer.
    """
    X = check_symmetric(X)
    n = X.shape[0]
    if rng is None:
        raise ValueError("lanczos_leading requires a seeded random generator")
    if n == 1:
        return EigPair(value=float(X[0, 0]), vector=np.ones(1), cost_eigvecs=1.0)
    budget = lanczos_iteration_budget(n, rel_tol, fail_prob) if max_iter is None else int(max_iter)
    # The Krylov space is the whole space after n steps; more cannot help.
    steps = max(2, min(budget, n))
    total_matvecs = 0
    for _ in range(max(1, int(restart_limit))):
        pair, used = _lanczos_attempt(X, steps, rel_tol, rng)
        total_matvecs += used
        if pair is not None:
            pair.matvecs = total_matvecs
            return pair
    raise LanczosConvergenceError(
        f"no convergence to rel_tol={rel_tol:g} after {restart_limit} attempts "
        f"of {steps} iterations (n={n})"
    )


def _lanczos_attempt(X, steps, rel_tol, rng):
    n = X.shape[0]
    Q = np.empty((n, steps))
    alphas = np.empty(steps)
    betas = np.empty(steps)
    breakdown = 1e-14 * max(1.0, float(np.linalg.norm(X, "fro")))
    # A converged residual is only trusted once a few dimensions are spanned;
    # this guards against start vectors that are themselves eigenvectors of a
    # non-leading eigenvalue (residual zero, wrong answer).
    min_span = min(3, n, steps)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    matvecs = 0
    for j in range(steps):
        Q[:, j] = q
        w = X @ q
        matvecs += 1
        alphas[j] = float(q @ w)
        w -= alphas[j] * q
        if j > 0:
            w -= betas[j - 1] * Q[:, j - 1]
        # Full reorthogonalization, two passes: correctness over speed.
        basis = Q[:, : j + 1]
        w -= basis @ (basis.T @ w)
        w -= basis @ (basis.T @ w)
        beta = float(np.linalg.norm(w))
        betas[j] = beta
        span = j + 1
        if span == steps or beta <= breakdown or j < 32 or j % 4 == 0:
            theta, s = _top_ritz(alphas[:span], betas[: span - 1])
            if span >= min_span and abs(beta * s[-1]) <= rel_tol * max(1.0, abs(theta)):
                vec = Q[:, :span] @ s
                vec = _canonical_sign(vec / np.linalg.norm(vec))
                return EigPair(value=theta, vector=vec, cost_eigvecs=1.0), matvecs
        if beta <= breakdown:
            if span >= min(steps, n):
                # Nothing left to span within the budget: hand back for restart.
                return None, matvecs
            # The spanned subspace is invariant but not certified: decouple
            # (zero coupling) and continue from a fresh orthogonal direction.
            betas[j] = 0.0
            q = rng.standard_normal(n)
            q -= basis @ (basis.T @ q)
            q -= basis @ (basis.T @ q)
            norm = float(np.linalg.norm(q))
            if norm <= breakdown:
                return None, matvecs
            q /= norm
        else:
            q = w / beta
    return None, matvecs


def _top_ritz(alphas, offdiag):
    m = alphas.shape[0]
    T = np.zeros((m, m))
    np.fill_diagonal(T, alphas)
    if offdiag.size:
        idx = np.arange(offdiag.size)
        T[idx, idx + 1] = offdiag
        T[idx + 1, idx] = offdiag
    w, S = np.linalg.eigh(T)
    return float(w[-1]), S[:, -1]


def _secular_newton(d, w, scale, rel_tol, max_iter):
    """Positive root of 1/scale - sum_j w_j/(d_j + t) by monotone Newton.

    Requires d >= 0. The function is increasing and concave in t, so Newton
    from the analytic lower bracket scale * (weight at d == 0) converges
    monotonically from the left; a bisection safeguard guards the bracket
    [lower, scale * sum w] against rounding.
    """
    lo = scale * float(w[d == 0.0].sum())
    hi = scale * float(w.sum())
    t = lo
    tiny = np.finfo(float).tiny
    for it in range(1, max_iter + 1):
        denom = d + t
        s = 1.0 / scale - float((w / denom).sum())
        if s == 0.0:
            return t, it
        sp = float((w / denom**2).sum())
        t_new = t - s / sp
        if not lo <= t_new <= hi:
            t_new = 0.5 * (t + (hi if s < 0.0 else lo))
        if s < 0.0:
            lo = t
        else:
            hi = t
        if abs(t_new - t) <= rel_tol * max(abs(t_new), tiny):
            return t_new, it
        t = t_new
    return t, max_iter


def secular_root(problem, rel_tol=1e-12, max_iter=200):
    """Unique positive root of the rank-one update equation.

    Solved by safeguarded Newton inside the analytic bracket
    [scale * w_top, scale * sum w], where w_top is the weight carried by the
    leading eigenspace. Coordinates below 1e-14 of the total weight are
    deflated. If the leading eigenspace carries no weight (update vector
    orthogonal to it) the root may sit at a pole: the deflated problem is
    solved and the result flagged degenerate.
    """
    lam = np.asarray(problem.lambdas, dtype=float)
    w = np.asarray(problem.weights, dtype=float)
    scale = float(problem.scale)
    if lam.ndim != 1 or lam.shape != w.shape:
        raise ValueError("lambdas and weights must be 1-d arrays of equal length")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    if np.any(np.diff(lam) > 0.0):
        raise ValueError("lambdas must be in decreasing order")
    total = float(w.sum())
    if total <= 0.0:
        raise ValueError("all weights vanish")
    keep = w > _DEFLATE_REL * total
    lam_k = lam[keep]
    w_k = w[keep]
    if lam_k[0] == lam[0]:
        t, its = _secular_newton(lam[0] - lam_k, w_k, scale, rel_tol, max_iter)
        return SecularRoot(shift=float(t), degenerate=False, iterations=its)
    # Degenerate: all leading-eigenspace weight was deflated. The update only
    # moves the subspace it touches; the overall top is whichever is larger.
    t, its = _secular_newton(lam_k[0] - lam_k, w_k, scale, rel_tol, max_iter)
    shift = max(0.0, float(lam_k[0] + t - lam[0]))
    return SecularRoot(shift=shift, degenerate=True, iterations=its)


def secular_shifts_batch(lambdas, weights, scale, rel_tol=1e-13, max_iter=120):
    """Vectorized secular roots for many weight rows over one spectrum.

    `weights` has shape (m, n); returns the m positive shifts. Rows whose
    leading-eigenspace weight deflates to zero fall back to the scalar
    solver (and get the degenerate treatment).
    """
    lam = np.asarray(lambdas, dtype=float)
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    if np.any(np.diff(lam) > 0.0):
        raise ValueError("lambdas must be in decreasing order")
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    d = lam[0] - lam
    totals = W.sum(axis=1)
    if np.any(totals <= 0.0):
        raise ValueError("all weights vanish in some row")
    Wk = np.where(W > _DEFLATE_REL * totals[:, None], W, 0.0)
    lead = Wk[:, d == 0.0].sum(axis=1)
    out = np.empty(W.shape[0])
    bad = lead <= 0.0
    if np.any(bad):
        for i in np.nonzero(bad)[0]:
            out[i] = secular_root(SecularProblem(lam, W[i], scale), rel_tol=rel_tol).shift
    good = ~bad
    if np.any(good):
        Wg = Wk[good]
        lo = scale * lead[good]
        hi = scale * Wg.sum(axis=1)
        t = lo.copy()
        tiny = np.finfo(float).tiny
        for _ in range(max_iter):
            denom = d[None, :] + t[:, None]
            s = 1.0 / scale - (Wg / denom).sum(axis=1)
            sp = (Wg / denom**2).sum(axis=1)
            t_new = np.clip(t - s / sp, lo, hi)
            done = np.abs(t_new - t) <= rel_tol * np.maximum(np.abs(t_new), tiny)
            t = t_new
            if done.all():
                break
        out[good] = t
    return out


def rank_one_leading(decomp, v, eps_over_n, rel_tol=1e-12):
    """Leading eigenpair of ``X + eps_over_n * v v^T`` from a decomposition of X.

    The eigenvalue is lambda_1 + t* with t* from `secular_root`; eigenvector
    coordinates in the eigenbasis are (coords of v)_j / (value - lambda_j),
    normalized and rotated back. Charged one eigenvector unit.
    """
    v = np.asarray(v, dtype=float)
    if eps_over_n <= 0.0:
        raise ValueError("eps_over_n must be positive")
    if not np.any(v):
        raise ValueError("update vector must be nonzero")
    coords = decomp.coordinates(v)
    root = secular_root(
        SecularProblem(decomp.values, coords**2, eps_over_n), rel_tol=rel_tol
    )
    lam = decomp.values
    value = float(lam[0] + root.shift)
    if root.shift == 0.0:
        # Root at the pole: the top eigenpair is untouched by the update.
        vec = _canonical_sign(decomp.vectors[:, 0].copy())
    else:
        # (lam[0] - lam_j) + shift = value - lam_j, evaluated without cancellation.
        comps = coords / ((lam[0] - lam) + root.shift)
        vec = decomp.vectors @ comps
        vec = _canonical_sign(vec / np.linalg.norm(vec))
    return EigPair(value=value, vector=vec, cost_eigvecs=1.0, degenerate=root.degenerate)


def char_poly_rank_one(decomp, v, lam_eval):
    """Characteristic polynomial of ``X + v v^T`` evaluated at `lam_eval`:
    prod_j (lambda_j - lam_eval) * (1 + sum_j coords_j^2 / (lambda_j - lam_eval)).

    `lam_eval` must not coincide with an eigenvalue of X (poles).
    """
    coords = decomp.coordinates(v)
    diffs = decomp.values - float(lam_eval)
    if np.any(diffs == 0.0):
        raise ValueError("evaluation point coincides with an eigenvalue of the base matrix")
    return float(np.prod(diffs) * (1.0 + np.sum(coords**2 / diffs)))


def matrix_exponential(X):
    """exp(X) through the full decomposition; costs n eigenvector units.

    Overflow on extreme eigenvalues is an explicit error: callers feed
    pre-scaled matrices (the smoothing baseline always controls the range).
    """
    dec = full_eig(X)
    with np.errstate(over="ignore"):
        ew = np.exp(dec.values)
    if not np.all(np.isfinite(ew)):
        raise OverflowError("matrix exponential overflow: pre-scale the input")
    return symmetrize((dec.vectors * ew) @ dec.vectors.T)


def local_lip_constant(decomp, gap_threshold=1e-12):
    """1 / (lambda_1 - lambda_2), the local Lipschitz constant of the gradient
    of the top-eigenvalue map when the top eigenvalue is simple."""
    gap = float(decomp.values[0] - decomp.values[1])
    if gap <= gap_threshold:
        raise NonsmoothPointError(
            f"spectral gap {gap:.3e} at or below threshold {gap_threshold:g}"
        )
    return 1.0 / gap


def extremal_direction(decomp, gap_threshold=1e-12):
    """Unit-Frobenius symmetric direction attaining the supremum of the second
    directional derivative of the top-eigenvalue map: the normalized swap of
    the two leading eigenvectors."""
    gap = float(decomp.values[0] - decomp.values[1])
    if gap <= gap_threshold:
        raise NonsmoothPointError(
            f"spectral gap {gap:.3e} at or below threshold {gap_threshold:g}"
        )
    p1 = decomp.vectors[:, 0]
    p2 = decomp.vectors[:, 1]
    return (np.outer(p1, p2) + np.outer(p2, p1)) / math.sqrt(2.0)

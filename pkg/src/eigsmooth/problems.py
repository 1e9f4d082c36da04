"""Problem instances for top-eigenvalue minimization.

Two families:

* `BoxProblem`: minimize lambda_max(A + X) over symmetric X with entries in
  [-rho, rho] (the hypercube relaxation used to hunt sparse leading
  eigenvectors). A is a covariance-like matrix normalized to unit spectral
  norm; the default half-width is max(diag(A)) / 2.

* `BallProblem`: minimize lambda_max(C + diag(w)) - 1^T w over a Euclidean
  ball ||w|| <= R (the dual of the classical cut relaxation). C is a
  normalized Wishart sample, so its spectrum sits in [0, 1].

Both expose the composite-objective interface the solvers consume:
`matrix(point)` maps the variable to the symmetric matrix whose top
eigenvalue is measured, `pull_back(G)` chain-rules a matrix gradient to the
variable space, `linear_value` / `linear_grad` carry the affine term, and
`prox_setup()` packages projection, diameter, and start point.

Also here: covariance ingestion with top-variance coordinate selection, a
synthetic low-rank-plus-noise generator reproducing the well-separated
leading-eigenvalue regime, and dense multilevel grid references for desk
scale validation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .optimize import ProxSetup
from .smoothing import gradient_oracle
from .spectral import check_symmetric, lanczos_leading, load_matrix

__all__ = [
    "BoxProblem",
    "BallProblem",
    "load_covariance",
    "synthetic_samples",
    "synthetic_covariance",
    "dspca_problem",
    "maxcut_problem",
    "composite_objective",
    "box_reference",
    "ball_reference",
]


@dataclass
class BoxProblem:
    """Entrywise box-constrained perturbation of a fixed symmetric matrix."""

    A: np.ndarray
    rho: float

    def __post_init__(self):
        self.A = check_symmetric(self.A)
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")

    @property
    def dim(self):
        return self.A.shape[0]

    def matrix(self, X):
        return self.A + X

    def project(self, X):
        return np.clip(X, -self.rho, self.rho)

    def pull_back(self, G):
        return G

    def linear_value(self, X):
        return 0.0

    def linear_grad(self, X):
        return np.zeros_like(self.A)

    @property
    def diameter(self):
        # max omega over the box for omega = ||.||_F^2 / 2 is (rho n)^2 / 2
        return self.rho * self.dim / math.sqrt(2.0)

    def center(self):
        return np.zeros_like(self.A)

    def prox_setup(self):
        return ProxSetup(project=self.project, diameter=self.diameter, center=self.center())

    def true_objective(self, X):
        return float(np.linalg.eigvalsh(self.matrix(X))[-1])


@dataclass
class BallProblem:
    """Diagonal shift of a fixed matrix penalized by -1^T w over a ball."""

    C: np.ndarray
    radius: float

    def __post_init__(self):
        self.C = check_symmetric(self.C)
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return self.C.shape[0]

    def matrix(self, w):
        return self.C + np.diag(w)

    def project(self, w):
        norm = float(np.linalg.norm(w))
        if norm <= self.radius:
            return w
        return w * (self.radius / norm)

    def pull_back(self, G):
        return np.diag(G).copy()

    def linear_value(self, w):
        return -float(np.sum(w))

    def linear_grad(self, w):
        return -np.ones(self.dim)

    @property
    def diameter(self):
        return self.radius / math.sqrt(2.0)

    def center(self):
        return np.zeros(self.dim)

    def prox_setup(self):
        return ProxSetup(project=self.project, diameter=self.diameter, center=self.center())

    def true_objective(self, w):
        return float(np.linalg.eigvalsh(self.matrix(w))[-1]) - float(np.sum(w))


def _normalize_spectral(A):
    norm = float(np.max(np.abs(np.linalg.eigvalsh(A))))
    if norm <= 0.0:
        raise ValueError("matrix has zero spectral norm")
    return A / norm


def load_covariance(path, n_select):
    """Load data and return a covariance matrix with unit spectral norm.

    Two file layouts are accepted: the square matrix format (first line `n`)
    holding the covariance itself, or a sample layout (first line `m n`)
    holding m observation rows of n values from which the covariance is
    formed. The `n_select` coordinates of highest variance are kept, in
    their original order.
    """
    with open(path) as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    head = first.split()
    if len(head) == 1:
        cov = load_matrix(path)
        variances = np.diag(cov)
        if n_select > cov.shape[0]:
            raise ValueError(f"n_select={n_select} exceeds the {cov.shape[0]} available coordinates")
        idx = np.sort(np.argsort(-variances, kind="stable")[:n_select])
        return _normalize_spectral(cov[np.ix_(idx, idx)])
    if len(head) != 2:
        raise ValueError(f"{path}:1: expected 'n' or 'm n' on the first line")
    m, n = int(head[0]), int(head[1])
    data = np.loadtxt(path, skiprows=1)
    data = np.atleast_2d(data)
    if data.shape != (m, n):
        raise ValueError(f"{path}: expected {m} x {n} samples, found {data.shape}")
    if n_select > n:
        raise ValueError(f"n_select={n_select} exceeds the {n} available coordinates")
    variances = data.var(axis=0, ddof=1)
    idx = np.sort(np.argsort(-variances, kind="stable")[:n_select])
    cov = np.cov(data[:, idx], rowvar=False)
    return _normalize_spectral(check_symmetric(np.atleast_2d(cov), tol=1e-8))


def synthetic_samples(m, n, rng, n_factors=2, factor_scale=4.0, noise=1.0):
    """Observation matrix from a low-rank factor model plus isotropic noise."""
    loadings = rng.standard_normal((n, n_factors))
    strengths = factor_scale / (1.0 + np.arange(n_factors))
    factors = rng.standard_normal((m, n_factors)) * strengths
    return factors @ loadings.T + noise * rng.standard_normal((m, n))


def synthetic_covariance(n, rng, n_factors=2, factor_scale=4.0, noise=0.5):
    """Low-rank-plus-noise covariance with unit spectral norm and
    well-separated leading eigenvalues."""
    loadings = rng.standard_normal((n, n_factors)) / math.sqrt(n)
    strengths = (factor_scale / (1.0 + np.arange(n_factors))) ** 2
    A = (loadings * strengths) @ loadings.T + (noise**2 / n) * np.eye(n)
    return _normalize_spectral(check_symmetric(A))


def dspca_problem(A, rho=None):
    """Box problem over a normalized covariance; default half-width is
    max(diag(A)) / 2."""
    A = check_symmetric(A)
    top = float(np.max(np.abs(np.linalg.eigvalsh(A))))
    if abs(top - 1.0) > 1e-10:
        raise ValueError(f"A must have unit spectral norm, got {top!r}")
    if rho is None:
        rho = float(np.max(np.diag(A))) / 2.0
    return BoxProblem(A=A, rho=rho)


def maxcut_problem(n, rng, radius=None):
    """Ball problem over a normalized Wishart matrix C = G^T G / ||G||_2^2.

    The default radius is n. The objective is unbounded below along the
    all-ones direction, so the constraint always binds; the radius sets the
    scale of the boundary minimizer.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    G = rng.standard_normal((n, n))
    C = G.T @ G
    C = check_symmetric(C / np.linalg.eigvalsh(C)[-1])
    return BallProblem(C=C, radius=float(radius) if radius is not None else float(n))


def composite_objective(problem, point, mode, params=None, q=1, rng=None,
                        rel_tol=1e-9, fail_prob=0.01, path="auto", seed_key=()):
    """Objective value, gradient (or subgradient), and eigenvector cost.

    `mode` is "exact" (one leading eigenpair of the mapped matrix, chain-ruled
    rank-one subgradient) or "sampled" (smoothed oracle averaged over q
    draws). Returns (value, gradient, cost_eigvecs).
    """
    M = problem.matrix(point)
    if mode == "exact":
        pair = lanczos_leading(M, rel_tol=rel_tol, fail_prob=fail_prob, rng=rng)
        value = pair.value + problem.linear_value(point)
        grad = problem.pull_back(np.outer(pair.vector, pair.vector)) + problem.linear_grad(point)
        return value, grad, pair.cost_eigvecs
    if mode == "sampled":
        if params is None:
            raise ValueError("sampled mode needs smoothing parameters")
        est = gradient_oracle(M, params, q, rng, path=path, seed_key=seed_key)
        value = est.value + problem.linear_value(point)
        grad = problem.pull_back(est.matrix) + problem.linear_grad(point)
        return value, grad, est.cost_eigvecs
    raise ValueError(f"unknown mode {mode!r}")


def _grid_refine(evaluate, center, half, levels, points, clamp=None):
    """Multilevel dense grid minimization: evaluate on a points^d grid
    centered on the incumbent, then shrink the window.

    The window halves only when the incumbent stays interior to it; a best
    point on the window edge doubles the window instead, so descent along a
    constraint boundary is not lost to premature zooming.
    """
    d = center.shape[0]
    half0 = half
    best_x = center.copy()
    best_val = float("inf")
    for _ in range(levels):
        axes = [np.linspace(best_x[i] - half, best_x[i] + half, points) for i in range(d)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        grid_center = best_x.copy()
        if clamp is not None:
            mesh = clamp(mesh)
        vals = evaluate(mesh)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_x = mesh[i].copy()
        on_edge = np.any(np.abs(best_x - grid_center) >= half * (1.0 - 2.0 / (points - 1)))
        half = min(2.0 * half, half0) if on_edge else 0.5 * half
    return best_x, best_val


def box_reference(problem, levels=18, points=13):
    """Brute-force reference optimum of a small box problem by multilevel
    dense grid over the upper triangle of X (desk scale: n <= 3)."""
    n = problem.dim
    iu = np.triu_indices(n)
    d = len(iu[0])
    if points**d > 2_000_000:
        raise ValueError("grid reference is a desk-scale tool")

    def evaluate(mesh):
        m = mesh.shape[0]
        Xs = np.zeros((m, n, n))
        Xs[:, iu[0], iu[1]] = mesh
        Xs = Xs + np.transpose(Xs, (0, 2, 1))
        Xs[:, np.arange(n), np.arange(n)] *= 0.5
        vals = np.linalg.eigvalsh(problem.A[None, :, :] + Xs)[:, -1]
        return vals

    def clamp(mesh):
        return np.clip(mesh, -problem.rho, problem.rho)

    x, val = _grid_refine(evaluate, np.zeros(d), problem.rho, levels, points, clamp=clamp)
    X = np.zeros((n, n))
    X[iu] = x
    X = X + X.T
    X[np.arange(n), np.arange(n)] *= 0.5
    return X, val


def ball_reference(problem, levels=18, points=13, half=None):
    """Brute-force reference optimum of a small ball problem by multilevel
    dense grid over w (desk scale: n <= 4).

    The objective decreases without bound along the all-ones direction, so
    the constraint always binds: the search covers the whole ball (grid
    points are projected onto it) and the incumbent typically sits on the
    boundary.
    """
    n = problem.dim
    if points**n > 2_000_000:
        raise ValueError("grid reference is a desk-scale tool")

    def evaluate(mesh):
        m = mesh.shape[0]
        Ms = np.broadcast_to(problem.C, (m, n, n)).copy()
        Ms[:, np.arange(n), np.arange(n)] += mesh
        return np.linalg.eigvalsh(Ms)[:, -1] - mesh.sum(axis=1)

    def clamp(mesh):
        norms = np.linalg.norm(mesh, axis=1, keepdims=True)
        factor = np.minimum(1.0, problem.radius / np.maximum(norms, 1e-300))
        return mesh * factor

    start_half = half if half is not None else float(problem.radius)
    w, val = _grid_refine(evaluate, np.zeros(n), start_half, levels, points, clamp=clamp)
    return w, val

"""Accelerated stochastic composite optimization with monotone line search.

The solver family minimizes Psi(x) = f(x) + h(x) over a compact convex set
observed through a stochastic oracle G(x, xi) (unbiased gradient, variance
sigma^2 = 1/q). The engine interpolates a mirror-descent iterate x_t and an
aggregate iterate x_t^ag through the midpoint sequence

    x_t^md = 2/(t+1) x_t + (t-1)/(t+1) x_t^ag,

takes prox steps of size gamma_t = (t+1) gamma / 2, and optionally adapts the
scale gamma by a monotone (shrink-only) line search: the candidate aggregate
must satisfy a sampled upper-model inequality, otherwise gamma is multiplied
by gamma_d < 1 down to a floor gamma_min. Two distinct oracle realizations
enter each test; the trailing one is reused at the next iteration whenever
the evaluation point is unchanged, otherwise it is resampled and charged.

Deterministic baselines in the same trace schema: projected subgradient
steps on the exact top-eigenvalue objective, and accelerated gradient on the
soft-max (log-trace-exponential) smoothing whose every iteration costs one
matrix exponential, i.e. n eigenvector units.

Everything is deterministic given the run seed: oracle noise comes from
counter-based keys (seed, iteration, sample index).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .smoothing import SmoothingParams, gradient_oracle, lipschitz_bound, sample_rng, smoothing_constant
from .spectral import SpectralError, full_eig, lanczos_leading

__all__ = [
    "ProxSetup",
    "SolverConfig",
    "TraceRecord",
    "IterateState",
    "OracleEval",
    "RunResult",
    "StochasticOracle",
    "ExactEigOracle",
    "FunctionOracle",
    "prox_map_euclidean",
    "default_schedule",
    "line_search_exit",
    "acsa_run",
    "acsa_linesearch_run",
    "subgradient_baseline",
    "nesterov_smooth_baseline",
    "softmax_smoothed",
    "expected_gap_bound",
    "coarse_gap_bound",
    "write_trace",
    "read_trace",
    "TRACE_HEADER",
]

TRACE_HEADER = "t,obj_true,obj_sampled,gamma,eigvecs,wall_ms"


@dataclass
class ProxSetup:
    """Euclidean prox geometry: omega = ||.||^2 / 2 with strong convexity alpha.

    `project` is the Euclidean projection onto the feasible set, `diameter`
    the omega-diameter (max omega - min omega)^(1/2), and `center` the omega
    minimizer used as the start point.
    """

    project: object  # Callable[[ndarray], ndarray]
    diameter: float
    center: np.ndarray
    alpha: float = 1.0


@dataclass
class SolverConfig:
    """All solver parameters; anything left None is derived at run time.

    gamma_max / gamma_min / gamma_init define the line-search ladder
    (defaults: a theory floor alpha/(2L) with L the smoothed-gradient
    Lipschitz bound divided by `lip_scale`, and a ceiling `ladder_span`
    times higher). `mu` is the noise bias bound, defaulting to k * eps.
    """

    N: int
    eps: float
    k: int = 3
    q: int = 1
    seed: int = 0
    gamma_max: float | None = None
    gamma_min: float | None = None
    gamma_init: float | None = None
    gamma_d: float = 0.5
    ladder_span: float = 16.0
    lip_scale: float = 100.0
    m_lipschitz: float = 0.0
    mu: float | None = None
    oracle_path: str = "lanczos"
    oracle_tol: float = 1e-6
    oracle_fail_prob: float = 0.01
    true_obj_every: int | None = None
    keep_iterates: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not 0.0 < self.gamma_d < 1.0:
            raise ValueError("gamma_d must lie in (0, 1)")
        if self.q < 1:
            raise ValueError("q must be at least 1")
        if self.gamma_max is not None and self.gamma_min is not None:
            if self.gamma_min > self.gamma_max:
                raise ValueError("gamma_min must not exceed gamma_max")
        if self.gamma_init is not None:
            lo = self.gamma_min if self.gamma_min is not None else self.gamma_init
            hi = self.gamma_max if self.gamma_max is not None else self.gamma_init
            if not lo <= self.gamma_init <= hi:
                raise ValueError("gamma_init must lie inside [gamma_min, gamma_max]")


@dataclass
class TraceRecord:
    t: int
    obj_true: float
    obj_sampled: float
    gamma: float
    eigvecs: float
    wall_ms: float


@dataclass
class IterateState:
    """Snapshot of one iteration (recorded when keep_iterates is set)."""

    t: int
    x: np.ndarray
    x_md: np.ndarray
    x_ag: np.ndarray
    gamma: float
    beta: float
    gamma_t: float


@dataclass
class OracleEval:
    value: float
    grad: np.ndarray
    cost: float = 0.0


@dataclass
class RunResult:
    solution: np.ndarray
    trace: list
    total_eigvecs: float
    best_objective: float
    iterations: int
    gamma_final: float | None = None
    t_gamma: int | None = None
    gap_bound: float | None = None
    aborted: bool = False
    abort_reason: str | None = None
    iterates: list = field(default_factory=list)


class StochasticOracle:
    """Smoothed value/gradient oracle for a matrix-valued composite problem.

    Each evaluation draws q independent smoothed samples at the mapped matrix
    and chain-rules the averaged rank-one estimate back to the variable space.
    Noise is keyed by (seed, *key, sample index).
    """

    def __init__(self, problem, params, q, seed, path="lanczos", lanczos_tol=1e-6,
                 lanczos_fail_prob=0.01):
        self.problem = problem
        self.params = params
        self.q = int(q)
        self.seed = int(seed)
        self.path = path
        self.lanczos_tol = lanczos_tol
        self.lanczos_fail_prob = lanczos_fail_prob

    @property
    def sigma2(self):
        return 1.0 / self.q

    def evaluate(self, point, key):
        M = self.problem.matrix(point)
        est = gradient_oracle(
            M, self.params, self.q, rng=self.seed, seed_key=tuple(key), path=self.path,
            lanczos_tol=self.lanczos_tol, lanczos_fail_prob=self.lanczos_fail_prob,
        )
        value = est.value + self.problem.linear_value(point)
        grad = self.problem.pull_back(est.matrix) + self.problem.linear_grad(point)
        return OracleEval(value=value, grad=grad, cost=est.cost_eigvecs)


class ExactEigOracle:
    """Noise-free oracle: one leading eigenpair per evaluation (cost 1)."""

    sigma2 = 0.0

    def __init__(self, problem, seed, rel_tol=1e-9, fail_prob=0.01):
        self.problem = problem
        self.seed = int(seed)
        self.rel_tol = rel_tol
        self.fail_prob = fail_prob

    def evaluate(self, point, key):
        M = self.problem.matrix(point)
        pair = lanczos_leading(
            M, rel_tol=self.rel_tol, fail_prob=self.fail_prob,
            rng=sample_rng(self.seed, *key),
        )
        value = pair.value + self.problem.linear_value(point)
        grad = self.problem.pull_back(np.outer(pair.vector, pair.vector))
        grad = grad + self.problem.linear_grad(point)
        return OracleEval(value=value, grad=grad, cost=pair.cost_eigvecs)


class FunctionOracle:
    """Deterministic oracle from a plain (value, grad) function; zero cost."""

    sigma2 = 0.0

    def __init__(self, fn):
        self.fn = fn

    def evaluate(self, point, key):
        value, grad = self.fn(point)
        return OracleEval(value=float(value), grad=np.asarray(grad, dtype=float), cost=0.0)


def prox_map_euclidean(setup, x, y):
    """Prox mapping for omega = ||.||^2/2: argmin_z y.(z - x) + ||z - x||^2/2,
    i.e. the Euclidean projection of x - y onto the feasible set."""
    if setup.alpha != 1.0:
        raise ValueError("the Euclidean prox map assumes alpha == 1")
    return setup.project(x - y)


def default_schedule(n, eps, diameter):
    """Iteration and sample-count schedule N = ceil(2 D sqrt(n)/eps),
    q = ceil(max(1, D/(eps sqrt(n))))."""
    if n < 1 or eps <= 0 or diameter <= 0:
        raise ValueError("n, eps, diameter must be positive")
    N = int(math.ceil(2.0 * diameter * math.sqrt(n) / eps))
    q = int(math.ceil(max(1.0, diameter / (eps * math.sqrt(n)))))
    return N, q


def line_search_exit(value_md, grad_md, value_next, displacement, gamma, gamma_d,
                     alpha=1.0, m_lipschitz=0.0):
    """Sampled upper-model exit test for the current step scale gamma.

    True iff  Psi(x_ag', xi') <= Psi(x_md, xi) + <G, x_ag' - x_md>
              + (alpha gamma_d / (4 gamma)) ||x_ag' - x_md||^2
              + 2 M ||x_ag' - x_md||.
    """
    delta = np.asarray(displacement, dtype=float)
    dist = float(np.linalg.norm(delta.ravel()))
    rhs = (
        value_md
        + float(np.vdot(np.asarray(grad_md, dtype=float), delta))
        + (alpha * gamma_d / (4.0 * gamma)) * dist**2
        + 2.0 * m_lipschitz * dist
    )
    return value_next <= rhs


def expected_gap_bound(n, eps, k, diameter, N, q, alpha=1.0):
    """Expected-accuracy bound of the plain accelerated stochastic method:
    8 n C_k D^2 / (alpha eps N (N+2)) + 4 sqrt(2) D / sqrt(N q)."""
    ck = smoothing_constant(k)
    return (
        8.0 * n * ck * diameter**2 / (alpha * eps * N * (N + 2.0))
        + 4.0 * math.sqrt(2.0) * diameter / math.sqrt(N * q)
    )


def coarse_gap_bound(L, diameter, N, sigma2, gamma_max, gamma_min, t_gamma, mu,
                     alpha=1.0, m_lipschitz=0.0):
    """Coarse expected-accuracy bound of the line-search variant, with
    rho_N = (T_gamma + 2)^3 / (N + 2)^3 amplifying the noise term while the
    search is active."""
    rho = (t_gamma + 2.0) ** 3 / (N + 2.0) ** 3
    noise = math.sqrt(4.0 * m_lipschitz**2 + sigma2)
    return (
        8.0 * L * diameter**2 / (alpha * N**2)
        + 8.0 * diameter * noise / math.sqrt(N) * (gamma_max / gamma_min * rho + 1.0 - rho)
        + (t_gamma + 2.0) ** 2 * gamma_max * mu / (N**2 * 2.0 * gamma_min)
    )


def _default_smoothing(problem, config):
    return SmoothingParams(eps=config.eps, n=problem.dim, k=config.k)


def _default_oracle(problem, config):
    return StochasticOracle(
        problem, _default_smoothing(problem, config), config.q, config.seed,
        path=config.oracle_path, lanczos_tol=config.oracle_tol,
        lanczos_fail_prob=config.oracle_fail_prob,
    )


def _scaled_lipschitz(problem, config):
    return lipschitz_bound(_default_smoothing(problem, config)) / config.lip_scale


def _resolve_ladder(setup, config, L, sigma2):
    """Fill unset ladder values: floor at the theory step alpha/(2L), ceiling
    `ladder_span` times higher (collapsed when the oracle is noise-free and no
    search span was requested)."""
    alpha = setup.alpha
    theory = alpha / (2.0 * L)
    gamma_max = config.gamma_max
    if gamma_max is None:
        gamma_max = config.ladder_span * theory
    gamma_min = config.gamma_min
    if gamma_min is None:
        gamma_min = min(theory, gamma_max)
    gamma_init = config.gamma_init if config.gamma_init is not None else gamma_max
    return gamma_min, gamma_init, gamma_max


def _plain_gamma(setup, config, L, sigma2):
    """Deterministic step scale of the plain method: min of the smooth step
    alpha/(2L) and the noise-driven ceiling sqrt(6 alpha) D / ((N+2)^{3/2}
    sqrt(4 M^2 + sigma^2))."""
    alpha = setup.alpha
    smooth = alpha / (2.0 * L)
    noise = 4.0 * config.m_lipschitz**2 + sigma2
    if noise <= 0.0:
        return smooth
    ceiling = math.sqrt(6.0 * alpha) * setup.diameter / ((config.N + 2.0) ** 1.5 * math.sqrt(noise))
    return min(smooth, ceiling)


def _true_objective(problem, point):
    if problem is None or not hasattr(problem, "true_objective"):
        return float("nan")
    return float(problem.true_objective(point))


def _acsa_engine(problem, oracle, setup, config, line_search, gamma_fixed=None):
    n_iter = config.N
    alpha = setup.alpha
    if line_search:
        if config.gamma_max is None or config.gamma_min is None:
            if problem is None or config.eps <= 0.0:
                raise ValueError(
                    "explicit gamma_max and gamma_min are required without a "
                    "smoothed problem to derive them from"
                )
            L = _scaled_lipschitz(problem, config)
            sigma2 = getattr(oracle, "sigma2", 0.0)
            gamma_min, gamma, _ = _resolve_ladder(setup, config, L, sigma2)
        else:
            gamma_min = config.gamma_min
            gamma = config.gamma_init if config.gamma_init is not None else config.gamma_max
    else:
        gamma = gamma_fixed
        gamma_min = gamma

    x = np.array(setup.center, dtype=float, copy=True)
    x_ag = x.copy()
    cached = None  # (key, point, OracleEval) of the trailing exit-test call
    records = []
    iterates = []
    cum_cost = 0.0
    latched = not line_search
    t_gamma = None
    cadence = config.true_obj_every or max(1, math.ceil(n_iter / 200))
    start = time.perf_counter()
    best = float("inf")
    aborted = False
    reason = None
    t = 0
    for t in range(1, n_iter + 1):
        w_md = 2.0 / (t + 1.0)
        w_ag = (t - 1.0) / (t + 1.0)
        x_md = w_md * x + w_ag * x_ag
        try:
            if cached is not None and cached[0] == (t,) and np.array_equal(cached[1], x_md):
                ev = cached[2]  # recycled: already charged when first computed
            else:
                ev = oracle.evaluate(x_md, (t,))
                cum_cost += ev.cost
            cached = None
            while True:
                gamma_t = (t + 1.0) * gamma / 2.0
                x_next = prox_map_euclidean(setup, x, gamma_t * ev.grad)
                # same combination as x_md, written so x_ag_next == x_next
                # exactly whenever the two points coincide (singleton sets)
                x_ag_next = x_next + w_ag * (x_ag - x_next)
                if latched or gamma <= gamma_min:
                    if not latched:
                        latched = True
                        t_gamma = t - 1
                    break
                ev_next = oracle.evaluate(x_ag_next, (t + 1,))
                cum_cost += ev_next.cost
                cached = ((t + 1,), x_ag_next, ev_next)
                if line_search_exit(
                    ev.value, ev.grad, ev_next.value, x_ag_next - x_md, gamma,
                    config.gamma_d, alpha=alpha, m_lipschitz=config.m_lipschitz,
                ):
                    break
                gamma = gamma * config.gamma_d
        except SpectralError as exc:
            aborted = True
            reason = str(exc)
            break
        gamma = max(gamma_min, gamma)
        x, x_ag = x_next, x_ag_next
        if config.keep_iterates:
            iterates.append(IterateState(
                t=t, x=x.copy(), x_md=x_md, x_ag=x_ag.copy(),
                gamma=gamma, beta=(t + 1.0) / 2.0, gamma_t=gamma_t,
            ))
        if t % cadence == 0 or t == n_iter:
            obj_true = _true_objective(problem, x_ag)
            best = min(best, obj_true) if not math.isnan(obj_true) else best
            records.append(TraceRecord(
                t=t, obj_true=obj_true, obj_sampled=ev.value, gamma=gamma,
                eigvecs=cum_cost, wall_ms=(time.perf_counter() - start) * 1e3,
            ))
    if t_gamma is None:
        t_gamma = t if aborted else n_iter
    return RunResult(
        solution=x_ag, trace=records, total_eigvecs=cum_cost,
        best_objective=best, iterations=t if not aborted else t - 1,
        gamma_final=gamma, t_gamma=t_gamma,
        aborted=aborted, abort_reason=reason, iterates=iterates,
    )


def acsa_run(problem, oracle, setup, config):
    """Plain accelerated stochastic method with the deterministic step scale
    derived from the (down-scaled) Lipschitz bound; logs the expected-gap
    bound alongside the result. An explicitly set config.gamma_min overrides
    the derived scale (the only option for generic or noise-free problems)."""
    if oracle is None:
        oracle = _default_oracle(problem, config)
    if config.gamma_min is not None:
        gamma = config.gamma_min
    elif problem is not None and config.eps > 0.0:
        sigma2 = getattr(oracle, "sigma2", 0.0)
        gamma = _plain_gamma(setup, config, _scaled_lipschitz(problem, config), sigma2)
    else:
        raise ValueError("set gamma_min explicitly when no smoothed problem defines the scale")
    result = _acsa_engine(problem, oracle, setup, config, line_search=False, gamma_fixed=gamma)
    if problem is not None and config.eps > 0:
        result.gap_bound = expected_gap_bound(
            problem.dim, config.eps, config.k, setup.diameter, config.N, config.q,
            alpha=setup.alpha,
        )
    return result


def acsa_linesearch_run(problem, oracle, setup, config):
    """Adaptive variant: the step scale starts at gamma_max and shrinks by
    gamma_d on every failed exit test, floored at gamma_min, after which the
    search is disabled; records the first floor iteration T_gamma and logs
    the coarse expected-accuracy bound."""
    if oracle is None:
        oracle = _default_oracle(problem, config)
    result = _acsa_engine(problem, oracle, setup, config, line_search=True)
    if problem is not None and config.eps > 0:
        sigma2 = getattr(oracle, "sigma2", 0.0)
        L = _scaled_lipschitz(problem, config)
        gamma_min, _, gamma_max = _resolve_ladder(setup, config, L, sigma2)
        mu = config.mu if config.mu is not None else config.k * config.eps
        result.gap_bound = coarse_gap_bound(
            L, setup.diameter, config.N, sigma2, gamma_max, gamma_min,
            result.t_gamma, mu, alpha=setup.alpha, m_lipschitz=config.m_lipschitz,
        )
    return result


def subgradient_baseline(problem, setup, budget, seed=0, rel_tol=1e-9,
                         true_obj_every=None, fail_prob=0.01):
    """Projected subgradient descent on the exact objective.

    Steps D / (||g|| sqrt(t)); one leading eigenpair per iteration. The trace
    follows the common schema and best-so-far bookkeeping gives a
    non-increasing best objective.
    """
    oracle = ExactEigOracle(problem, seed, rel_tol=rel_tol, fail_prob=fail_prob)
    x = np.array(setup.center, dtype=float, copy=True)
    records = []
    cum_cost = 0.0
    best = float("inf")
    best_x = x.copy()
    cadence = true_obj_every or max(1, math.ceil(budget / 200))
    start = time.perf_counter()
    aborted = False
    reason = None
    t = 0
    for t in range(1, budget + 1):
        try:
            ev = oracle.evaluate(x, (t,))
        except SpectralError as exc:
            aborted = True
            reason = str(exc)
            break
        cum_cost += ev.cost
        if ev.value < best:
            best = ev.value
            best_x = x.copy()
        gnorm = float(np.linalg.norm(ev.grad.ravel()))
        if gnorm > 0.0:
            step = setup.diameter / (gnorm * math.sqrt(t))
            x = setup.project(x - step * ev.grad)
        if t % cadence == 0 or t == budget:
            records.append(TraceRecord(
                t=t, obj_true=_true_objective(problem, best_x), obj_sampled=ev.value,
                gamma=float("nan"), eigvecs=cum_cost,
                wall_ms=(time.perf_counter() - start) * 1e3,
            ))
    return RunResult(
        solution=best_x, trace=records, total_eigvecs=cum_cost, best_objective=best,
        iterations=t if not aborted else t - 1, aborted=aborted, abort_reason=reason,
    )


def softmax_smoothed(M, mu):
    """Soft-max smoothing of the top eigenvalue at scale mu:
    value = mu log Tr exp(M/mu) - mu log n, gradient = exp(M/mu)/Tr exp(M/mu).

    The value is a uniform lower approximation: lambda_max - mu log n <= value
    <= lambda_max. Computed through one full decomposition (n eigenvector
    units), shifted by lambda_max so the exponentials never overflow.
    """
    dec = full_eig(M)
    n = dec.n
    shifted = np.exp((dec.values - dec.values[0]) / mu)
    total = float(shifted.sum())
    value = dec.values[0] + mu * math.log(total) - mu * math.log(n)
    grad = (dec.vectors * (shifted / total)) @ dec.vectors.T
    return value, grad, dec.cost_eigvecs


def nesterov_smooth_baseline(problem, setup, eps, budget, lip_scale=1.0,
                             true_obj_every=None):
    """Accelerated gradient on the soft-max smoothing with mu = eps / log n.

    One matrix exponential per iteration, charged n eigenvector units. The
    gradient step uses 1/L with L = 1/(mu lip_scale).
    """
    n = problem.dim
    if n < 2:
        raise ValueError("soft-max smoothing needs dimension at least 2")
    mu = eps / math.log(n)
    L = 1.0 / (mu * lip_scale)
    step = 1.0 / L
    x = np.array(setup.center, dtype=float, copy=True)
    x_prev = x.copy()
    records = []
    cum_cost = 0.0
    best = float("inf")
    cadence = true_obj_every or max(1, math.ceil(budget / 200))
    start = time.perf_counter()
    for t in range(1, budget + 1):
        y = x + ((t - 2.0) / (t + 1.0)) * (x - x_prev) if t > 1 else x
        value, grad_m, cost = softmax_smoothed(problem.matrix(y), mu)
        cum_cost += cost
        value = value + problem.linear_value(y)
        grad = problem.pull_back(grad_m) + problem.linear_grad(y)
        x_prev = x
        x = setup.project(y - step * grad)
        if t % cadence == 0 or t == budget:
            obj_true = _true_objective(problem, x)
            best = min(best, obj_true) if not math.isnan(obj_true) else best
            records.append(TraceRecord(
                t=t, obj_true=obj_true, obj_sampled=value, gamma=float("nan"),
                eigvecs=cum_cost, wall_ms=(time.perf_counter() - start) * 1e3,
            ))
    return RunResult(
        solution=x, trace=records, total_eigvecs=cum_cost, best_objective=best,
        iterations=budget,
    )


def write_trace(path, records, timing=False):
    """Write trace rows in the fixed CSV schema with round-trip decimals.

    Wall times are written as 0.0 unless `timing` is set, keeping trace files
    byte-identical across runs with equal config and seed.
    """
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in records:
            wall = float(r.wall_ms) if timing else 0.0
            fh.write(
                f"{r.t},{float(r.obj_true)!r},{float(r.obj_sampled)!r},"
                f"{float(r.gamma)!r},{float(r.eigvecs)!r},{wall!r}\n"
            )


def read_trace(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty trace")
    if lines[0] != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected trace header {lines[0]!r}")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"{path}: malformed trace row {ln!r}")
        records.append(TraceRecord(
            t=int(parts[0]), obj_true=float(parts[1]), obj_sampled=float(parts[2]),
            gamma=float(parts[3]), eigvecs=float(parts[4]), wall_ms=float(parts[5]),
        ))
    return records

"""Fast fits of the nodal constants from clouds of cheap batches.

Means obey ``E_h = E_0 + B h^delta + noise`` (normal, identity link) and
sample variances ``V_h = V_0 + B h^delta`` times a gamma-distributed factor
(gamma, identity link).  One trajectory set per timestep feeds every
functional.
"""
from __future__ import annotations

import csv
import math
import statistics
import time
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .rng import PHASE_FIT, PHASE_KAPPA, stream_key
from .sde import PHI, PSI, TAU, TrajectoryParams, run_batch


class FitError(RuntimeError):
    pass


class GLMDomainError(FitError):
    """Identity-link gamma fit produced a non-positive mean."""


@dataclass(frozen=True)
class LineFit:
    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    converged: bool = True
    iterations: int = 0


def _design(x) -> np.ndarray:
    x = np.asarray(x, float)
    return np.column_stack([np.ones_like(x), x])


def _check_xy(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if x.size < 3:
        raise ValueError("need at least three points")
    if np.ptp(x) == 0:
        raise FitError("rank-deficient design: all x equal")
    return x, y


def fit_normal_identity(x, y, weight: Optional[float] = None) -> LineFit:
    """Ordinary least squares of ``y`` on ``(1, x)``.

    ``weight`` is a known common variance of each ``y``; without it the
    residual variance is used for the standard errors.
    """
    x, y = _check_xy(x, y)
    X = _design(x)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    XtX_inv = np.linalg.inv(X.T @ X)
    if weight is None:
        resid = y - X @ coef
        s2 = float(resid @ resid) / (len(y) - 2)
    else:
        s2 = float(weight)
    se = np.sqrt(np.maximum(np.diag(XtX_inv) * s2, 0.0))
    return LineFit(float(coef[0]), float(coef[1]), float(se[0]), float(se[1]))


def fit_gamma_identity(x, y, shape: Optional[float] = None, max_iter: int = 100,
                       tol: float = 1e-10) -> LineFit:
    """Gamma GLM with identity link by iteratively reweighted least squares.

    With ``shape`` given (``(N - 1) / 2`` for sample variances of normal
    data) the dispersion is ``1 / shape``; otherwise it is the Pearson
    estimate.  On non-convergence falls back to OLS with a warning.
    """
    x, y = _check_xy(x, y)
    if np.any(y <= 0):
        raise ValueError("gamma responses must be positive")
    X = _design(x)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = X @ coef
        if np.any(mu <= 0):
            raise GLMDomainError("fitted mean left the positive range")
        w = 1.0 / mu**2
        XtW = X.T * w
        new = np.linalg.solve(XtW @ X, XtW @ y)
        step = np.abs(new - coef).max() / max(np.abs(new).max(), 1e-300)
        coef = new
        if step <= tol:
            converged = True
            break
    mu = X @ coef
    if np.any(mu <= 0):
        raise GLMDomainError("fitted mean left the positive range")
    if not converged:
        warnings.warn("gamma IRLS did not converge; falling back to least squares", RuntimeWarning)
        ols = fit_normal_identity(x, y)
        return LineFit(ols.intercept, ols.slope, ols.se_intercept, ols.se_slope, False, it)
    w = 1.0 / mu**2
    if shape is None:
        dispersion = float(((y - mu) ** 2 * w).sum()) / (len(y) - 2)
    else:
        dispersion = 1.0 / float(shape)
    cov = np.linalg.inv((X.T * w) @ X) * dispersion
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return LineFit(float(coef[0]), float(coef[1]), float(se[0]), float(se[1]), True, it)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitCloud:
    """Per-timestep sample statistics of one node's batches."""

    h: np.ndarray
    n_paths: int
    mean_phi: np.ndarray
    var_phi: np.ndarray
    mean_tau: np.ndarray
    mean_psi: np.ndarray
    var_psi: np.ndarray
    mean_psi_phi: np.ndarray
    steps: int

    def __post_init__(self):
        if len(self.h) < 3:
            raise ValueError("need at least three timesteps")
        if self.n_paths < 30:
            raise ValueError("need at least 30 paths per timestep")


@dataclass(frozen=True)
class NodalConstants:
    node_id: int
    E_phi: float
    beta: float
    V_phi: float
    alpha: float
    E_tau: float
    K: float
    cov_phi_psibar: float
    V_psibar: float
    rho_phi_psibar: float
    se_E_phi: float = 0.0
    se_beta: float = 0.0
    se_V_phi: float = 0.0
    se_alpha: float = 0.0
    se_E_tau: float = 0.0
    se_cov_phi_psibar: float = 0.0
    se_V_psibar: float = 0.0
    tau_bias: float = 0.0
    fit_steps: int = 0

    def with_K(self, q: float, delta: float) -> "NodalConstants":
        d = asdict(self)
        d["K"] = cost_constant(self.E_tau, self.beta, q, delta)
        return NodalConstants(**d)


@dataclass(frozen=True)
class GlobalConstants:
    delta: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa < 1.0:
            raise ValueError("kappa must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def cost_constant(E_tau: float, beta: float, q: float, delta: float) -> float:
    """``K = 4 q^2 E[tau] (2 |beta|)^(1/delta)``: plain cost is ``K V / a^(2 + 1/delta)``."""
    return 4.0 * q * q * E_tau * (2.0 * abs(beta)) ** (1.0 / delta)


def fit_cloud(node, problem, psi_table=None, M: int = 100, N: int = 1000,
              h_range=(1e-3, 1e-2), seed: int = 0, threads: int = 1) -> FitCloud:
    """``M`` independent batches of ``N`` paths at equispaced timesteps."""
    hs = np.linspace(h_range[0], h_range[1], M)
    out = np.empty((7, M))
    steps = 0
    for j, h in enumerate(hs):
        st = run_batch(node.xy, TrajectoryParams(float(h)), problem, N,
                       stream_key(seed, PHASE_FIT, node.id, j), psi_table=psi_table,
                       threads=threads)
        out[:, j] = (st.mean(PHI), st.var(PHI), st.mean(TAU), st.mean(PSI), st.var(PSI),
                     st.mean_product(PSI, PHI), st.n)
        steps += st.steps
    return FitCloud(hs, N, out[0], out[1], out[2], out[3], out[4], out[5], steps)


def constants_from_cloud(node_id: int, cloud: FitCloud, q: float = 2.0,
                         delta: float = 1.0) -> NodalConstants:
    x = cloud.h ** delta
    shape = (cloud.n_paths - 1) / 2.0
    try:
        m_phi = fit_normal_identity(x, cloud.mean_phi)
        tau = fit_normal_identity(x, cloud.mean_tau)
        if np.all(cloud.var_phi > 0):
            v_phi = fit_gamma_identity(x, cloud.var_phi)
        else:
            # degenerate (constant) score
            v_phi = LineFit(float(cloud.var_phi.mean()), 0.0, 0.0, 0.0)
        if np.any(cloud.var_psi > 0):
            m_psi = fit_normal_identity(x, cloud.mean_psi)
            m_pp = fit_normal_identity(x, cloud.mean_psi_phi)
            v_psi = fit_gamma_identity(x, cloud.var_psi)
            cov = m_pp.intercept - m_psi.intercept * m_phi.intercept
            se_cov = m_pp.se_intercept
            V_psi = v_psi.intercept
            se_V_psi = v_psi.se_intercept
        else:
            cov = se_cov = V_psi = se_V_psi = float("nan")
    except (FitError, ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"node {node_id}: {exc}") from exc
    V_phi = v_phi.intercept
    if not V_phi >= 0:
        raise FitError(f"node {node_id}: fitted V[phi] = {V_phi:.3g} < 0")
    if np.isfinite(cov) and V_phi > 0 and V_psi > 0:
        rho = float(np.clip(cov / math.sqrt(V_phi * V_psi), -1.0, 1.0))
    else:
        rho = float("nan")
    K = cost_constant(tau.intercept, m_phi.slope, q, delta)
    return NodalConstants(node_id, m_phi.intercept, m_phi.slope, V_phi, v_phi.slope,
                          tau.intercept, K, cov, V_psi, rho,
                          m_phi.se_intercept, m_phi.se_slope, v_phi.se_intercept, v_phi.se_slope,
                          tau.se_intercept, se_cov, se_V_psi, tau.slope, cloud.steps)


def fit_node_constants(node, problem, psi_table=None, M: int = 100, N: int = 1000,
                       h_range=(1e-3, 1e-2), q: float = 2.0, delta: float = 1.0,
                       seed: int = 0, threads: int = 1) -> NodalConstants:
    cloud = fit_cloud(node, problem, psi_table, M, N, h_range, seed, threads)
    return constants_from_cloud(node.id, cloud, q, delta)


def fit_all_nodes(partition, problem, coefficients=None, M: int = 100, N: int = 1000,
                  h_range=(1e-3, 1e-2), q: float = 2.0, delta: float = 1.0, seed: int = 0,
                  threads: int = 1, cells_per_unit: Optional[int] = None, shape=None):
    """Two passes over the same trajectories.

    The first pass (no auxiliary variate) yields the bias signs, from which
    the error-propagation field and its gradient table are built; the second
    pass repeats the identical paths while integrating the auxiliary
    variate.  Returns ``(constants, psi_table, timings)``.
    """
    from .fd import DEFAULT_CELLS_PER_UNIT, gradient_table, solve_error_propagation

    coefficients = coefficients or problem.coefficients
    cpu = cells_per_unit or DEFAULT_CELLS_PER_UNIT
    first = [fit_node_constants(nd, problem, None, M, N, h_range, q, delta, seed, threads)
             for nd in partition.nodes]
    signs = np.sign([c.beta for c in first])
    signs[signs == 0] = 1.0
    t0 = time.perf_counter()
    w_bar = solve_error_propagation(partition, coefficients, signs, cells_per_unit=cpu, shape=shape)
    t1 = time.perf_counter()
    table = gradient_table(w_bar, partition)
    t2 = time.perf_counter()
    second = [fit_node_constants(nd, problem, table, M, N, h_range, q, delta, seed, threads)
              for nd in partition.nodes]
    timings = {"w_bar_solve_s": t1 - t0, "psi_table_s": t2 - t1,
               "pass1_steps": sum(c.fit_steps for c in first),
               "pass2_steps": sum(c.fit_steps for c in second)}
    return second, table, timings


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    raw_ratio: float
    ns_per_step_plain: float
    ns_per_step_cv: float


def estimate_kappa(problem, table=None, x0=None, h: float = 1e-3, min_steps: int = 100_000,
                   repeats: int = 5, seed: int = 0, cv_exact: bool = False) -> KappaEstimate:
    """Per-step wall-time ratio of control-variate to plain stepping.

    Median over ``repeats`` of the ratio on identical trajectories; each
    side runs at least ``min_steps`` integrator steps.  ``table=None`` (and
    no exact gradient) compares plain with plain.
    """
    if x0 is None:
        x0 = problem.domain.sample_interior(1, np.random.default_rng(seed))[0]
    tp = TrajectoryParams(h)
    key = stream_key(seed, PHASE_KAPPA)
    probe = run_batch(x0, tp, problem, 64, key)
    per_path = max(probe.steps / probe.n, 1.0)
    N = max(64, int(math.ceil(min_steps / per_path)))
    # warm-up compiles both code paths
    run_batch(x0, tp, problem, 2, key, cv_table=table, cv_exact=cv_exact)
    ratios, plain_ns, cv_ns = [], [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        a = run_batch(x0, tp, problem, N, key)
        t1 = time.perf_counter()
        b = run_batch(x0, tp, problem, N, key, cv_table=table, cv_exact=cv_exact)
        t2 = time.perf_counter()
        pa = (t1 - t0) / a.steps
        pb = (t2 - t1) / b.steps
        ratios.append(pb / pa)
        plain_ns.append(pa * 1e9)
        cv_ns.append(pb * 1e9)
    raw = statistics.median(ratios)
    return KappaEstimate(max(1.0, raw), raw, statistics.median(plain_ns), statistics.median(cv_ns))


# ---------------------------------------------------------------------------
# persistence

_CONST_FIELDS = [f.name for f in fields(NodalConstants)]


def write_constants_csv(constants: Sequence[NodalConstants], path,
                        global_constants: Optional[GlobalConstants] = None) -> None:
    with open(path, "w", newline="") as fh:
        if global_constants is not None:
            fh.write(f"# delta={global_constants.delta!r} kappa={global_constants.kappa!r}\n")
        w = csv.writer(fh)
        w.writerow(_CONST_FIELDS)
        for c in constants:
            w.writerow([repr(getattr(c, k)) if isinstance(getattr(c, k), float) else getattr(c, k)
                        for k in _CONST_FIELDS])


def read_constants_csv(path):
    """Returns ``(constants, GlobalConstants or None)``."""
    gc = None
    with open(path, newline="") as fh:
        lines = fh.readlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            kv = dict(tok.split("=") for tok in ln[1:].split())
            gc = GlobalConstants(float(kv["delta"]), float(kv["kappa"]))
        else:
            body.append(ln)
    rows = list(csv.DictReader(body))
    out = []
    for r in rows:
        vals = {}
        for f in fields(NodalConstants):
            vals[f.name] = int(r[f.name]) if f.name in ("node_id", "fit_steps") else float(r[f.name])
        out.append(NodalConstants(**vals))
    return out, gc

"""Risk criteria built from the DOF estimate, and a lambda-path driver.

With Gaussian noise of known standard deviation sigma, an unbiased DOF
estimate turns the residual norm into unbiased (SURE, Cp) or classical
(GCV, AIC) model-selection criteria.  `lambda_path` sweeps a decreasing
lambda grid with warm starts, recording every criterion per lambda.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import BlockPartition, Design
from .dof import dof_estimate
from .solver import ConvergenceError, Problem, SolverOptions, lambda_max, solve

CSV_HEADER = "lambda,dof,residual_sq,sure,gcv,cp,aic,active_dim,warning"


def sure(residual_sq, dof, sigma: float, Q: int):
    """Stein unbiased risk estimate of E ||Xb(y) - mu0||^2."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return residual_sq - Q * sigma**2 + 2.0 * sigma**2 * dof


def gcv(residual_sq, dof, Q: int):
    """Generalized cross-validation score (sigma-free)."""
    if np.any(np.asarray(dof) >= Q):
        raise ValueError("gcv requires dof < Q")
    return (residual_sq / Q) / (1.0 - np.asarray(dof) / Q) ** 2


def cp(residual_sq, dof, sigma: float, Q: int):
    """Mallows' Cp; equals SURE / sigma^2."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return residual_sq / sigma**2 - Q + 2.0 * dof


def aic(residual_sq, dof, sigma: float, Q: int):
    """AIC for Gaussian noise with known sigma, up to constants; Cp + Q."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return residual_sq / sigma**2 + 2.0 * dof


def estimate_sigma(design: Design, y) -> float:
    """Unbiased noise estimate from full least-squares residuals, Q > N only."""
    q, n = design.Q, design.N
    if q <= n:
        raise ValueError("sigma estimation needs strictly more rows than columns")
    y = np.asarray(y, dtype=float)
    beta_ls = scipy.linalg.cho_solve(design.gram_cholesky, design.matrix.T @ y)
    resid = y - design.matrix @ beta_ls
    return float(np.sqrt(resid @ resid / (q - n)))


def default_lambda_grid(lam_max: float, n_points: int = 50, decades: float = 2.0) -> np.ndarray:
    """Log-spaced grid from lam_max down to lam_max / 10**decades."""
    if not lam_max > 0:
        raise ValueError("lam_max must be positive")
    return lam_max * np.logspace(0.0, -decades, n_points)


@dataclass(frozen=True)
class RiskCurve:
    """Per-lambda risk criteria along a decreasing regularization path.

    Criteria needing sigma (sure, cp, aic) are NaN when sigma is None;
    every statistic is NaN at lambdas whose solve failed to certify
    (positions listed in `failed`).
    """

    lambdas: np.ndarray
    dof: np.ndarray
    residual_sq: np.ndarray
    sure: np.ndarray
    gcv: np.ndarray
    cp: np.ndarray
    aic: np.ndarray
    active_dim: np.ndarray
    warning: np.ndarray
    sigma: float | None
    failed: tuple[int, ...] = ()

    def select(self, criterion: str = "sure") -> float:
        """Grid argmin of a criterion; ties resolve to the larger lambda."""
        col = getattr(self, criterion, None)
        if criterion not in ("sure", "gcv", "cp", "aic") or col is None:
            raise ValueError(f"unknown criterion {criterion!r}")
        if np.all(np.isnan(col)):
            raise ValueError(f"criterion {criterion!r} is unavailable on this curve")
        # lambdas are decreasing, so the first minimum is the sparsest model
        return float(self.lambdas[np.nanargmin(col)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for i in range(len(self.lambdas)):
            cells = [_sci(self.lambdas[i]), _sci(self.dof[i]), _sci(self.residual_sq[i]),
                     _sci(self.sure[i]), _sci(self.gcv[i]), _sci(self.cp[i]),
                     _sci(self.aic[i]), str(int(self.active_dim[i])),
                     str(int(bool(self.warning[i])))]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    def __len__(self) -> int:
        return len(self.lambdas)


def _sci(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return np.format_float_scientific(x, precision=16, unique=False)


def lambda_path(design: Design, y, partition: BlockPartition, lambdas=None, *,
                sigma: float | None = None, n_points: int = 50, decades: float = 2.0,
                opts: SolverOptions | None = None, jobs: int = 1) -> RiskCurve:
    """Solve along a decreasing lambda grid and record all risk criteria.

    With jobs == 1 (default) the sweep runs sequentially, warm-starting each
    solve at the previous solution.  With jobs > 1 the lambdas are solved
    concurrently from cold starts; results agree within solver tolerance.
    A solve that fails to certify is recorded as NaN and the sweep continues.
    """
    y = np.asarray(y, dtype=float)
    if lambdas is None:
        lambdas = default_lambda_grid(lambda_max(design, y, partition), n_points, decades)
    lambdas = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    if lambdas.size == 0 or np.any(lambdas <= 0):
        raise ValueError("lambda grid must be nonempty and positive")
    if np.any(np.diff(lambdas) == 0):
        raise ValueError("lambda grid has repeated values")
    opts = opts or SolverOptions()

    n = lambdas.size
    dof_v = np.full(n, np.nan)
    rss = np.full(n, np.nan)
    adim = np.zeros(n, dtype=int)
    warn = np.zeros(n, dtype=bool)
    failed = []

    def run_one(lam, warm):
        problem = Problem(design, y, lam, partition)
        sol = solve(problem, SolverOptions(kkt_tol=opts.kkt_tol, max_iter=opts.max_iter,
                                           warm_start=warm))
        report = dof_estimate(problem, sol)
        resid = y - design.matrix @ sol.beta.values
        return sol, report, float(resid @ resid)

    if jobs <= 1:
        warm = opts.warm_start
        for i, lam in enumerate(lambdas):
            try:
                sol, report, rss_i = run_one(lam, warm)
            except ConvergenceError:
                failed.append(i)
                continue
            warm = sol.beta.values
            dof_v[i], rss[i] = report.divergence, rss_i
            adim[i], warn[i] = report.support.active_dim, report.warning
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_one, lam, None) for lam in lambdas]
            for i, fut in enumerate(futures):
                try:
                    sol, report, rss_i = fut.result()
                except ConvergenceError:
                    failed.append(i)
                    continue
                dof_v[i], rss[i] = report.divergence, rss_i
                adim[i], warn[i] = report.support.active_dim, report.warning

    q = design.Q
    if sigma is not None:
        sure_v = sure(rss, dof_v, sigma, q)
        cp_v = cp(rss, dof_v, sigma, q)
        aic_v = aic(rss, dof_v, sigma, q)
    else:
        sure_v = np.full(n, np.nan)
        cp_v = np.full(n, np.nan)
        aic_v = np.full(n, np.nan)
    with np.errstate(invalid="ignore"):
        gcv_v = (rss / q) / (1.0 - dof_v / q) ** 2

    return RiskCurve(lambdas=lambdas, dof=dof_v, residual_sq=rss, sure=sure_v,
                     gcv=gcv_v, cp=cp_v, aic=aic_v, active_dim=adim, warning=warn,
                     sigma=sigma, failed=tuple(failed))

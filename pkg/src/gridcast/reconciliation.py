"""Coherency restoration for forecasts across a hierarchy.

Base forecasters treat every series independently, so their outputs
generally violate the aggregation identities. This module estimates
the covariance of base-forecast errors (Ledoit-Wolf shrinkage or a
graphical-lasso sparse precision fit) and maps the stacked forecasts
back onto the coherent subspace, either by projection (plain or
covariance-weighted least squares) or by Gaussian conditioning of the
bottom series on the aggregate observations.

All reconcilers are linear in the stacked forecast vector and leave
coherent points fixed, so the same map applies to forecast errors;
quantile fans are rebuilt around the reconciled points from banks of
reconciled training errors.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, NumericError
from .forecasters.error_bank import build_error_bank, result_from_bank
from .forecasters.results import ForecastResult, QuantileGrid
from .hierarchy import Hierarchy

__all__ = [
    "BaseForecastSet",
    "CovarianceEstimate",
    "ReconciledForecastSet",
    "estimate_ledoit_wolf",
    "estimate_graphical_lasso",
    "reconcile_ols",
    "reconcile_mint",
    "reconcile_bayes",
    "reconcile_quantiles",
    "reconciliation_matrix",
    "save_reconciliation_matrix",
]

# Deterministic diagonal bump applied when an estimated covariance (or a
# normal-equation matrix) is not numerically positive definite.
JITTER_SCALE = 1e-8
# Condition number beyond which weighted projections get the jitter too.
CONDITION_WARN = 1e12


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def _jittered(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Return a positive-definite version of ``matrix`` and the bump used."""
    eigmin = float(np.linalg.eigvalsh(matrix)[0])
    if eigmin > 0.0:
        return matrix, 0.0
    bump = JITTER_SCALE * float(np.trace(matrix)) / matrix.shape[0]
    fixed = matrix + bump * np.eye(matrix.shape[0])
    if float(np.linalg.eigvalsh(fixed)[0]) <= 0.0:
        raise NumericError(
            f"covariance is not positive definite (smallest eigenvalue "
            f"{eigmin:.3e}) and the {bump:.3e} diagonal jitter did not fix it"
        )
    return fixed, bump


@dataclass(frozen=True)
class CovarianceEstimate:
    """Symmetric positive-definite error covariance across series.

    ``regularization`` records the estimator's tuning value (shrinkage
    intensity or lasso penalty); ``jitter`` the diagonal bump, if any,
    that restored positive definiteness. Graphical-lasso estimates also
    carry the fitted sparse ``precision`` matrix.
    """

    matrix: np.ndarray
    method: str
    regularization: float
    jitter: float = 0.0
    precision: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ConfigError("covariance must be a square matrix")
        if not np.array_equal(w, w.T):
            raise ConfigError("covariance must be exactly symmetric")
        if not np.isfinite(w).all():
            raise NumericError("covariance has non-finite entries")
        if float(np.linalg.eigvalsh(w)[0]) <= 0.0:
            raise NumericError(
                "covariance must be positive definite; jitter it before wrapping"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "matrix", w)
        if self.precision is not None:
            p = np.asarray(self.precision, dtype=np.float64)
            if p.shape != w.shape:
                raise ConfigError("precision must match the covariance shape")
            p = p.copy()
            p.setflags(write=False)
            object.__setattr__(self, "precision", p)

    @property
    def n_series(self) -> int:
        return self.matrix.shape[0]


def _error_samples(errors: np.ndarray) -> np.ndarray:
    x = np.asarray(errors, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("errors must be a 2-D samples-by-series array")
    if x.shape[0] < 2:
        raise DataError(f"need at least 2 error samples, got {x.shape[0]}")
    if not np.isfinite(x).all():
        raise DataError("error samples contain non-finite values")
    return x


def estimate_ledoit_wolf(errors: np.ndarray) -> CovarianceEstimate:
    """Shrink the sample covariance toward a scaled identity.

    Uses the closed-form shrinkage intensity that minimizes expected
    squared Frobenius loss, so the estimate stays well conditioned even
    with fewer samples than series. ``errors`` is (samples, series).

    Forecast errors are treated as zero-mean: the raw second moment is
    used as the sample covariance. (Centering would also make the
    intensity formula degenerate at two samples, where every centered
    sample reproduces the sample covariance exactly.)
    """
    x = _error_samples(errors)
    m, n = x.shape
    xc = x
    sample = _symmetrize(xc.T @ xc / m)
    mu = float(np.trace(sample)) / n
    # Squared distances in the normalized Frobenius norm tr(A A^T) / n.
    d2 = float(((sample - mu * np.eye(n)) ** 2).sum()) / n
    if d2 <= 0.0:
        delta = 0.0
        w = sample
    else:
        sq_norms = (xc**2).sum(axis=1)
        b2 = (float((sq_norms**2).sum()) / n - m * float((sample**2).sum()) / n) / m**2
        b2 = min(max(b2, 0.0), d2)
        delta = b2 / d2
        w = _symmetrize((1.0 - delta) * sample + delta * mu * np.eye(n))
    w, bump = _jittered(w)
    return CovarianceEstimate(w, "ledoit-wolf", float(delta), bump)


def _soft_threshold(value: float, penalty: float) -> float:
    if value > penalty:
        return value - penalty
    if value < -penalty:
        return value + penalty
    return 0.0


def _lasso_cd(
    gram: np.ndarray,
    target: np.ndarray,
    penalty: float,
    beta: np.ndarray,
    max_iter: int = 1000,
    tol: float = 1e-12,
) -> np.ndarray:
    """Coordinate descent for 0.5 b'Gb - t'b + penalty * |b|_1, in place."""
    p = target.size
    scale = max(1.0, float(np.abs(target).max(initial=0.0)))
    for _ in range(max_iter):
        worst = 0.0
        for j in range(p):
            residual = target[j] - gram[j] @ beta + gram[j, j] * beta[j]
            new = _soft_threshold(residual, penalty) / gram[j, j]
            worst = max(worst, abs(new - beta[j]))
            beta[j] = new
        if worst <= tol * scale:
            break
    return beta


def estimate_graphical_lasso(
    errors: np.ndarray,
    penalty: float | None = None,
    max_sweeps: int = 500,
    gap_tol: float = 1e-9,
) -> CovarianceEstimate:
    """Sparse inverse-covariance fit by block coordinate descent.

    Maximizes the L1-penalized Gaussian log-likelihood with the penalty
    on off-diagonal precision entries only, so the fitted covariance
    keeps the sample diagonal. ``penalty=None`` picks
    ``0.01 * mean |off-diagonal sample covariance|``; with ``penalty=0``
    on well-conditioned data the fit reproduces the sample covariance.
    Raises on non-convergence, quoting the current duality gap. As with
    the shrinkage estimator, errors are treated as zero-mean.
    """
    x = _error_samples(errors)
    m, n = x.shape
    xc = x
    sample = _symmetrize(xc.T @ xc / m)
    if penalty is None:
        if n == 1:
            penalty = 0.0
        else:
            off = np.abs(sample[~np.eye(n, dtype=bool)])
            penalty = 0.01 * float(off.mean())
    if penalty < 0.0:
        raise ConfigError("penalty must be nonnegative")

    if n == 1:
        w, bump = _jittered(sample.copy())
        return CovarianceEstimate(
            w, "graphical-lasso", float(penalty), bump, precision=1.0 / w
        )

    w = sample.copy()
    betas = np.zeros((n, n - 1))
    others = [np.array([j for j in range(n) if j != i]) for i in range(n)]
    # The duality gap can hit zero while W still carries staleness from
    # earlier in the same sweep, so convergence also requires W to have
    # stopped moving.
    move_tol = 1e-8 * max(1.0, float(np.diag(sample).max(initial=0.0)))
    gap = np.inf
    converged = False
    for _ in range(max_sweeps):
        w_prev = w.copy()
        for i in range(n):
            idx = others[i]
            gram = w[np.ix_(idx, idx)]
            target = sample[idx, i]
            if penalty == 0.0:
                betas[i] = np.linalg.solve(gram, target)
            else:
                _lasso_cd(gram, target, penalty, betas[i])
            w12 = gram @ betas[i]
            w[idx, i] = w12
            w[i, idx] = w12
        theta = _recover_precision(w, betas, others)
        gap = _duality_gap(sample, theta, penalty)
        if abs(gap) <= gap_tol * n and float(np.abs(w - w_prev).max()) <= move_tol:
            converged = True
            break
    if not converged:
        raise NumericError(
            f"graphical lasso did not converge in {max_sweeps} sweeps; "
            f"duality gap is {gap:.3e}"
        )
    theta = _recover_precision(w, betas, others)
    w, bump = _jittered(_symmetrize(w))
    return CovarianceEstimate(w, "graphical-lasso", float(penalty), bump, precision=theta)


def _recover_precision(
    w: np.ndarray, betas: np.ndarray, others: list[np.ndarray]
) -> np.ndarray:
    """Invert the fitted covariance using the per-column lasso solutions."""
    n = w.shape[0]
    theta = np.empty((n, n))
    for i in range(n):
        idx = others[i]
        denom = w[i, i] - w[idx, i] @ betas[i]
        theta[i, i] = 1.0 / denom
        theta[idx, i] = -betas[i] * theta[i, i]
    return _symmetrize(theta)


def _duality_gap(sample: np.ndarray, theta: np.ndarray, penalty: float) -> float:
    n = sample.shape[0]
    off_l1 = float(np.abs(theta).sum() - np.abs(np.diag(theta)).sum())
    return float((sample * theta).sum()) - n + penalty * off_l1


@dataclass(frozen=True)
class BaseForecastSet:
    """Stacked per-series forecasts, columns ordered as Hierarchy rows.

    ``forecasts`` is (n_instants, n_series) with the upper aggregations
    first and the bottom series last. ``train_errors`` optionally holds
    training residuals (prediction minus truth) in the same column
    order, for covariance estimation and reconciled fans.
    """

    forecasts: np.ndarray
    train_errors: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.forecasts, dtype=np.float64)
        if y.ndim != 2:
            raise ConfigError("forecasts must be (n_instants, n_series)")
        if not np.isfinite(y).all():
            raise DataError("forecasts contain non-finite values")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "forecasts", y)
        if self.train_errors is not None:
            e = np.asarray(self.train_errors, dtype=np.float64)
            if e.ndim != 2 or e.shape[1] != y.shape[1]:
                raise ConfigError(
                    "train_errors must be 2-D with one column per series"
                )
            e = e.copy()
            e.setflags(write=False)
            object.__setattr__(self, "train_errors", e)

    @property
    def n_series(self) -> int:
        return self.forecasts.shape[1]

    @property
    def n_instants(self) -> int:
        return self.forecasts.shape[0]


@dataclass(frozen=True)
class ReconciledForecastSet:
    """Coherent forecasts: bottom series plus their exact aggregations.

    ``full`` is always computed as ``bottom @ S.T``, so the aggregation
    identities hold to machine precision by construction. For the
    Gaussian-conditioning method, ``posterior_covariance`` carries the
    bottom-block posterior for probabilistic use.
    """

    bottom: np.ndarray
    full: np.ndarray
    method: str
    posterior_covariance: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.bottom, dtype=np.float64)
        f = np.asarray(self.full, dtype=np.float64)
        if b.ndim != 2 or f.ndim != 2 or f.shape[0] != b.shape[0]:
            raise ConfigError("bottom and full must be aligned 2-D arrays")
        if f.shape[1] < b.shape[1]:
            raise ConfigError("full must cover at least the bottom series")
        if not np.array_equal(f[:, f.shape[1] - b.shape[1] :], b):
            raise ConfigError("full must embed the bottom block verbatim")
        b = b.copy()
        b.setflags(write=False)
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "bottom", b)
        object.__setattr__(self, "full", f)


def _checked_forecasts(base: BaseForecastSet, hierarchy: Hierarchy) -> np.ndarray:
    if not isinstance(base, BaseForecastSet):
        base = BaseForecastSet(np.asarray(base))
    if base.forecasts.shape[1] != hierarchy.n_series:
        raise ConfigError(
            f"forecast set has {base.forecasts.shape[1]} series, "
            f"hierarchy has {hierarchy.n_series}"
        )
    return base.forecasts


def _check_covariance(cov: CovarianceEstimate, hierarchy: Hierarchy) -> np.ndarray:
    if cov.n_series != hierarchy.n_series:
        raise ConfigError(
            f"covariance is {cov.n_series}x{cov.n_series}, "
            f"hierarchy has {hierarchy.n_series} series"
        )
    return cov.matrix


def _ols_map(hierarchy: Hierarchy) -> np.ndarray:
    s = hierarchy.s_matrix
    return np.linalg.solve(s.T @ s, s.T)


def _mint_map(hierarchy: Hierarchy, w: np.ndarray) -> np.ndarray:
    s = hierarchy.s_matrix
    winv_s = np.linalg.solve(w, s)
    normal = s.T @ winv_s
    cond = float(np.linalg.cond(normal))
    if not np.isfinite(cond) or cond > CONDITION_WARN:
        bump = JITTER_SCALE * float(np.trace(normal)) / normal.shape[0]
        warnings.warn(
            f"weighted projection is ill-conditioned (condition number "
            f"{cond:.3e}); adding {bump:.3e} diagonal jitter",
            stacklevel=3,
        )
        normal = normal + bump * np.eye(normal.shape[0])
    return np.linalg.solve(normal, winv_s.T)


def _bayes_pieces(
    hierarchy: Hierarchy, w: np.ndarray, include_cross_covariance: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Kalman-style gain and posterior covariance of the bottom series."""
    n_u = hierarchy.n_upper
    if n_u < 1:
        raise ConfigError("Gaussian conditioning needs at least one upper series")
    a = hierarchy.a_matrix
    sigma_u = w[:n_u, :n_u]
    sigma_b = w[n_u:, n_u:]
    cross = sigma_b @ a.T
    innov = a @ sigma_b @ a.T + sigma_u
    if include_cross_covariance:
        sigma_bu = w[n_u:, :n_u]
        cross = cross - sigma_bu
        coupling = a @ sigma_bu
        innov = innov - coupling - coupling.T
    innov = _symmetrize(innov)
    eigmin = float(np.linalg.eigvalsh(innov)[0])
    if eigmin <= 0.0:
        bump = JITTER_SCALE * float(np.trace(innov)) / innov.shape[0]
        warnings.warn(
            f"innovation covariance is singular (smallest eigenvalue "
            f"{eigmin:.3e}); adding {bump:.3e} diagonal jitter",
            stacklevel=3,
        )
        innov = innov + bump * np.eye(innov.shape[0])
    gain = np.linalg.solve(innov, cross.T).T
    posterior = _symmetrize(sigma_b - gain @ cross.T)
    return gain, posterior


def reconcile_ols(base: BaseForecastSet, hierarchy: Hierarchy) -> ReconciledForecastSet:
    """Orthogonal projection of forecasts onto the coherent subspace."""
    y = _checked_forecasts(base, hierarchy)
    bottom = y @ _ols_map(hierarchy).T
    return ReconciledForecastSet(bottom, hierarchy.aggregate(bottom), "ols")


def reconcile_mint(
    base: BaseForecastSet, hierarchy: Hierarchy, cov: CovarianceEstimate
) -> ReconciledForecastSet:
    """Covariance-weighted projection (trace-minimizing reconciliation)."""
    y = _checked_forecasts(base, hierarchy)
    w = _check_covariance(cov, hierarchy)
    bottom = y @ _mint_map(hierarchy, w).T
    return ReconciledForecastSet(bottom, hierarchy.aggregate(bottom), "mint")


def reconcile_bayes(
    base: BaseForecastSet,
    hierarchy: Hierarchy,
    cov: CovarianceEstimate,
    include_cross_covariance: bool = False,
) -> ReconciledForecastSet:
    """Gaussian conditioning of bottom forecasts on the upper series.

    The bottom forecasts act as the prior mean with the bottom block of
    the error covariance; the upper forecasts are treated as noisy
    observations of their aggregations. By default the upper/bottom
    error cross-covariance is dropped; ``include_cross_covariance``
    keeps it.
    """
    y = _checked_forecasts(base, hierarchy)
    w = _check_covariance(cov, hierarchy)
    gain, posterior = _bayes_pieces(hierarchy, w, include_cross_covariance)
    n_u = hierarchy.n_upper
    y_upper = y[:, :n_u]
    y_bottom = y[:, n_u:]
    innovation = y_upper - y_bottom @ hierarchy.a_matrix.T
    bottom = y_bottom + innovation @ gain.T
    return ReconciledForecastSet(
        bottom, hierarchy.aggregate(bottom), "bayes", posterior_covariance=posterior
    )


def reconciliation_matrix(
    hierarchy: Hierarchy,
    method: str,
    cov: CovarianceEstimate | None = None,
    include_cross_covariance: bool = False,
) -> np.ndarray:
    """Full linear map M with reconciled = forecasts @ M.T, shape (n, n).

    Useful for inspection and for pushing training errors through the
    same transformation as the forecasts (coherent truths are fixed
    points of every method, so reconciled errors are M @ errors).
    """
    if method == "ols":
        g = _ols_map(hierarchy)
    elif method == "mint":
        if cov is None:
            raise ConfigError("weighted reconciliation needs a covariance estimate")
        g = _mint_map(hierarchy, _check_covariance(cov, hierarchy))
    elif method == "bayes":
        if cov is None:
            raise ConfigError("Gaussian conditioning needs a covariance estimate")
        w = _check_covariance(cov, hierarchy)
        gain, _ = _bayes_pieces(hierarchy, w, include_cross_covariance)
        n_b = hierarchy.n_bottom
        g = np.hstack([gain, np.eye(n_b) - gain @ hierarchy.a_matrix])
    else:
        raise ConfigError(f"unknown reconciliation method {method!r}")
    return hierarchy.s_matrix @ g


def reconcile_quantiles(
    mean: np.ndarray,
    issue_index: np.ndarray,
    train_errors: np.ndarray,
    train_issue_step_of_day: np.ndarray,
    steps_per_day: int,
    grid: QuantileGrid,
) -> ForecastResult:
    """Empirical fans around reconciled points, one series at a time.

    ``train_errors`` are the reconciled training residuals of this
    series, (n_rows, horizon); the fan is the banked-quantile shift of
    those errors applied to the reconciled point forecasts.
    """
    bank = build_error_bank(train_errors, train_issue_step_of_day, steps_per_day, grid)
    return result_from_bank(bank, mean, issue_index, steps_per_day)


def save_reconciliation_matrix(
    path, matrix: np.ndarray, hierarchy: Hierarchy
) -> None:
    """Write a reconciliation map as CSV with series names on both axes."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (hierarchy.n_series, hierarchy.n_series):
        raise ConfigError("expected a full n-by-n reconciliation map")
    frame = pd.DataFrame(matrix, index=hierarchy.names, columns=hierarchy.names)
    frame.to_csv(path, index_label="series")

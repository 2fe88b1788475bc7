"""Additive trend + seasonality + regressor model fitted by penalised least squares.

The design has three blocks:

* trend: intercept, slope and hinge columns ``max(0, tau - s_j)``, where
  ``tau`` maps the fitting window onto [0, 1] and the knots ``s_j`` are
  spread evenly over its first ``changepoint_range``;
* seasonality: ``sin``/``cos`` pairs of ``2 pi k t / period`` on the raw
  week index ``t``;
* regressors: external columns standardised on the fitting window.

The target is divided by its largest absolute value before fitting. The
objective

    0.5 * ||y - B b||^2 + l_cp * sum|b_hinge| + l_s * ||b_season||^2 + l_r * ||b_reg||^2

with ``l_cp = 1 / prior_scale_changepoints``, ``l_s = 1 / (2 prior_scale_seasonality^2)``
and ``l_r = 1 / (2 prior_scale_regressors^2)`` is minimised by cyclic
coordinate descent over blocks: the quadratic part (trend line,
seasonality, regressors) is minimised exactly in one step per sweep, then
each hinge coefficient is soft-thresholded in turn.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, FeatureError

UNPENALISED, L1, L2 = 0, 1, 2


@dataclass(frozen=True)
class AdditiveParams:
    n_changepoints: int = 25
    changepoint_range: float = 0.8
    fourier_order: int = 10
    period_weeks: float = 52.18
    prior_scale_changepoints: float = 0.05
    prior_scale_seasonality: float = 10.0
    prior_scale_regressors: float = 10.0
    tol: float = 1e-8
    max_sweeps: int = 10_000

    def validate(self):
        if self.n_changepoints < 0 or self.fourier_order < 0:
            raise ValueError("n_changepoints and fourier_order must be non-negative")
        if not 0 < self.changepoint_range <= 1:
            raise ValueError("changepoint_range must lie in (0, 1]")
        for name in ("period_weeks", "prior_scale_changepoints", "prior_scale_seasonality", "prior_scale_regressors"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class AdditiveBasis:
    matrix: np.ndarray
    t0: float
    t_span: float
    knots: np.ndarray
    period: float
    fourier_order: int
    regressor_names: tuple[str, ...] = ()
    reg_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reg_std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_trend(self):
        return 2 + len(self.knots)

    @property
    def trend(self) -> slice:
        return slice(0, self.n_trend)

    @property
    def hinges(self) -> slice:
        return slice(2, self.n_trend)

    @property
    def seasonal(self) -> slice:
        return slice(self.n_trend, self.n_trend + 2 * self.fourier_order)

    @property
    def regressors(self) -> slice:
        start = self.n_trend + 2 * self.fourier_order
        return slice(start, start + len(self.regressor_names))

    def rebuild(self, week_indices, regressors=None) -> "AdditiveBasis":
        """Same knots and standardisation, evaluated at new weeks."""
        return build_basis(week_indices, regressors=regressors, frozen=self)


def _regressor_block(regressors, names, n):
    if regressors is None:
        return np.zeros((n, 0)), ()
    if isinstance(regressors, dict):
        names = tuple(regressors) if names is None else names
        missing = [k for k in names if k not in regressors]
        if missing:
            raise KeyError(f"missing regressor columns: {missing}")
        block = np.column_stack([np.asarray(regressors[k], float) for k in names]) if names else np.zeros((n, 0))
        return block, tuple(names)
    block = np.asarray(regressors, dtype=float).reshape(n, -1)
    if names is None:
        names = tuple(f"r{i}" for i in range(block.shape[1]))
    if block.shape[1] != len(names):
        raise KeyError(f"expected {len(names)} regressor columns, got {block.shape[1]}")
    return block, tuple(names)


def build_basis(week_indices, params: AdditiveParams | None = None, regressors=None, frozen: AdditiveBasis | None = None) -> AdditiveBasis:
    """Design matrix of the additive model.

    On the fitting window pass ``params``; to forecast, pass the fitted
    basis as ``frozen`` so knots and regressor scaling are reused.
    ``regressors`` is a ``{name: values}`` dict or a 2-D array.
    """
    t = np.asarray(week_indices, dtype=float)
    n = len(t)
    if n == 0:
        raise FeatureError("empty week index")
    if frozen is None:
        params = params or AdditiveParams()
        params.validate()
        if np.any(np.diff(t) <= 0):
            raise FeatureError("week indices must be strictly increasing")
        if params.n_changepoints >= n:
            raise FeatureError(f"n_changepoints={params.n_changepoints} needs more than {n} rows")
        t0 = t[0]
        t_span = t[-1] - t[0] if n > 1 else 1.0
        cp = params.n_changepoints
        knots = params.changepoint_range * np.arange(1, cp + 1) / cp if cp else np.zeros(0)
        period = params.period_weeks
        order = params.fourier_order
        reg, names = _regressor_block(regressors, None, n)
        mean = reg.mean(axis=0) if len(names) else np.zeros(0)
        std = reg.std(axis=0) if len(names) else np.zeros(0)
        flat = [nm for nm, s in zip(names, std) if not s > 0]
        if flat:
            raise FeatureError(f"degenerate regressor columns (zero variance): {flat}")
    else:
        t0, t_span, knots = frozen.t0, frozen.t_span, frozen.knots
        period, order = frozen.period, frozen.fourier_order
        names = frozen.regressor_names
        reg, names = _regressor_block(regressors, names, n)
        mean, std = frozen.reg_mean, frozen.reg_std
    tau = (t - t0) / t_span
    cols = [np.ones(n), tau]
    cols += [np.maximum(0.0, tau - s) for s in knots]
    for k in range(1, order + 1):
        arg = 2.0 * np.pi * k * t / period
        cols += [np.sin(arg), np.cos(arg)]
    matrix = np.column_stack(cols)
    if len(names):
        matrix = np.hstack([matrix, (reg - mean) / std])
    return AdditiveBasis(matrix, float(t0), float(t_span), knots, float(period), order, names, mean, std)


@njit(cache=True)
def _objective(beta, g_beta, cy, yy, kind, lam):
    val = 0.5 * yy
    for j in range(len(beta)):
        val += -cy[j] * beta[j] + 0.5 * beta[j] * g_beta[j]
        if kind[j] == 1:
            val += lam[j] * abs(beta[j])
        elif kind[j] == 2:
            val += lam[j] * beta[j] * beta[j]
    return val


@njit(cache=True)
def _coordinate_descent(gram, cy, yy, kind, lam, beta, smooth_inv, tol, max_sweeps):
    # Block-cyclic: the quadratic (unpenalised + ridge) block is minimised
    # exactly in one step, then each L1 hinge coefficient in turn.
    p = gram.shape[0]
    smooth = np.flatnonzero(kind != 1)
    sparse = np.flatnonzero(kind == 1)
    g_beta = gram @ beta
    history = np.empty(max_sweeps + 1)
    history[0] = _objective(beta, g_beta, cy, yy, kind, lam)
    delta = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        delta = 0.0
        if len(smooth):
            rhs = np.empty(len(smooth))
            for a in range(len(smooth)):
                j = smooth[a]
                acc = cy[j]
                for h in sparse:
                    acc -= gram[j, h] * beta[h]
                rhs[a] = acc
            new_block = smooth_inv @ rhs
            for a in range(len(smooth)):
                j = smooth[a]
                step = new_block[a] - beta[j]
                if step != 0.0:
                    for k in range(p):
                        g_beta[k] += step * gram[k, j]
                    beta[j] = new_block[a]
                    delta = max(delta, abs(step))
        for j in sparse:
            d = gram[j, j]
            rho = cy[j] - g_beta[j] + d * beta[j]
            if rho > lam[j]:
                new = (rho - lam[j]) / d
            elif rho < -lam[j]:
                new = (rho + lam[j]) / d
            else:
                new = 0.0
            step = new - beta[j]
            if step != 0.0:
                for k in range(p):
                    g_beta[k] += step * gram[k, j]
                beta[j] = new
                delta = max(delta, abs(step))
        # Active-set refinement on the current sign face.
        n_act = 0
        for j in sparse:
            if beta[j] != 0.0:
                n_act += 1
        if n_act:
            idx = np.empty(len(smooth) + n_act, dtype=np.int64)
            idx[: len(smooth)] = smooth
            m = len(smooth)
            for j in sparse:
                if beta[j] != 0.0:
                    idx[m] = j
                    m += 1
            A = np.empty((m, m))
            b = np.empty(m)
            for a in range(m):
                ja = idx[a]
                for c in range(m):
                    A[a, c] = gram[ja, idx[c]]
                b[a] = cy[ja]
                if kind[ja] == 2:
                    A[a, a] += 2.0 * lam[ja]
                elif kind[ja] == 1:
                    b[a] -= lam[ja] * np.sign(beta[ja])
            trial = np.linalg.solve(A, b)
            if np.isfinite(trial).all():
                # Move toward the face minimiser, stopping where the first
                # active hinge reaches zero; convexity keeps this a descent.
                theta = 1.0
                hit = -1
                for a in range(len(smooth), m):
                    cur = beta[idx[a]]
                    if trial[a] * cur <= 0.0:
                        frac = cur / (cur - trial[a])
                        if frac < theta:
                            theta = frac
                            hit = a
                cand = beta.copy()
                for a in range(m):
                    cand[idx[a]] = beta[idx[a]] + theta * (trial[a] - beta[idx[a]])
                if hit >= 0:
                    cand[idx[hit]] = 0.0
                g_cand = gram @ cand
                if _objective(cand, g_cand, cy, yy, kind, lam) <= _objective(beta, g_beta, cy, yy, kind, lam):
                    for a in range(m):
                        delta = max(delta, abs(cand[idx[a]] - beta[idx[a]]))
                    beta[:] = cand
                    g_beta[:] = g_cand
        sweeps += 1
        history[sweeps] = _objective(beta, g_beta, cy, yy, kind, lam)
        if delta < tol:
            break
    return beta, history[: sweeps + 1], delta, sweeps


@dataclass(frozen=True, eq=False)
class AdditiveModel:
    """Fitted coefficients (on the scaled target) plus everything needed to
    rebuild the basis for new weeks."""

    coef: np.ndarray
    y_scale: float
    basis: AdditiveBasis
    params: AdditiveParams
    objective_history: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    sweeps: int = 0

    @property
    def trend_slope(self) -> float:
        """Base trend slope in target units per week."""
        return self.y_scale * self.coef[1] / self.basis.t_span

    @property
    def trend_intercept(self) -> float:
        """Base trend line evaluated at week index 0."""
        return self.y_scale * (self.coef[0] - self.coef[1] * self.basis.t0 / self.basis.t_span)

    def coefficients(self, block: str) -> np.ndarray:
        return self.y_scale * self.coef[getattr(self.basis, block)]

    def predict(self, week_indices, regressors=None) -> np.ndarray:
        basis = self.basis.rebuild(week_indices, regressors)
        return self.y_scale * (basis.matrix @ self.coef)

    def to_dict(self) -> dict:
        b = self.basis
        return {
            "kind": "additive",
            "params": asdict(self.params),
            "coef": self.coef.tolist(),
            "y_scale": self.y_scale,
            "basis": {
                "t0": b.t0,
                "t_span": b.t_span,
                "knots": b.knots.tolist(),
                "period": b.period,
                "fourier_order": b.fourier_order,
                "regressor_names": list(b.regressor_names),
                "reg_mean": b.reg_mean.tolist(),
                "reg_std": b.reg_std.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdditiveModel":
        b = data["basis"]
        basis = AdditiveBasis(
            np.zeros((0, 0)),
            b["t0"],
            b["t_span"],
            np.array(b["knots"], float),
            b["period"],
            b["fourier_order"],
            tuple(b["regressor_names"]),
            np.array(b["reg_mean"], float),
            np.array(b["reg_std"], float),
        )
        return cls(np.array(data["coef"], float), data["y_scale"], basis, AdditiveParams(**data["params"]))


def penalties(basis: AdditiveBasis, params: AdditiveParams):
    p = basis.matrix.shape[1]
    kind = np.zeros(p, dtype=np.int64)
    lam = np.zeros(p)
    kind[basis.hinges] = L1
    lam[basis.hinges] = 1.0 / params.prior_scale_changepoints
    kind[basis.seasonal] = L2
    lam[basis.seasonal] = 1.0 / (2.0 * params.prior_scale_seasonality**2)
    kind[basis.regressors] = L2
    lam[basis.regressors] = 1.0 / (2.0 * params.prior_scale_regressors**2)
    return kind, lam


def fit_additive(y, basis: AdditiveBasis, params: AdditiveParams | None = None) -> AdditiveModel:
    """Penalised least-squares fit by block-cyclic coordinate descent.

    Stops when no coefficient moves by more than ``params.tol`` in a sweep;
    raises :class:`ConvergenceError` after ``params.max_sweeps`` sweeps.
    """
    params = params or AdditiveParams()
    y = np.asarray(y, dtype=float)
    B = basis.matrix
    if len(y) != len(B):
        raise ValueError(f"{len(y)} targets for {len(B)} basis rows")
    if not np.isfinite(y).all():
        raise ValueError("non-finite target values")
    scale = float(np.max(np.abs(y))) or 1.0
    ys = y / scale
    gram = B.T @ B
    zero = np.flatnonzero(np.diag(gram) <= 0)
    if len(zero):
        raise FeatureError(f"degenerate basis columns {zero.tolist()}")
    kind, lam = penalties(basis, params)
    smooth = np.flatnonzero(kind != L1)
    block = gram[np.ix_(smooth, smooth)] + np.diag(np.where(kind[smooth] == L2, 2.0 * lam[smooth], 0.0))
    try:
        smooth_inv = np.linalg.inv(block)
    except np.linalg.LinAlgError as exc:
        raise FeatureError("trend/seasonal/regressor columns are linearly dependent") from exc
    if not np.isfinite(smooth_inv).all() or np.linalg.cond(block) > 1e12:
        raise FeatureError("trend/seasonal/regressor columns are linearly dependent")
    beta0 = np.zeros(B.shape[1])
    beta, history, delta, sweeps = _coordinate_descent(
        gram, B.T @ ys, float(ys @ ys), kind, lam, beta0, smooth_inv, params.tol, params.max_sweeps
    )
    if not delta < params.tol:
        raise ConvergenceError(
            f"coordinate descent did not converge in {sweeps} sweeps (last max change {delta:.3g})",
            final_delta=float(delta),
        )
    if not np.isfinite(beta).all():
        raise ConvergenceError("non-finite coefficients", final_delta=float(delta))
    return AdditiveModel(beta, scale, basis, params, history, int(sweeps))


def predict_additive(model: AdditiveModel, future_week_indices, future_regressors=None) -> np.ndarray:
    return model.predict(future_week_indices, future_regressors)

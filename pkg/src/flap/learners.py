"""Logistic maximum likelihood and the score functions built on it.

Every predictor maps rows ``(s, a)`` to a score in ``[0, 1]`` through
``score(s, a)``. The family:

========  ================================================================
ML        logistic regression on group indicators and attributes
FTU       logistic regression on attributes only
AML       ML scores averaged over groups with weights ``P_n(S=s)``
FL        logistic regression on within-group standardized attributes
AA        ML fit on group-centred attributes, averaged over mean-shift
          counterfactual imputations
========  ================================================================
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .data import Dataset

log = logging.getLogger(__name__)

RIDGE = 1e-6
MAX_ITER = 100
GRAD_TOL = 1e-8


class FitError(RuntimeError):
    """Logistic fit did not converge even with the ridge fallback."""


# --------------------------------------------------------------------------- likelihood


def penalized_loglik(beta: np.ndarray, X: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> float:
    """``sum_i [y_i eta_i - log(1 + e^eta_i)] - ridge/2 |beta|^2``; ``X`` carries
    its own intercept column."""
    eta = X @ beta
    ll = np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta))
    return float(ll - 0.5 * ridge * beta @ beta)


def loglik_gradient(beta: np.ndarray, X: np.ndarray, y: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    return X.T @ (y - expit(X @ beta)) - ridge * beta


def loglik_hessian(beta: np.ndarray, X: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    p = expit(X @ beta)
    w = p * (1 - p)
    return -(X.T * w) @ X - ridge * np.eye(X.shape[1])


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int
    loglik: float
    converged: bool
    ridge: float
    ridge_fallback: bool = False
    grad_norm: float = float("nan")


@dataclass(frozen=True)
class Design:
    """Which inputs enter the linear predictor.

    ``n_groups`` > 0 adds ``n_groups - 1`` treatment-coded indicators (group
    0 is the reference); ``n_attrs`` attribute columns follow.
    """

    n_groups: int
    n_attrs: int

    @property
    def n_coef(self) -> int:
        return 1 + max(self.n_groups - 1, 0) + self.n_attrs

    def matrix(self, s=None, a=None, intercept: bool = True) -> np.ndarray:
        parts = []
        n = None
        if a is not None:
            a = np.asarray(a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            n = a.shape[0]
            if a.shape[1] != self.n_attrs:
                raise ValueError(f"design expects {self.n_attrs} attribute columns, got {a.shape[1]}")
        elif self.n_attrs:
            raise ValueError("design needs attributes")
        if self.n_groups > 1:
            if s is None:
                raise ValueError("design needs group ids")
            s = np.atleast_1d(np.asarray(s, dtype=np.int64))
            if n is not None and len(s) == 1:
                s = np.full(n, s[0])
            n = len(s)
            if s.min() < 0 or s.max() >= self.n_groups:
                raise ValueError(f"group id outside 0..{self.n_groups - 1}")
            parts.append((s[:, None] == np.arange(1, self.n_groups)[None, :]).astype(float))
        if a is not None:
            parts.append(a)
        if intercept:
            parts.insert(0, np.ones((n, 1)))
        return np.hstack(parts) if parts else np.empty((n or 0, 0))


@dataclass(frozen=True, eq=False)
class LogisticModel:
    coef: np.ndarray  # intercept first
    design: Design
    diagnostics: FitDiagnostics = field(compare=False)

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    def linear_predictor(self, s=None, a=None) -> np.ndarray:
        return self.design.matrix(s, a) @ self.coef

    def predict(self, s=None, a=None) -> np.ndarray:
        return expit(self.linear_predictor(s, a))

    def to_dict(self) -> dict:
        return {"coef": self.coef.tolist(),
                "design": {"n_groups": self.design.n_groups, "n_attrs": self.design.n_attrs},
                "diagnostics": self.diagnostics.__dict__}

    @classmethod
    def from_dict(cls, obj: dict) -> "LogisticModel":
        return cls(np.array(obj["coef"], dtype=float), Design(**obj["design"]),
                   FitDiagnostics(**obj["diagnostics"]))


def _newton(X: np.ndarray, y: np.ndarray, ridge: float, max_iter: int, tol: float):
    n = max(len(y), 1)
    beta = np.zeros(X.shape[1])
    ll = penalized_loglik(beta, X, y, ridge)
    grad = loglik_gradient(beta, X, y, ridge)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) / n < tol:
            return beta, ll, it - 1, True, grad
        H = loglik_hessian(beta, X, ridge)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            cand_ll = penalized_loglik(cand, X, y, ridge)
            if cand_ll >= ll or t < 1e-10:
                break
            t *= 0.5
        if cand_ll < ll:
            # no ascent direction left at floating precision
            return beta, ll, it, np.linalg.norm(grad) / n < 1e3 * tol, grad
        beta, ll = cand, cand_ll
        grad = loglik_gradient(beta, X, y, ridge)
    return beta, ll, max_iter, np.linalg.norm(grad) / n < tol, grad


def fit_logistic(X, y, ridge: float = RIDGE, design: Design | None = None,
                 max_iter: int = MAX_ITER, tol: float = GRAD_TOL) -> LogisticModel:
    """Penalized logistic maximum likelihood by Newton's method with step halving.

    ``X`` holds the inputs without an intercept (one is prepended). Columns
    are centred and rescaled to unit standard deviation internally; ``ridge``
    acts on the standardized coefficients, all of them including the
    intercept, so that degenerate labels still give a finite fit. Centring
    makes the fitted slopes invariant to constant shifts of any column, also
    along directions the data leave unidentified (e.g. a full one-hot block
    next to the intercept). The iteration stops once the
    gradient norm divided by ``n`` drops below ``tol``. A fit at ``ridge=0``
    that fails to converge (separation) is retried at ``RIDGE`` and flagged.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("at least one row is required")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if X.shape[0] != len(y):
        raise ValueError("X and y have different row counts")
    if design is None:
        design = Design(0, X.shape[1])
    if design.n_coef != X.shape[1] + 1:
        raise ValueError(f"design has {design.n_coef} coefficients, data gives {X.shape[1] + 1}")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[~(scale > 0)] = 1.0
    X1 = np.hstack([np.ones((len(y), 1)), (X - center) / scale])

    fallback = False
    beta, ll, it, ok, grad = _newton(X1, y, ridge, max_iter, tol)
    if not ok and ridge < RIDGE:
        log.info("logistic fit at ridge=%g did not converge; retrying at ridge=%g", ridge, RIDGE)
        ridge, fallback = RIDGE, True
        beta, ll, it, ok, grad = _newton(X1, y, ridge, max_iter, tol)
    if not ok:
        raise FitError(f"logistic fit did not converge in {max_iter} iterations "
                       f"(|grad|/n = {np.linalg.norm(grad) / len(y):.3g})")
    coef = beta.copy()
    coef[1:] /= scale
    coef[0] -= coef[1:] @ center
    diag = FitDiagnostics(it, penalized_loglik(beta, X1, y, 0.0), ok, ridge, fallback,
                          float(np.linalg.norm(grad) / len(y)))
    return LogisticModel(coef, design, diag)


def fit_design(design: Design, s, a, y, ridge: float = RIDGE) -> LogisticModel:
    X = design.matrix(s, a, intercept=False)
    return fit_logistic(X, y, ridge=ridge, design=design)


# --------------------------------------------------------------------------- predictor family


def predict_ftu(m: LogisticModel, a) -> np.ndarray:
    if m.design.n_groups > 1:
        raise ValueError("FTU prediction needs an attributes-only model")
    return m.predict(None, a)


def predict_ml(m: LogisticModel, s, a) -> np.ndarray:
    return m.predict(s, a)


def predict_aml(m: LogisticModel, group_probs, a) -> np.ndarray:
    """``sum_s P_n(S=s) f_ML(s, a)``; the caller's group never enters."""
    probs = np.asarray(group_probs, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"group probabilities sum to {probs.sum()!r}, not 1")
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    k = max(m.design.n_groups, 1)
    if len(probs) != k:
        raise ValueError(f"model has {k} groups, got {len(probs)} probabilities")
    out = np.zeros(a.shape[0])
    for g, p in enumerate(probs):
        out += p * m.predict(np.full(a.shape[0], g), a)
    return out


class Predictor:
    """Score function ``p(s, a) in [0, 1]`` with a method tag."""

    method: str = ""

    def score(self, s, a) -> np.ndarray:
        raise NotImplementedError

    def score_dataset(self, data: Dataset) -> np.ndarray:
        return self.score(data.s, data.a)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(method={self.method!r})"


class MLPredictor(Predictor):
    method = "ML"

    def __init__(self, model: LogisticModel):
        self.model = model

    def score(self, s, a):
        return predict_ml(self.model, s, a)


class FTUPredictor(Predictor):
    method = "FTU"

    def __init__(self, model: LogisticModel):
        self.model = model

    def score(self, s, a):
        return predict_ftu(self.model, a)


class AMLPredictor(Predictor):
    method = "AML"

    def __init__(self, model: LogisticModel, group_probs):
        self.model = model
        self.group_probs = np.asarray(group_probs, dtype=float)

    def score(self, s, a):
        return predict_aml(self.model, self.group_probs, a)


def fit_ml(train: Dataset, ridge: float = RIDGE) -> MLPredictor:
    return MLPredictor(fit_design(Design(train.k, train.d), train.s, train.a, train.y, ridge))


def fit_ftu(train: Dataset, ridge: float = RIDGE) -> FTUPredictor:
    return FTUPredictor(fit_design(Design(0, train.d), None, train.a, train.y, ridge))


def fit_aml(train: Dataset, ridge: float = RIDGE) -> AMLPredictor:
    model = fit_design(Design(train.k, train.d), train.s, train.a, train.y, ridge)
    return AMLPredictor(model, train.group_probs)


class FairLearningPredictor(Predictor):
    """Deterministic-abduction FairLearning ("FL-lite").

    The latent input is the within-group standardized attribute
    ``(a_j - E_n(A_j|s)) / SD_n(A_j|s)``; the logistic model sees only that.
    """

    method = "FL-lite"

    def __init__(self, model: LogisticModel, means: np.ndarray, sds: np.ndarray):
        self.model = model
        self.means = means
        self.sds = sds

    def latent(self, s, a) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if len(s) == 1 and a.shape[0] > 1:
            s = np.full(a.shape[0], s[0])
        sd = self.sds[s]
        safe = np.where(sd > 0, sd, 1.0)
        return np.where(sd > 0, (a - self.means[s]) / safe, 0.0)

    def score(self, s, a):
        return predict_ftu(self.model, self.latent(s, a))


def fit_fl(train: Dataset, ridge: float = RIDGE, scm_hint=None) -> FairLearningPredictor:
    """``scm_hint`` is accepted for interface compatibility; the abduction is
    the same location-scale standardization whatever the generating model."""
    means = np.vstack([train.a[train.s == g].mean(axis=0) for g in range(train.k)])
    sds = np.vstack([train.a[train.s == g].std(axis=0) for g in range(train.k)])
    flat = np.argwhere(~(sds > 0))
    for g, j in flat:
        log.debug("FL: coordinate %s has zero variance in group %s; latent set to 0",
                  train.columns[j].name, train.groups[g].label)
    pred = FairLearningPredictor(None, means, sds)
    u = pred.latent(train.s, train.a)
    pred.model = fit_design(Design(0, train.d), None, u, train.y, ridge)
    return pred


class AffirmativeActionPredictor(Predictor):
    """Group-centred ML learner averaged over mean-shift counterfactuals.

    For a unit ``(s, a)`` the counterfactual attribute in group ``s'`` is
    ``a - E_n(A|s) + E_n(A|s')``; the learner sees it centred at the group
    ``s'`` mean, and the scores are averaged with weights ``P_n(S=s')``.
    """

    method = "AA"

    def __init__(self, model: LogisticModel, group_means: np.ndarray, group_probs: np.ndarray):
        self.model = model
        self.group_means = group_means
        self.group_probs = group_probs

    def score(self, s, a):
        s = np.atleast_1d(np.asarray(s, dtype=np.int64))
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if len(s) == 1 and a.shape[0] > 1:
            s = np.full(a.shape[0], s[0])
        out = np.zeros(a.shape[0])
        for g, p in enumerate(self.group_probs):
            imputed = a - self.group_means[s] + self.group_means[g]
            out += p * self.model.predict(np.full(a.shape[0], g), imputed - self.group_means[g])
        return out


def fit_aa(train: Dataset, ridge: float = RIDGE) -> AffirmativeActionPredictor:
    from .preprocess import GroupMoments

    moments = GroupMoments.fit(train)
    centred = train.a - moments.group_means[train.s]
    model = fit_design(Design(train.k, train.d), train.s, centred, train.y, ridge)
    return AffirmativeActionPredictor(model, moments.group_means, moments.probs)


class ConstantPredictor(Predictor):
    method = "constant"

    def __init__(self, value: float):
        if not 0 <= value <= 1:
            raise ValueError("score must lie in [0, 1]")
        self.value = float(value)

    def score(self, s, a):
        a = np.asarray(a)
        n = a.shape[0] if a.ndim else 1
        return np.full(n, self.value)


class FunctionPredictor(Predictor):
    """Wrap any vectorized ``f(s, a) -> scores``."""

    def __init__(self, fn, method: str = "custom"):
        self.fn = fn
        self.method = method

    def score(self, s, a):
        return np.clip(np.asarray(self.fn(s, a), dtype=float), 0.0, 1.0)


def save_model(model: LogisticModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path) -> LogisticModel:
    return LogisticModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predictor_to_dict(pred: Predictor) -> dict:
    """JSON-ready description of a fitted baseline predictor."""
    out = {"format_version": 1, "method": pred.method}
    if isinstance(pred, (MLPredictor, FTUPredictor)):
        out["model"] = pred.model.to_dict()
    elif isinstance(pred, AMLPredictor):
        out.update(model=pred.model.to_dict(), group_probs=pred.group_probs.tolist())
    elif isinstance(pred, FairLearningPredictor):
        out.update(model=pred.model.to_dict(), means=pred.means.tolist(), sds=pred.sds.tolist())
    elif isinstance(pred, AffirmativeActionPredictor):
        out.update(model=pred.model.to_dict(), group_means=pred.group_means.tolist(),
                   group_probs=np.asarray(pred.group_probs).tolist())
    elif isinstance(pred, ConstantPredictor):
        out["value"] = pred.value
    else:
        raise TypeError(f"cannot serialize {type(pred).__name__}")
    return out


def predictor_from_dict(obj: dict) -> Predictor:
    if obj.get("format_version") != 1:
        raise ValueError(f"unsupported predictor format {obj.get('format_version')!r}")
    method = obj["method"]
    if method == "constant":
        return ConstantPredictor(obj["value"])
    model = LogisticModel.from_dict(obj["model"])
    if method == "ML":
        return MLPredictor(model)
    if method == "FTU":
        return FTUPredictor(model)
    if method == "AML":
        return AMLPredictor(model, obj["group_probs"])
    if method == "FL-lite":
        return FairLearningPredictor(model, np.array(obj["means"]), np.array(obj["sds"]))
    if method == "AA":
        return AffirmativeActionPredictor(model, np.array(obj["group_means"]),
                                          np.array(obj["group_probs"]))
    raise ValueError(f"unknown predictor method {method!r}")

"""Synthetic decision data from three structural causal models, with a
ground-truth counterfactual oracle.

Each exogenous variable is drawn from its own seeded stream, read
sequentially by unit index, so unit ``i`` gets the same ``u`` for any
``n > i``.

* Example 1 -- loan approval with log-normal income:
  ``S = 1{U_S < p_s}``, ``A = c1 exp(c2 + lambda_a S + c3 sigma_a^S U_A)``,
  ``Y = 1{U_Y < expit(beta_0 + beta_a A + beta_s S)}``.
* Example 2 -- three groups, education ``E`` and income ``A`` sharing ``U_E``.
* Example 3 -- admissions with a test score clamped to ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Union

import numpy as np
from scipy.special import expit

from .data import Column, Dataset, SensitiveGroup


@dataclass(frozen=True)
class Scm1Params:
    c1: float = 0.01
    c2: float = 4.0
    c3: float = 0.2
    lambda_a: float = 0.5
    sigma_a: float = 1.0
    beta_0: float = -1.0
    beta_a: float = 2.0
    beta_s: float = 1.0
    p_s: float = 0.7

    def __post_init__(self):
        if not (self.c1 > 0 and self.c3 > 0 and self.sigma_a > 0):
            raise ValueError("c1, c3 and sigma_a must be positive")
        if not 0 < self.p_s < 1:
            raise ValueError("p_s must lie in (0, 1)")

    @property
    def k(self) -> int:
        return 2


@dataclass(frozen=True)
class Scm2Params:
    probs: tuple[float, float, float] = (0.76, 0.16, 0.08)
    lambda_e0: float = 1.07
    lambda_e1: float = 0.0
    lambda_e2: float = 0.0
    lambda_a0: float = 0.58
    lambda_a1: float = 0.0
    lambda_a2: float = 0.0
    beta_0: float = -1.0
    beta_1: float = 0.0
    beta_2: float = 0.0
    beta_a: float = 1.0
    beta_e: float = 2.0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != 3 or min(probs) <= 0 or abs(sum(probs) - 1) > 1e-12:
            raise ValueError("probs must be three positive numbers summing to 1")
        medians = [self.lambda_a0, self.lambda_a0 + self.lambda_a1, self.lambda_a0 + self.lambda_a2]
        if min(medians) <= 0:
            raise ValueError("income medians lambda_a0 + lambda_a{1,2} must be positive")
        means = [self.lambda_e0, self.lambda_e0 + self.lambda_e1, self.lambda_e0 + self.lambda_e2]
        if not np.all(np.isfinite(means)):
            raise ValueError("education means must be finite")

    @property
    def k(self) -> int:
        return 3


@dataclass(frozen=True)
class Scm3Params:
    lam: float = 0.0
    beta_0: float = -1.0
    beta_t: float = 2.0
    beta_s: float = 1.0
    p_s: float = 0.5

    def __post_init__(self):
        if not 0 <= self.lam < 1:
            raise ValueError("lam must lie in [0, 1)")
        if not 0 < self.p_s < 1:
            raise ValueError("p_s must lie in (0, 1)")

    @property
    def k(self) -> int:
        return 2


ScmParams = Union[Scm1Params, Scm2Params, Scm3Params]


@dataclass(frozen=True)
class ExogenousRecord:
    u_s: float
    u_a: float
    u_y: float
    u_e: float | None = None


@dataclass(frozen=True, eq=False)
class Exogenous:
    """Exogenous draws for ``n`` units, stored column-wise.

    ``u_a`` is standard normal for Examples 1-2 and the uniform ``U_T`` for
    Example 3; ``u_e`` exists for Example 2 only.
    """

    u_s: np.ndarray
    u_a: np.ndarray
    u_y: np.ndarray
    u_e: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.u_s)

    def __getitem__(self, i: int) -> ExogenousRecord:
        return ExogenousRecord(float(self.u_s[i]), float(self.u_a[i]), float(self.u_y[i]),
                               None if self.u_e is None else float(self.u_e[i]))

    def as_columns(self) -> dict[str, np.ndarray]:
        cols = {"u_s": self.u_s, "u_a": self.u_a, "u_y": self.u_y}
        if self.u_e is not None:
            cols["u_e"] = self.u_e
        return cols


def _as_exogenous(u) -> Exogenous:
    if isinstance(u, Exogenous):
        return u
    if isinstance(u, ExogenousRecord):
        return Exogenous(np.array([u.u_s]), np.array([u.u_a]), np.array([u.u_y]),
                         None if u.u_e is None else np.array([u.u_e]))
    raise TypeError(f"expected Exogenous or ExogenousRecord, got {type(u).__name__}")


# stream ids per exogenous variable
_STREAMS = {"u_s": 0, "u_a": 1, "u_y": 2, "u_e": 3}


def _stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, _STREAMS[name]])


def _uniform(seed: int, name: str, n: int) -> np.ndarray:
    u = _stream(seed, name).random(n)
    # open interval (0, 1)
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def _normal(seed: int, name: str, n: int) -> np.ndarray:
    return _stream(seed, name).standard_normal(n)


def draw_exogenous(params: ScmParams, n: int, seed: int) -> Exogenous:
    if n < 1:
        raise ValueError("n must be at least 1")
    u_s = _uniform(seed, "u_s", n)
    u_y = _uniform(seed, "u_y", n)
    if isinstance(params, Scm3Params):
        return Exogenous(u_s, _uniform(seed, "u_a", n), u_y)
    u_a = _normal(seed, "u_a", n)
    u_e = _normal(seed, "u_e", n) if isinstance(params, Scm2Params) else None
    return Exogenous(u_s, u_a, u_y, u_e)


# --------------------------------------------------------------------------- structural equations


def sensitive_group(params: ScmParams, u_s: np.ndarray) -> np.ndarray:
    u_s = np.asarray(u_s)
    if isinstance(params, Scm2Params):
        p0, p1, _ = params.probs
        return (u_s > p0).astype(np.int64) + (u_s > p0 + p1).astype(np.int64)
    return (u_s < params.p_s).astype(np.int64)


def attributes(params: ScmParams, s, u: Exogenous) -> np.ndarray:
    """Structural equation for the non-sensitive attributes, shape (n, d)."""
    s = np.broadcast_to(np.asarray(s), np.shape(u.u_a))
    if isinstance(params, Scm1Params):
        a = params.c1 * np.exp(params.c2 + params.lambda_a * s
                               + params.c3 * params.sigma_a ** s * u.u_a)
        return a[:, None]
    if isinstance(params, Scm2Params):
        mu_e = params.lambda_e0 + (s == 1) * params.lambda_e1 + (s == 2) * params.lambda_e2
        median = params.lambda_a0 + (s == 1) * params.lambda_a1 + (s == 2) * params.lambda_a2
        e = np.maximum(0.0, mu_e + 0.4 * mu_e * u.u_e)
        a = np.exp(np.log(median) + 0.4 * mu_e * u.u_e + 0.1 * u.u_a)
        return np.column_stack([e, a])
    if isinstance(params, Scm3Params):
        t = np.minimum(np.maximum(0.0, params.lam * s + u.u_a), 1.0)
        return t[:, None]
    raise TypeError(f"unknown parameter record {type(params).__name__}")


def decision_logit(params: ScmParams, s, a: np.ndarray) -> np.ndarray:
    s = np.asarray(s)
    if isinstance(params, Scm1Params):
        return params.beta_0 + params.beta_a * a[:, 0] + params.beta_s * s
    if isinstance(params, Scm2Params):
        return (params.beta_0 + (s == 1) * params.beta_1 + (s == 2) * params.beta_2
                + params.beta_a * a[:, 1] + params.beta_e * a[:, 0])
    if isinstance(params, Scm3Params):
        return params.beta_0 + params.beta_t * a[:, 0] + params.beta_s * s
    raise TypeError(f"unknown parameter record {type(params).__name__}")


def decision_prob(params: ScmParams, s, a: np.ndarray) -> np.ndarray:
    """``P(Y = 1 | S = s, A = a)`` under the structural decision equation."""
    return expit(decision_logit(params, s, a))


_COLUMN_NAMES = {Scm1Params: ["income"], Scm2Params: ["education", "income"],
                 Scm3Params: ["score"]}


def simulate(params: ScmParams, n: int, seed: int) -> tuple[Dataset, Exogenous]:
    u = draw_exogenous(params, n, seed)
    s = sensitive_group(params, u.u_s)
    a = attributes(params, s, u)
    y = (u.u_y < decision_prob(params, s, a)).astype(np.int64)
    groups = tuple(SensitiveGroup(g, str(g), (str(g),)) for g in range(params.k))
    columns = tuple(Column(name) for name in _COLUMN_NAMES[type(params)])
    return Dataset(s, a, y, groups, columns), u


def simulate_ex1(params: Scm1Params, n: int, seed: int) -> tuple[Dataset, Exogenous]:
    return simulate(params, n, seed)


def simulate_ex2(params: Scm2Params, n: int, seed: int) -> tuple[Dataset, Exogenous]:
    return simulate(params, n, seed)


def simulate_ex3(params: Scm3Params, n: int, seed: int) -> tuple[Dataset, Exogenous]:
    return simulate(params, n, seed)


# --------------------------------------------------------------------------- counterfactual oracle


def counterfactual_attributes(params: ScmParams, u, s_prime: int) -> np.ndarray:
    _check_group(params, s_prime)
    return attributes(params, s_prime, _as_exogenous(u))


def counterfactual_decision_prob(params: ScmParams, u, s_prime: int):
    """``P(Y_{s'}(u) = 1)``: force ``S = s'`` and push the known ``u`` through.

    Accepts one :class:`ExogenousRecord` (returns a float) or an
    :class:`Exogenous` batch (returns an array).
    """
    _check_group(params, s_prime)
    ex = _as_exogenous(u)
    a = attributes(params, s_prime, ex)
    p = decision_prob(params, np.full(len(ex), s_prime), a)
    return float(p[0]) if isinstance(u, ExogenousRecord) else p


def oracle_cf_metric(params: ScmParams, u: Exogenous) -> float:
    """Largest mean absolute gap in counterfactual decision probability over
    group pairs, evaluated at the true exogenous draws."""
    probs = [counterfactual_decision_prob(params, u, s) for s in range(params.k)]
    best = 0.0
    for r in range(params.k):
        for t in range(r + 1, params.k):
            best = max(best, float(np.mean(np.abs(probs[r] - probs[t]))))
    return best


def _check_group(params: ScmParams, s_prime: int) -> None:
    if not (isinstance(s_prime, (int, np.integer)) and 0 <= s_prime < params.k):
        raise ValueError(f"group {s_prime!r} is not in 0..{params.k - 1}")


# --------------------------------------------------------------------------- condition diagnostics


@dataclass(frozen=True)
class ConditionReport:
    strong: bool
    weak: bool
    derivatives: np.ndarray = field(repr=False)


def exogenous_derivatives(params: ScmParams, u_grid: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of the attribute equation in its exogenous input.

    Returns an array of shape (K, len(u_grid), d, q): group, grid point,
    attribute coordinate, exogenous coordinate (q = 2 for Example 2:
    ``u_e`` then ``u_a``).
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if isinstance(params, Scm2Params):
        u_grid = np.atleast_2d(u_grid)
        if u_grid.shape[1] != 2:
            raise ValueError("Example 2 grid needs columns (u_e, u_a)")
        pairs = [(u_grid[:, 0], u_grid[:, 1])]
        q = 2
    else:
        u_grid = u_grid.reshape(-1)
        q = 1
    out = []
    for s in range(params.k):
        cols = []
        for k in range(q):
            def at(shift):
                if isinstance(params, Scm2Params):
                    ue, ua = pairs[0]
                    ue = ue + (shift if k == 0 else 0.0)
                    ua = ua + (shift if k == 1 else 0.0)
                    ex = Exogenous(np.zeros_like(ua), ua, np.zeros_like(ua), ue)
                else:
                    ex = Exogenous(np.zeros_like(u_grid), u_grid + shift, np.zeros_like(u_grid))
                return attributes(params, s, ex)
            cols.append((at(h) - at(-h)) / (2 * h))
        out.append(np.stack(cols, axis=-1))
    return np.stack(out)


def diagnose_conditions(params: ScmParams, u_grid: np.ndarray, h: float = 1e-6,
                        rtol: float = 1e-5) -> ConditionReport:
    """Numerically check the strong (derivative free of ``s``) and weak (sign
    of the derivative free of ``s``) non-sensitive conditions on a grid."""
    der = exogenous_derivatives(params, u_grid, h)
    scale = max(np.abs(der).max(), 1e-300)
    tol = rtol * scale
    strong = bool(np.all(np.abs(der - der[0]) <= tol))
    signs = np.where(np.abs(der) <= tol, 0, np.sign(der))
    weak = bool(np.all(signs == signs[0]))
    return ConditionReport(strong, weak, der)


def with_params(params: ScmParams, **changes) -> ScmParams:
    return replace(params, **changes)


def params_dict(params: ScmParams) -> dict:
    return {f.name: getattr(params, f.name) for f in fields(params)}

"""Semiparametric mean models and the quasi-score fit on sample B.

Three families are supported: linear, logistic, and log-linear.  Coefficients
solve the quasi-score equations with the canonical instrument h(x) = x, so the
fit coincides with the usual GLM score equations.  The linear family is solved
in one step via the normal equations; the others use Newton iteration with an
analytic Jacobian and step-halving on the score norm.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data_model import DesignMatrix, SurveySample
from .errors import (
    ColumnMismatch,
    DimensionMismatch,
    NoConvergence,
    OverflowGuardWarning,
    RankDeficient,
    Separation,
)

# exp(x) overflows float64 just above x = 709
_EXP_CLIP = 700.0


class ModelFamily(enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    LOGLINEAR = "loglinear"


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 100
    max_halvings: int = 20
    divergence_bound: float = 1e4


def _clipped_exp(eta: np.ndarray) -> np.ndarray:
    if np.any(np.abs(eta) > _EXP_CLIP):
        warnings.warn(
            "exp argument saturated to avoid overflow", OverflowGuardWarning,
            stacklevel=3,
        )
        eta = np.clip(eta, -_EXP_CLIP, _EXP_CLIP)
    return np.exp(eta)


def mean_values(family: ModelFamily, X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Vectorized m(x; beta) over the rows of X."""
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != beta.shape[0]:
        raise DimensionMismatch(
            f"design has {X.shape[-1]} columns but beta has {beta.shape[0]}"
        )
    eta = X @ beta
    if family is ModelFamily.LINEAR:
        return eta
    if family is ModelFamily.LOGISTIC:
        return 1.0 / (1.0 + _clipped_exp(-eta))
    return _clipped_exp(eta)


def mean_value(family: ModelFamily, x, beta) -> float:
    return float(mean_values(family, np.atleast_2d(np.asarray(x, float)), beta)[0])


def mean_gradients(family: ModelFamily, X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Row-wise gradient of m with respect to beta (n x p)."""
    X = np.asarray(X, dtype=float)
    if family is ModelFamily.LINEAR:
        if X.shape[-1] != np.asarray(beta).shape[0]:
            raise DimensionMismatch()
        return X.copy()
    m = mean_values(family, X, beta)
    if family is ModelFamily.LOGISTIC:
        return (m * (1.0 - m))[:, None] * X
    return m[:, None] * X


def mean_gradient(family: ModelFamily, x, beta) -> np.ndarray:
    return mean_gradients(family, np.atleast_2d(np.asarray(x, float)), beta)[0]


def quasi_score(
    family: ModelFamily,
    sample_b: SurveySample,
    design_matrix: DesignMatrix,
    beta: np.ndarray,
) -> np.ndarray:
    """Mean estimating function over sample B with instrument h(x) = x."""
    y = sample_b.responses
    X = design_matrix.values
    if len(y) != X.shape[0]:
        raise DimensionMismatch("design rows do not align with responses")
    resid = y - mean_values(family, X, beta)
    return (X.T @ resid) / len(y)


@dataclass(frozen=True)
class FittedModel:
    family: ModelFamily
    beta_hat: np.ndarray
    covariate_names: tuple[str, ...]
    intercept_included: bool
    iterations: int
    final_score_norm: float
    h_choice: str = "canonical"

    def to_json(self) -> str:
        doc = {
            "family": self.family.value,
            "beta_hat": [float(b) for b in self.beta_hat],
            "covariate_names": list(self.covariate_names),
            "intercept_included": self.intercept_included,
            "iterations": self.iterations,
            "final_score_norm": self.final_score_norm,
            "h_choice": self.h_choice,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        doc = json.loads(text)
        return cls(
            family=ModelFamily(doc["family"]),
            beta_hat=np.array(doc["beta_hat"], dtype=float),
            covariate_names=tuple(doc["covariate_names"]),
            intercept_included=doc["intercept_included"],
            iterations=doc["iterations"],
            final_score_norm=doc["final_score_norm"],
            h_choice=doc.get("h_choice", "canonical"),
        )


def _solve_linear(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    gram = X.T @ X
    try:
        beta = np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError:
        raise RankDeficient() from None
    # solve() does not flag near-singular systems; a rank check does
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient()
    return beta


def solve_quasi_score(
    family: ModelFamily,
    X: np.ndarray,
    y: np.ndarray,
    config: SolverConfig = SolverConfig(),
    check_rank: bool = True,
) -> tuple[np.ndarray, int, float]:
    """Root-find the quasi-score on raw arrays; returns (beta, iters, norm).

    Split out from :func:`fit_model` so the bootstrap refit loop can skip
    sample-container overhead.
    """
    n, p = X.shape
    if family is ModelFamily.LINEAR:
        beta = _solve_linear(X, y)
        norm = float(np.max(np.abs((X.T @ (y - X @ beta)) / n)))
        return beta, 1, norm

    if check_rank and np.linalg.matrix_rank(X) < p:
        raise RankDeficient()

    def check_separation(beta):
        # Under perfect separation the score converges numerically once the
        # fitted probabilities saturate, so pinned probabilities are the
        # reliable signal; the coefficient norm alone never trips first.
        if family is ModelFamily.LOGISTIC:
            m = mean_values(family, X, beta)
            if np.all(np.minimum(m, 1.0 - m) < 1e-8):
                raise Separation()

    beta = np.zeros(p)
    score = (X.T @ (y - mean_values(family, X, beta))) / n
    norm = float(np.max(np.abs(score)))
    for iteration in range(1, config.max_iterations + 1):
        if norm <= config.tolerance:
            check_separation(beta)
            return beta, iteration - 1, norm
        m = mean_values(family, X, beta)
        if family is ModelFamily.LOGISTIC:
            w = m * (1.0 - m)
        else:
            w = m
        jac = -(X.T * w) @ X / n
        try:
            step = np.linalg.solve(jac, -score)
        except np.linalg.LinAlgError:
            raise RankDeficient("singular Jacobian in quasi-score solve") from None
        # step-halving on the score norm
        scale = 1.0
        for _ in range(config.max_halvings + 1):
            candidate = beta + scale * step
            cand_score = (X.T @ (y - mean_values(family, X, candidate))) / n
            cand_norm = float(np.max(np.abs(cand_score)))
            if cand_norm < norm:
                break
            scale *= 0.5
        beta, score, norm = candidate, cand_score, cand_norm
        if np.linalg.norm(beta) > config.divergence_bound:
            check_separation(beta)
            raise NoConvergence(iteration, norm)
    if norm <= config.tolerance:
        check_separation(beta)
        return beta, config.max_iterations, norm
    raise NoConvergence(config.max_iterations, norm)


def fit_model(
    family: ModelFamily,
    sample_b: SurveySample,
    design_matrix: DesignMatrix,
    config: SolverConfig = SolverConfig(),
) -> FittedModel:
    y = sample_b.responses
    X = design_matrix.values
    if len(y) != X.shape[0]:
        raise DimensionMismatch("design rows do not align with responses")
    if X.shape[0] < X.shape[1]:
        raise RankDeficient("need at least as many observations as parameters")
    beta, iterations, norm = solve_quasi_score(family, X, y, config)
    return FittedModel(
        family=family,
        beta_hat=beta,
        covariate_names=design_matrix.column_names,
        intercept_included=design_matrix.intercept_included,
        iterations=iterations,
        final_score_norm=norm,
    )


def predict_all(model: FittedModel, design_matrix_a: DesignMatrix) -> np.ndarray:
    """Imputed values m(x_i; beta_hat) for every row of sample A's design."""
    if design_matrix_a.column_names != model.covariate_names:
        raise ColumnMismatch(model.covariate_names, design_matrix_a.column_names)
    return mean_values(model.family, design_matrix_a.values, model.beta_hat)

"""ALine-S and ALine-D: OOD performance estimation from agreement.

Both methods fit an OLS line to probit-transformed (ID, OOD) pairwise
agreements. ALine-S applies the fitted slope/bias to each model's probit
ID performance. ALine-D solves a least-squares system whose row for pair
(i, j) constrains the average of the two models' probit OOD performances
by their OOD agreement plus a slope-corrected ID term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InsufficientModels, RankDeficient
from .metrics import AgreementMatrix
from .probit import CLAMP_EPS, LineFit, agreement_point, clamp_rate, fit_line, normal_cdf, probit

METHOD_ALINE_S = "aline_s"
METHOD_ALINE_D = "aline_d"

DEFAULT_GATE_THRESHOLD = 0.95


@dataclass
class AlineInput:
    id_perf: np.ndarray
    agr_id: AgreementMatrix
    agr_ood: AgreementMatrix
    gate_threshold: float = DEFAULT_GATE_THRESHOLD
    clamp_eps: float = CLAMP_EPS

    def __post_init__(self):
        self.id_perf = np.asarray(self.id_perf, dtype=np.float64)
        n = len(self.id_perf)
        if n < 2:
            raise InsufficientModels(f"need at least 2 models, got {n}")
        if self.agr_id.n != n or self.agr_ood.n != n:
            raise InsufficientModels("agreement matrices not aligned with id_perf")

    @property
    def n(self):
        return len(self.id_perf)


@dataclass
class AlineOutput:
    estimates: np.ndarray
    agreement_fit: LineFit
    gated: bool
    method: str
    model_ids: list[str] = field(default_factory=list)


def gate(fit: LineFit, threshold: float) -> bool:
    """True iff the agreement line's R^2 strictly exceeds the threshold."""
    return fit.r_squared > threshold


def _pair_points(inp: AlineInput):
    eps = inp.clamp_eps
    ids = inp.agr_id.model_ids
    points = []
    for i in range(inp.n):
        for j in range(i + 1, inp.n):
            x = probit(clamp_rate(inp.agr_id.pair(i, j), eps))
            y = probit(clamp_rate(inp.agr_ood.pair(i, j), eps))
            points.append(agreement_point(x, y, ids[i], ids[j]))
    return points


def agreement_line(inp: AlineInput) -> LineFit:
    """OLS fit over the upper-triangle probit agreement pairs."""
    return fit_line(_pair_points(inp))


def aline_s(inp: AlineInput) -> AlineOutput:
    fit = agreement_line(inp)
    eps = inp.clamp_eps
    est = np.array([normal_cdf(fit.slope * probit(clamp_rate(p, eps)) + fit.bias)
                    for p in inp.id_perf])
    assert np.all((est >= 0.0) & (est <= 1.0))
    return AlineOutput(estimates=est, agreement_fit=fit,
                       gated=gate(fit, inp.gate_threshold), method=METHOD_ALINE_S,
                       model_ids=list(inp.agr_id.model_ids))


def _solve_least_squares(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Normal equations with Cholesky; rank-revealing lstsq fallback."""
    AtA = A.T @ A
    Atb = A.T @ rhs
    try:
        c, low = scipy.linalg.cho_factor(AtA)
        return scipy.linalg.cho_solve((c, low), Atb)
    except np.linalg.LinAlgError:
        pass
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < A.shape[1]:
        raise RankDeficient(f"system rank {rank} < {A.shape[1]} unknowns")
    return sol


def aline_d(inp: AlineInput) -> AlineOutput:
    n = inp.n
    if n < 3:
        raise InsufficientModels(f"ALine-D needs at least 3 models, got {n}")
    fit = agreement_line(inp)
    eps = inp.clamp_eps
    id_probit = np.array([probit(clamp_rate(p, eps)) for p in inp.id_perf])
    n_pairs = n * (n - 1) // 2
    A = np.zeros((n_pairs, n))
    rhs = np.zeros(n_pairs)
    row = 0
    for i in range(n):
        for j in range(i + 1, n):
            A[row, i] = 0.5
            A[row, j] = 0.5
            agr_id = probit(clamp_rate(inp.agr_id.pair(i, j), eps))
            agr_ood = probit(clamp_rate(inp.agr_ood.pair(i, j), eps))
            rhs[row] = agr_ood + fit.slope * ((id_probit[i] + id_probit[j]) / 2.0 - agr_id)
            row += 1
    sol = _solve_least_squares(A, rhs)
    est = np.array([normal_cdf(z) for z in sol])
    assert np.all((est >= 0.0) & (est <= 1.0))
    return AlineOutput(estimates=est, agreement_fit=fit,
                       gated=gate(fit, inp.gate_threshold), method=METHOD_ALINE_D,
                       model_ids=list(inp.agr_id.model_ids))

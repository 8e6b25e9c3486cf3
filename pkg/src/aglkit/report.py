"""Aggregates estimates across methods into a scored, exportable report."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as toolkit_version
from .aline import (
    DEFAULT_GATE_THRESHOLD,
    METHOD_ALINE_D,
    METHOD_ALINE_S,
    AlineInput,
    aline_d,
    aline_s,
)
from .baselines import (
    METHOD_AC,
    METHOD_ATC,
    METHOD_DOC_FEAT,
    METHOD_NAIVE_AGREEMENT,
    naive_agreement_estimate,
    with_and_without_temperature,
)
from .datamodel import SplitPair
from .errors import LengthMismatch, ToolkitError, ZeroTruth
from .metrics import AgreementMatrix, agreement_matrix, performance
from .probit import CLAMP_EPS, LineFit, accuracy_point, clamp_rate, fit_line, probit

ALINE_METHODS = (METHOD_ALINE_S, METHOD_ALINE_D)
CONFIDENCE_METHODS = (METHOD_AC, METHOD_ATC, METHOD_DOC_FEAT)
ALL_METHODS = ALINE_METHODS + CONFIDENCE_METHODS + (METHOD_NAIVE_AGREEMENT,)

SCATTER_COLUMNS = ("kind", "tag", "x_raw", "y_raw", "x_probit", "y_probit")


def mape(estimates, truths) -> float:
    """Mean absolute percentage error, in percent."""
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.shape != tru.shape or est.ndim != 1 or len(est) < 1:
        raise LengthMismatch(f"shapes {est.shape} vs {tru.shape}")
    if np.any(tru == 0.0):
        raise ZeroTruth("truth vector contains a zero")
    return float(100.0 * np.mean(np.abs(est - tru) / tru))


@dataclass
class ReportOptions:
    gate_threshold: float = DEFAULT_GATE_THRESHOLD
    clamp_eps: float = CLAMP_EPS
    evaluation_mode: bool = False


@dataclass
class EstimateReport:
    model_ids: list[str]
    metric: str
    id_perf: np.ndarray
    true_ood_perf: np.ndarray | None
    # method -> per-model estimate vector, or {"raw": v, "temp_scaled": v}
    estimates: dict = field(default_factory=dict)
    used_temperature: dict = field(default_factory=dict)
    method_errors: dict = field(default_factory=dict)
    agreement_fit: LineFit | None = None
    accuracy_fit: LineFit | None = None
    gates: dict = field(default_factory=dict)
    mape_by_method: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def vec(v):
            return [float(x) for x in v]

        def fit_dict(f):
            if f is None:
                return None
            return {"slope": f.slope, "bias": f.bias, "r_squared": f.r_squared,
                    "n_points": f.n_points, "residual_ss": f.residual_ss,
                    "r_squared_defined": f.r_squared_defined}

        per_model = []
        for i, mid in enumerate(self.model_ids):
            row = {"model_id": mid, "id_perf": float(self.id_perf[i]), "estimates": {}}
            if self.true_ood_perf is not None:
                row["true_ood_perf"] = float(self.true_ood_perf[i])
            for method, est in self.estimates.items():
                if isinstance(est, dict):
                    row["estimates"][method] = {k: float(v[i]) for k, v in est.items()}
                else:
                    row["estimates"][method] = float(est[i])
            per_model.append(row)
        return {
            "per_model": per_model,
            "fits": {"agreement_fit": fit_dict(self.agreement_fit),
                     "accuracy_fit": fit_dict(self.accuracy_fit)},
            "gates": dict(sorted(self.gates.items())),
            "used_temperature": dict(sorted(self.used_temperature.items())),
            "method_errors": dict(sorted(self.method_errors.items())),
            "mape": (None if self.mape_by_method is None
                     else {k: float(v) for k, v in sorted(self.mape_by_method.items())}),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def build_report(pair: SplitPair, methods=ALL_METHODS,
                 options: ReportOptions | None = None) -> EstimateReport:
    """Run every requested method once; failures become per-method entries."""
    options = options or ReportOptions()
    methods = list(methods)
    n = pair.n_models
    id_perf = np.array([performance(log, pair.metric) for log in pair.id_logs])
    true_ood = None
    if options.evaluation_mode:
        true_ood = np.array([performance(log, pair.metric) for log in pair.ood_logs])
    agr_id = agreement_matrix(pair.id_logs, pair.metric)
    agr_ood = agreement_matrix(pair.ood_logs, pair.metric)

    report = EstimateReport(
        model_ids=pair.model_ids, metric=pair.metric, id_perf=id_perf,
        true_ood_perf=true_ood,
        metadata={"metric": pair.metric,
                  "id_split": pair.id_logs[0].split_id,
                  "ood_split": pair.ood_logs[0].split_id,
                  "gate_threshold": options.gate_threshold,
                  "clamp_eps": options.clamp_eps,
                  "evaluation_mode": options.evaluation_mode,
                  "toolkit_version": toolkit_version})

    aline_input = None
    if any(m in methods for m in ALINE_METHODS):
        aline_input = AlineInput(id_perf=id_perf, agr_id=agr_id, agr_ood=agr_ood,
                                 gate_threshold=options.gate_threshold,
                                 clamp_eps=options.clamp_eps)

    for method in methods:
        try:
            if method == METHOD_ALINE_S:
                out = aline_s(aline_input)
                report.estimates[method] = out.estimates
                report.agreement_fit = out.agreement_fit
                report.gates[method] = out.gated
            elif method == METHOD_ALINE_D:
                out = aline_d(aline_input)
                report.estimates[method] = out.estimates
                report.agreement_fit = out.agreement_fit
                report.gates[method] = out.gated
            elif method == METHOD_NAIVE_AGREEMENT:
                report.estimates[method] = naive_agreement_estimate(agr_ood)
            elif method in CONFIDENCE_METHODS:
                raw = np.empty(n)
                scaled = np.empty(n)
                selected = np.empty(n)
                used = []
                for i in range(n):
                    truth_i = float(true_ood[i]) if true_ood is not None else None
                    cmp = with_and_without_temperature(
                        method, pair.id_logs[i], pair.ood_logs[i], truth_i)
                    raw[i] = cmp.raw
                    scaled[i] = cmp.temp_scaled
                    if cmp.selected is not None:
                        selected[i] = cmp.selected
                        used.append(cmp.used_temperature)
                if true_ood is not None:
                    report.estimates[method] = selected
                    report.used_temperature[method] = used
                else:
                    report.estimates[method] = {"raw": raw, "temp_scaled": scaled}
            else:
                raise ToolkitError(f"unknown method {method!r}")
        except ToolkitError as exc:
            report.method_errors[method] = f"{type(exc).__name__}: {exc}"

    if true_ood is not None:
        try:
            pts = [accuracy_point(probit(clamp_rate(x, options.clamp_eps)),
                                  probit(clamp_rate(y, options.clamp_eps)), mid)
                   for x, y, mid in zip(id_perf, true_ood, pair.model_ids)]
            report.accuracy_fit = fit_line(pts)
        except ToolkitError:
            report.accuracy_fit = None
        report.mape_by_method = {}
        for method, est in report.estimates.items():
            if isinstance(est, dict):
                continue
            report.mape_by_method[method] = mape(est, true_ood)
    return report


def build_report_from_matrices(id_perf, agr_id_values, agr_ood_values, model_ids,
                               metric="accuracy", true_ood_perf=None,
                               options: ReportOptions | None = None) -> EstimateReport:
    """Agreement-based report for precomputed performance/agreement matrices.

    Covers the estimators that need no logits (ALine-S, ALine-D, naive
    agreement); useful for closed-form fixtures and externally computed
    summaries.
    """
    options = options or ReportOptions()
    id_perf = np.asarray(id_perf, dtype=np.float64)
    model_ids = list(model_ids)
    agr_id = AgreementMatrix(model_ids=model_ids, values=np.asarray(agr_id_values),
                             metric=metric, split_id="id")
    agr_ood = AgreementMatrix(model_ids=model_ids, values=np.asarray(agr_ood_values),
                              metric=metric, split_id="ood")
    report = EstimateReport(
        model_ids=model_ids, metric=metric, id_perf=id_perf,
        true_ood_perf=None if true_ood_perf is None else np.asarray(true_ood_perf),
        metadata={"metric": metric, "id_split": "id", "ood_split": "ood",
                  "gate_threshold": options.gate_threshold,
                  "clamp_eps": options.clamp_eps,
                  "evaluation_mode": true_ood_perf is not None,
                  "toolkit_version": toolkit_version})
    inp = AlineInput(id_perf=id_perf, agr_id=agr_id, agr_ood=agr_ood,
                     gate_threshold=options.gate_threshold, clamp_eps=options.clamp_eps)
    for method, fn in ((METHOD_ALINE_S, aline_s), (METHOD_ALINE_D, aline_d)):
        try:
            out = fn(inp)
            report.estimates[method] = out.estimates
            report.agreement_fit = out.agreement_fit
            report.gates[method] = out.gated
        except ToolkitError as exc:
            report.method_errors[method] = f"{type(exc).__name__}: {exc}"
    try:
        report.estimates[METHOD_NAIVE_AGREEMENT] = naive_agreement_estimate(agr_ood)
    except ToolkitError as exc:
        report.method_errors[METHOD_NAIVE_AGREEMENT] = f"{type(exc).__name__}: {exc}"
    if report.true_ood_perf is not None:
        report.mape_by_method = {m: mape(est, report.true_ood_perf)
                                 for m, est in report.estimates.items()}
    return report


def export_scatter(report: EstimateReport, pair: SplitPair, clamp_eps=CLAMP_EPS):
    """Rows for a Figure-style ID/OOD scatter: accuracy points, agreement
    points, fitted-line endpoints, and probit-scaled axis ticks."""
    rows = []
    id_perf = report.id_perf
    ood_perf = report.true_ood_perf
    agr_id = agreement_matrix(pair.id_logs, pair.metric)
    agr_ood = agreement_matrix(pair.ood_logs, pair.metric)

    def probit_of(v):
        return probit(clamp_rate(v, clamp_eps))

    xs = []
    for i, mid in enumerate(report.model_ids):
        x_raw = float(id_perf[i])
        y_raw = float(ood_perf[i]) if ood_perf is not None else float("nan")
        xp = probit_of(x_raw)
        xs.append(xp)
        yp = probit_of(y_raw) if ood_perf is not None else float("nan")
        rows.append({"kind": "accuracy", "tag": mid, "x_raw": x_raw, "y_raw": y_raw,
                     "x_probit": xp, "y_probit": yp})
    for i in range(pair.n_models):
        for j in range(i + 1, pair.n_models):
            x_raw = agr_id.pair(i, j)
            y_raw = agr_ood.pair(i, j)
            xp = probit_of(x_raw)
            xs.append(xp)
            rows.append({"kind": "agreement",
                         "tag": f"{report.model_ids[i]}|{report.model_ids[j]}",
                         "x_raw": x_raw, "y_raw": y_raw,
                         "x_probit": xp, "y_probit": probit_of(y_raw)})
    lo, hi = min(xs), max(xs)
    for kind, fit in (("accuracy_fit", report.accuracy_fit),
                      ("agreement_fit", report.agreement_fit)):
        if fit is None:
            continue
        for tag, x in (("p0", lo), ("p1", hi)):
            from .probit import normal_cdf
            y = fit.predict(x)
            rows.append({"kind": kind, "tag": tag,
                         "x_raw": normal_cdf(x), "y_raw": normal_cdf(y),
                         "x_probit": x, "y_probit": y})
    for tick in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
        p = probit(tick)
        rows.append({"kind": "axis_tick", "tag": f"{tick:.1f}",
                     "x_raw": tick, "y_raw": tick, "x_probit": p, "y_probit": p})
    return rows


def scatter_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SCATTER_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v)
                         for k, v in row.items()})
    return buf.getvalue()

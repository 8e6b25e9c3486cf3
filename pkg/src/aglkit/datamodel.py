"""Core domain types, on-disk prediction-log formats, and validated ingestion.

Log files are JSON Lines: one header object followed by one object per
example. Floats use Python's shortest round-trip decimal representation,
so save -> load reproduces values bit-for-bit. Example identity is
positional: logs compared across models must have equal length.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgmaxMismatch,
    DuplicateEntry,
    LengthViolation,
    MalformedRecord,
    MetricTaskMismatch,
    MissingFile,
    RangeViolation,
    ShapeMismatch,
)

FORMAT_VERSION = "1"

TASK_CLASSIFICATION = "classification"
TASK_EXTRACTIVE_QA = "extractive_qa"

METRIC_ACCURACY = "accuracy"
METRIC_EXACT_MATCH = "exact_match"
METRIC_F1 = "f1"

METRICS_BY_TASK = {
    TASK_CLASSIFICATION: (METRIC_ACCURACY,),
    TASK_EXTRACTIVE_QA: (METRIC_EXACT_MATCH, METRIC_F1),
}


def argmax_lowest(values) -> int:
    """Argmax with ties broken by the lowest index."""
    arr = np.asarray(values)
    return int(np.argmax(arr))


@dataclass
class ClassificationLog:
    """One model's predictions on one classification split.

    ``logits`` is either None or an (n_examples, n_classes) float array;
    ``gold`` and ``predicted`` are int arrays of length n_examples.
    """
    model_id: str
    split_id: str
    n_classes: int
    gold: np.ndarray
    predicted: np.ndarray
    logits: np.ndarray | None = None
    task: str = TASK_CLASSIFICATION

    def __len__(self):
        return len(self.gold)

    @property
    def has_logits(self) -> bool:
        return self.logits is not None


@dataclass
class SpanExample:
    """Start/end logits and span indices for one extractive-QA example."""
    n_tokens: int
    start_logits: np.ndarray
    end_logits: np.ndarray
    gold_start: int
    gold_end: int
    pred_start: int
    pred_end: int


@dataclass
class SpanLog:
    """One model's span predictions on one extractive-QA split."""
    model_id: str
    split_id: str
    examples: list[SpanExample]
    task: str = TASK_EXTRACTIVE_QA

    def __len__(self):
        return len(self.examples)

    @property
    def has_logits(self) -> bool:
        return True


@dataclass
class SplitPair:
    """Aligned ID and OOD logs for one ensemble, plus the scoring metric."""
    id_logs: list
    ood_logs: list
    metric: str

    @property
    def model_ids(self):
        return [log.model_id for log in self.id_logs]

    @property
    def n_models(self):
        return len(self.id_logs)

    @property
    def task(self):
        return self.id_logs[0].task


@dataclass
class ManifestEntry:
    model_id: str
    split_id: str
    path: str


@dataclass
class Manifest:
    version: str
    task: str
    metric: str
    entries: list[ManifestEntry] = field(default_factory=list)


def validate_log(log) -> None:
    """Check every type invariant; raises the first violation found.

    Recomputes predictions from logits (argmax, ties to lowest index)
    and compares against the stored predictions.
    """
    if isinstance(log, ClassificationLog):
        k = log.n_classes
        if k < 2:
            raise RangeViolation(-1, f"n_classes {k} < 2")
        n = len(log.gold)
        if len(log.predicted) != n:
            raise LengthViolation(-1, "gold/predicted length mismatch")
        for i in range(n):
            g = int(log.gold[i])
            p = int(log.predicted[i])
            if not 0 <= g < k:
                raise RangeViolation(i, f"gold {g} not in [0, {k})")
            if not 0 <= p < k:
                raise RangeViolation(i, f"predicted {p} not in [0, {k})")
        if log.logits is not None:
            if log.logits.shape != (n, k):
                raise LengthViolation(-1, f"logits shape {log.logits.shape} != ({n}, {k})")
            for i in range(n):
                if argmax_lowest(log.logits[i]) != int(log.predicted[i]):
                    raise ArgmaxMismatch(i)
    elif isinstance(log, SpanLog):
        for i, ex in enumerate(log.examples):
            n_tok = ex.n_tokens
            if n_tok < 1:
                raise RangeViolation(i, f"n_tokens {n_tok} < 1")
            if len(ex.start_logits) != n_tok or len(ex.end_logits) != n_tok:
                raise LengthViolation(i)
            if not (0 <= ex.gold_start <= ex.gold_end < n_tok):
                raise RangeViolation(i, "gold span out of range")
            if not (0 <= ex.pred_start < n_tok and 0 <= ex.pred_end < n_tok):
                raise RangeViolation(i, "predicted span out of range")
            if argmax_lowest(ex.start_logits) != ex.pred_start:
                raise ArgmaxMismatch(i)
            if argmax_lowest(ex.end_logits) != ex.pred_end:
                raise ArgmaxMismatch(i)
    else:
        raise TypeError(f"unsupported log type {type(log)!r}")


# --- JSON Lines log I/O ---

def save_log(log, path) -> None:
    lines = []
    if isinstance(log, ClassificationLog):
        header = {"model_id": log.model_id, "split_id": log.split_id,
                  "task": log.task, "n_classes": log.n_classes}
        lines.append(json.dumps(header, sort_keys=True))
        for i in range(len(log)):
            rec = {"gold": int(log.gold[i]), "predicted": int(log.predicted[i])}
            if log.logits is not None:
                rec["logits"] = [float(v) for v in log.logits[i]]
            lines.append(json.dumps(rec, sort_keys=True))
    elif isinstance(log, SpanLog):
        header = {"model_id": log.model_id, "split_id": log.split_id, "task": log.task}
        lines.append(json.dumps(header, sort_keys=True))
        for ex in log.examples:
            rec = {"n_tokens": ex.n_tokens,
                   "start_logits": [float(v) for v in ex.start_logits],
                   "end_logits": [float(v) for v in ex.end_logits],
                   "gold_start": ex.gold_start, "gold_end": ex.gold_end,
                   "pred_start": ex.pred_start, "pred_end": ex.pred_end}
            lines.append(json.dumps(rec, sort_keys=True))
    else:
        raise TypeError(f"unsupported log type {type(log)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_json_line(path, lineno, line):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(path, lineno, str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedRecord(path, lineno, "expected a JSON object")
    return obj


def _require(obj, key, path, lineno):
    if key not in obj:
        raise MalformedRecord(path, lineno, f"missing key {key!r}")
    return obj[key]


def load_log(path, validate: bool = True):
    """Load one JSON Lines log file; validates invariants by default."""
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path) as fh:
        raw_lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not raw_lines:
        raise MalformedRecord(path, 1, "empty file")
    header = _parse_json_line(path, 1, raw_lines[0])
    task = _require(header, "task", path, 1)
    model_id = _require(header, "model_id", path, 1)
    split_id = _require(header, "split_id", path, 1)
    if task == TASK_CLASSIFICATION:
        k = int(_require(header, "n_classes", path, 1))
        golds, preds, logit_rows = [], [], []
        any_logits = None
        for lineno, line in enumerate(raw_lines[1:], start=2):
            rec = _parse_json_line(path, lineno, line)
            golds.append(int(_require(rec, "gold", path, lineno)))
            preds.append(int(_require(rec, "predicted", path, lineno)))
            has = "logits" in rec
            if any_logits is None:
                any_logits = has
            elif any_logits != has:
                raise MalformedRecord(path, lineno, "inconsistent presence of logits")
            if has:
                logit_rows.append([float(v) for v in rec["logits"]])
        logits = None
        if any_logits:
            widths = {len(r) for r in logit_rows}
            if widths != {k}:
                raise MalformedRecord(path, 2, f"logit widths {sorted(widths)} != n_classes {k}")
            logits = np.array(logit_rows, dtype=np.float64)
        log = ClassificationLog(model_id=model_id, split_id=split_id, n_classes=k,
                                gold=np.array(golds, dtype=np.int64),
                                predicted=np.array(preds, dtype=np.int64),
                                logits=logits)
    elif task == TASK_EXTRACTIVE_QA:
        examples = []
        for lineno, line in enumerate(raw_lines[1:], start=2):
            rec = _parse_json_line(path, lineno, line)
            examples.append(SpanExample(
                n_tokens=int(_require(rec, "n_tokens", path, lineno)),
                start_logits=np.array(_require(rec, "start_logits", path, lineno), dtype=np.float64),
                end_logits=np.array(_require(rec, "end_logits", path, lineno), dtype=np.float64),
                gold_start=int(_require(rec, "gold_start", path, lineno)),
                gold_end=int(_require(rec, "gold_end", path, lineno)),
                pred_start=int(_require(rec, "pred_start", path, lineno)),
                pred_end=int(_require(rec, "pred_end", path, lineno))))
        log = SpanLog(model_id=model_id, split_id=split_id, examples=examples)
    else:
        raise MalformedRecord(path, 1, f"unknown task {task!r}")
    if validate:
        validate_log(log)
    return log


# --- manifests ---

def save_manifest(manifest: Manifest, path) -> None:
    doc = {"version": manifest.version, "task": manifest.task, "metric": manifest.metric,
           "entries": [{"model_id": e.model_id, "split_id": e.split_id, "path": e.path}
                       for e in manifest.entries]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> Manifest:
    """Parse a manifest file without loading the logs it references."""
    if not os.path.isfile(path):
        raise MissingFile(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(path, exc.lineno, str(exc)) from exc
    if not isinstance(doc, dict):
        raise MalformedRecord(path, 1, "manifest must be a JSON object")
    for key in ("version", "task", "metric", "entries"):
        if key not in doc:
            raise MalformedRecord(path, 1, f"missing key {key!r}")
    task = doc["task"]
    metric = doc["metric"]
    if task not in METRICS_BY_TASK:
        raise MalformedRecord(path, 1, f"unknown task {task!r}")
    if metric not in METRICS_BY_TASK[task]:
        raise MetricTaskMismatch(metric, task)
    entries = []
    seen = set()
    for e in doc["entries"]:
        entry = ManifestEntry(model_id=e["model_id"], split_id=e["split_id"], path=e["path"])
        key = (entry.model_id, entry.split_id)
        if key in seen:
            raise DuplicateEntry(*key)
        seen.add(key)
        entries.append(entry)
    return Manifest(version=str(doc["version"]), task=task, metric=metric, entries=entries)


def _load_entries(manifest: Manifest, base_dir):
    """Load and validate all logs of a manifest, keyed by (model_id, split_id)."""
    logs = {}
    for e in manifest.entries:
        path = os.path.join(base_dir, e.path)
        log = load_log(path)
        if log.model_id != e.model_id or log.split_id != e.split_id:
            raise ShapeMismatch(e.model_id, f"log header at {path} does not match manifest entry")
        if log.task != manifest.task:
            raise MetricTaskMismatch(manifest.metric, log.task)
        logs[(e.model_id, e.split_id)] = log
    return logs


def _pair_from_split_maps(id_logs, ood_logs, metric):
    if len(id_logs) < 2:
        raise ShapeMismatch("*", f"need at least 2 models, got {len(id_logs)}")
    model_ids = [log.model_id for log in id_logs]
    ood_ids = [log.model_id for log in ood_logs]
    if model_ids != ood_ids:
        raise ShapeMismatch("*", f"model ids differ between splits: {model_ids} vs {ood_ids}")
    ref_len_id = len(id_logs[0])
    ref_len_ood = len(ood_logs[0])
    for log in id_logs:
        if len(log) != ref_len_id:
            raise ShapeMismatch(log.model_id, "ID log length differs from ensemble")
    for log in ood_logs:
        if len(log) != ref_len_ood:
            raise ShapeMismatch(log.model_id, "OOD log length differs from ensemble")
    if isinstance(id_logs[0], ClassificationLog):
        ks = {log.n_classes for log in id_logs} | {log.n_classes for log in ood_logs}
        if len(ks) != 1:
            raise ShapeMismatch("*", f"inconsistent n_classes {sorted(ks)}")
    return SplitPair(id_logs=list(id_logs), ood_logs=list(ood_logs), metric=metric)


def load_manifest(path, metric_override=None) -> SplitPair:
    """Load a manifest holding both splits into a validated SplitPair.

    The manifest must reference exactly two split_ids; the one appearing
    first is treated as in-distribution.
    """
    manifest = read_manifest(path)
    metric = metric_override or manifest.metric
    if metric not in METRICS_BY_TASK[manifest.task]:
        raise MetricTaskMismatch(metric, manifest.task)
    base_dir = os.path.dirname(os.path.abspath(path))
    logs = _load_entries(manifest, base_dir)
    split_order = []
    for e in manifest.entries:
        if e.split_id not in split_order:
            split_order.append(e.split_id)
    if len(split_order) != 2:
        raise ShapeMismatch("*", f"manifest must reference exactly 2 splits, got {split_order}")
    id_split, ood_split = split_order
    model_order = []
    for e in manifest.entries:
        if e.model_id not in model_order:
            model_order.append(e.model_id)
    id_logs, ood_logs = [], []
    for m in model_order:
        for split, dest in ((id_split, id_logs), (ood_split, ood_logs)):
            if (m, split) not in logs:
                raise ShapeMismatch(m, f"missing log for split {split!r}")
            dest.append(logs[(m, split)])
    return _pair_from_split_maps(id_logs, ood_logs, metric)


def load_split_pair(id_path, ood_path, metric_override=None) -> SplitPair:
    """Build a SplitPair from separate ID and OOD manifests.

    Passing the same path twice falls back to the two-split single
    manifest layout of load_manifest.
    """
    if os.path.abspath(id_path) == os.path.abspath(ood_path):
        return load_manifest(id_path, metric_override)
    id_manifest = read_manifest(id_path)
    ood_manifest = read_manifest(ood_path)
    if id_manifest.task != ood_manifest.task:
        raise MetricTaskMismatch(id_manifest.metric, ood_manifest.task)
    metric = metric_override or id_manifest.metric
    if metric not in METRICS_BY_TASK[id_manifest.task]:
        raise MetricTaskMismatch(metric, id_manifest.task)
    id_logs_map = _load_entries(id_manifest, os.path.dirname(os.path.abspath(id_path)))
    ood_logs_map = _load_entries(ood_manifest, os.path.dirname(os.path.abspath(ood_path)))
    id_logs = [id_logs_map[k] for k in (tuple((e.model_id, e.split_id) for e in id_manifest.entries))]
    ood_by_model = {e.model_id: ood_logs_map[(e.model_id, e.split_id)] for e in ood_manifest.entries}
    ordered_ood = []
    for log in id_logs:
        if log.model_id not in ood_by_model:
            raise ShapeMismatch(log.model_id, "no OOD log for model")
        ordered_ood.append(ood_by_model[log.model_id])
    return _pair_from_split_maps(id_logs, ordered_ood, metric)

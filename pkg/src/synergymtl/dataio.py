"""Cohort ingestion, cleaning and paired-scan assembly.

The input is a wide CSV, one row per subject visit. Column names are taken
from a :class:`ColumnSchema`, normally loaded from a JSON config file.
"""

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssemblyError,
    ConfigError,
    DateError,
    DegenerateCohortError,
    DuplicateRecordError,
    ParseError,
    SchemaError,
)

VISIT_CODES = ("BL", "M06", "M12", "M24", "M36")
DX_GROUPS = ("AD", "MCI", "NL", "Unknown")
_DX_ALIASES = {
    "AD": "AD", "DEMENTIA": "AD",
    "MCI": "MCI", "LMCI": "MCI", "EMCI": "MCI",
    "NL": "NL", "CN": "NL", "NORMAL": "NL",
    "": "Unknown", "UNKNOWN": "Unknown",
}
_MISSING = {"", "na", "nan", "null", "none", "-4", "?"}
_FALSE = {"0", "false", "fail", "failed", "no", "n"}
_TRUE = {"1", "true", "pass", "passed", "yes", "y", ""}


@dataclass
class ColumnSchema:
    scores: list
    rois: list
    subject_id: str = "subject_id"
    visit: str = "visit"
    scan_date: str = "scan_date"
    dx: str = "dx"
    qc: str = "qc_pass"
    targets: list = None

    @classmethod
    def from_dict(cls, data):
        if "scores" not in data or "rois" not in data:
            raise ConfigError("schema needs 'scores' and 'rois' lists")
        known = {"scores", "rois", "subject_id", "visit", "scan_date", "dx", "qc", "targets"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown schema keys: {sorted(extra)}")
        return cls(**{k: data[k] for k in data})

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        out = {"subject_id": self.subject_id, "visit": self.visit,
               "scan_date": self.scan_date, "dx": self.dx, "qc": self.qc,
               "scores": list(self.scores), "rois": list(self.rois)}
        if self.targets is not None:
            out["targets"] = list(self.targets)
        return out


@dataclass
class Visit:
    visit_code: str
    scan_date: _dt.date
    roi_values: np.ndarray
    scores: dict
    qc_pass: bool = True


@dataclass
class SubjectRecord:
    subject_id: str
    dx_group: str
    visits: list = field(default_factory=list)

    def visit(self, code):
        for v in self.visits:
            if v.visit_code == code:
                return v
        return None


@dataclass
class Cohort:
    subjects: list
    roi_names: list
    score_names: list

    def __post_init__(self):
        if len(set(self.roi_names)) != len(self.roi_names) or any(not r for r in self.roi_names):
            raise ConfigError("ROI names must be unique and non-empty")

    @property
    def n_subjects(self):
        return len(self.subjects)


@dataclass(frozen=True)
class VisitPair:
    baseline: str = "BL"
    follow: str = "M06"

    def __post_init__(self):
        if self.baseline != "BL" or self.follow not in VISIT_CODES[1:]:
            raise ConfigError(f"span must be (BL, M06|M12|M24|M36), got "
                              f"({self.baseline}, {self.follow})")

    @classmethod
    def parse(cls, text):
        parts = [p.strip().upper() for p in str(text).replace(",", ":").replace("-", ":").split(":")]
        if len(parts) == 1:
            return cls("BL", _visit_code(parts[0]))
        if len(parts) != 2:
            raise ConfigError(f"cannot parse span {text!r}")
        return cls(_visit_code(parts[0]), _visit_code(parts[1]))

    def __str__(self):
        return f"{self.baseline}:{self.follow}"


@dataclass
class CleaningReport:
    removed_subjects: list = field(default_factory=list)
    removed_features: list = field(default_factory=list)
    imputed_cells: int = 0
    n_subjects_in: int = 0
    n_subjects_out: int = 0

    def to_dict(self):
        return {
            "n_subjects_in": self.n_subjects_in,
            "n_subjects_out": self.n_subjects_out,
            "removed_subjects": [
                {"subject_id": s, "rule": rule, "detail": detail}
                for s, rule, detail in self.removed_subjects],
            "removed_features": [
                {"roi": name, "missing_fraction": frac}
                for name, frac in self.removed_features],
            "imputed_cells": self.imputed_cells,
        }


@dataclass
class PairedDataset:
    subject_ids: list
    dx: list
    roi_names: list
    baseline: np.ndarray
    follow: np.ndarray
    dt_days: np.ndarray
    Y: np.ndarray
    target_labels: list
    span: VisitPair

    @property
    def n(self):
        return len(self.subject_ids)

    @property
    def k(self):
        return self.Y.shape[1]

    def to_dict(self):
        return {
            "span": str(self.span),
            "roi_names": list(self.roi_names),
            "target_labels": list(self.target_labels),
            "subject_ids": list(self.subject_ids),
            "dx": list(self.dx),
            "dt_days": self.dt_days.tolist(),
            "baseline": self.baseline.tolist(),
            "follow": self.follow.tolist(),
            "Y": self.Y.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        r = len(data["roi_names"])
        k = len(data["target_labels"])
        n = len(data["subject_ids"])
        return cls(
            subject_ids=list(data["subject_ids"]), dx=list(data["dx"]),
            roi_names=list(data["roi_names"]),
            baseline=np.asarray(data["baseline"], dtype=float).reshape(n, r),
            follow=np.asarray(data["follow"], dtype=float).reshape(n, r),
            dt_days=np.asarray(data["dt_days"], dtype=float).reshape(n),
            Y=np.asarray(data["Y"], dtype=float).reshape(n, k),
            target_labels=list(data["target_labels"]),
            span=VisitPair.parse(data["span"]),
        )


def _visit_code(text):
    code = str(text).strip().upper()
    if code in ("SC", "BASELINE"):
        code = "BL"
    if code.startswith("M") and code[1:].isdigit():
        code = f"M{int(code[1:]):02d}"
    if code not in VISIT_CODES:
        raise ConfigError(f"unknown visit code {text!r}")
    return code


def _float_or_nan(text):
    t = text.strip()
    if t.lower() in _MISSING:
        return math.nan
    return float(t)


def parse_target(text):
    """``"mmse@M12"`` -> ``("mmse", "M12")``."""
    if "@" not in text:
        raise ConfigError(f"target {text!r} must look like score@VISIT")
    score, visit = text.rsplit("@", 1)
    return score.strip(), _visit_code(visit)


def target_label(score, visit):
    return f"{score}@{visit}"


def parse_cohort(path, schema):
    """Read a wide cohort CSV into a :class:`Cohort`.

    Missing cells become NaN. Subjects are ordered by id, visits by date.
    """
    required = [schema.subject_id, schema.visit, schema.scan_date, schema.dx]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        col = {name: i for i, name in enumerate(header)}
        for name in required + list(schema.scores) + list(schema.rois):
            if name not in col:
                raise SchemaError(f"missing required column {name!r}")
        qc_col = col.get(schema.qc)
        roi_idx = [col[r] for r in schema.rois]
        score_idx = [col[s] for s in schema.scores]

        subjects = {}
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", line)
            sid = row[col[schema.subject_id]].strip()
            if not sid:
                raise ParseError("empty subject id", line)
            try:
                code = _visit_code(row[col[schema.visit]])
            except ConfigError as exc:
                raise ParseError(str(exc), line) from None
            if (sid, code) in seen:
                raise DuplicateRecordError(f"duplicate record ({sid}, {code})", line)
            seen.add((sid, code))
            try:
                date = _dt.date.fromisoformat(row[col[schema.scan_date]].strip())
            except ValueError:
                raise DateError(f"unparseable scan date {row[col[schema.scan_date]]!r}",
                                line) from None
            dx_raw = row[col[schema.dx]].strip().upper()
            if dx_raw not in _DX_ALIASES:
                raise ParseError(f"unknown diagnosis {row[col[schema.dx]]!r}", line)
            try:
                rois = np.array([_float_or_nan(row[i]) for i in roi_idx], dtype=float)
                scores = {s: _float_or_nan(row[i]) for s, i in zip(schema.scores, score_idx)}
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", line) from None
            for s, v in scores.items():
                if s.lower() == "mmse" and not math.isnan(v) and not 0 <= v <= 30:
                    raise ParseError(f"MMSE value {v} outside [0, 30]", line)
            qc = True
            if qc_col is not None:
                flag = row[qc_col].strip().lower()
                if flag in _FALSE:
                    qc = False
                elif flag not in _TRUE:
                    raise ParseError(f"unreadable QC flag {row[qc_col]!r}", line)
            rec = subjects.get(sid)
            if rec is None:
                rec = subjects[sid] = SubjectRecord(sid, _DX_ALIASES[dx_raw])
            elif rec.dx_group == "Unknown":
                rec.dx_group = _DX_ALIASES[dx_raw]
            rec.visits.append(Visit(code, date, rois, scores, qc))

    ordered = []
    for sid in sorted(subjects):
        rec = subjects[sid]
        rec.visits.sort(key=lambda v: (v.scan_date, VISIT_CODES.index(v.visit_code)))
        ordered.append(rec)
    return Cohort(ordered, list(schema.rois), list(schema.scores))


def write_cohort_csv(path, cohort, schema=None):
    """Inverse of :func:`parse_cohort` (NaN written as empty cells)."""
    if schema is None:
        schema = ColumnSchema(scores=list(cohort.score_names), rois=list(cohort.roi_names))
    header = ([schema.subject_id, schema.visit, schema.scan_date, schema.dx, schema.qc]
              + list(schema.scores) + list(schema.rois))

    def fmt(v):
        return "" if math.isnan(v) else repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in cohort.subjects:
            for v in s.visits:
                w.writerow([s.subject_id, v.visit_code, v.scan_date.isoformat(), s.dx_group,
                            "1" if v.qc_pass else "0"]
                           + [fmt(v.scores.get(name, math.nan)) for name in schema.scores]
                           + [fmt(x) for x in v.roi_values])


def _copy_cohort(cohort):
    subjects = [
        SubjectRecord(s.subject_id, s.dx_group,
                      [Visit(v.visit_code, v.scan_date, v.roi_values.copy(), dict(v.scores),
                             v.qc_pass) for v in s.visits])
        for s in cohort.subjects
    ]
    return Cohort(subjects, list(cohort.roi_names), list(cohort.score_names))


def default_targets(cohort, span):
    return [(s, v) for s in cohort.score_names for v in (span.baseline, span.follow)]


def clean_cohort(cohort, span, targets=None):
    """Apply the five cleaning rules in order; returns ``(cohort, report)``.

    1. drop subjects with a failed QC flag on any visit;
    2. drop ROI features missing for more than half of the subjects
       (a subject counts as missing if any of its span visits lacks the value);
    3. drop subjects without both scans of ``span``;
    4. fill remaining missing span-visit ROI cells with the per-feature,
       per-visit mean over the retained subjects;
    5. drop subjects missing any target score.

    The input cohort is left untouched.
    """
    if targets is None:
        targets = default_targets(cohort, span)
    targets = [(s, _visit_code(v)) for s, v in targets]
    for s, _ in targets:
        if s not in cohort.score_names:
            raise ConfigError(f"target score {s!r} not in cohort scores {cohort.score_names}")
    report = CleaningReport(n_subjects_in=cohort.n_subjects)
    cohort = _copy_cohort(cohort)
    codes = (span.baseline, span.follow)

    kept = []
    for s in cohort.subjects:
        if all(v.qc_pass for v in s.visits):
            kept.append(s)
        else:
            report.removed_subjects.append((s.subject_id, "rule-1", "failed quality control"))
    subjects = kept

    r = len(cohort.roi_names)
    missing = np.zeros(r)
    counted = 0
    for s in subjects:
        span_visits = [v for v in s.visits if v.visit_code in codes]
        if not span_visits:
            continue
        counted += 1
        miss = np.zeros(r, dtype=bool)
        for v in span_visits:
            miss |= np.isnan(v.roi_values)
        missing += miss
    frac = missing / counted if counted else np.zeros(r)
    keep_cols = frac <= 0.5
    for j in np.flatnonzero(~keep_cols):
        report.removed_features.append((cohort.roi_names[j], float(frac[j])))
    roi_names = [name for name, keep in zip(cohort.roi_names, keep_cols) if keep]
    for s in subjects:
        for v in s.visits:
            v.roi_values = v.roi_values[keep_cols]

    kept = []
    for s in subjects:
        lacking = [c for c in codes if s.visit(c) is None]
        if lacking:
            report.removed_subjects.append(
                (s.subject_id, "rule-3", "no scan at " + ", ".join(lacking)))
        else:
            kept.append(s)
    subjects = kept
    if not subjects:
        raise DegenerateCohortError("no subjects keep both scans of the span")

    for c in codes:
        vals = np.array([s.visit(c).roi_values for s in subjects])
        holes_any = np.isnan(vals)
        counts = (~holes_any).sum(axis=0)
        if np.any(holes_any.any(axis=0) & (counts == 0)):
            raise DegenerateCohortError(f"a retained ROI has no observed value at {c}")
        means = np.where(holes_any, 0.0, vals).sum(axis=0) / np.maximum(counts, 1)
        for s in subjects:
            v = s.visit(c)
            holes = np.isnan(v.roi_values)
            if holes.any():
                v.roi_values[holes] = means[holes]
                report.imputed_cells += int(holes.sum())

    kept = []
    for s in subjects:
        absent = []
        for score, code in targets:
            v = s.visit(code)
            if v is None or math.isnan(v.scores.get(score, math.nan)):
                absent.append(target_label(score, code))
        if absent:
            report.removed_subjects.append(
                (s.subject_id, "rule-5", "missing target " + ", ".join(absent)))
        else:
            kept.append(s)
    subjects = kept

    if not subjects:
        raise DegenerateCohortError("no subjects survive cleaning")
    if not roi_names:
        raise DegenerateCohortError("no ROI features survive cleaning")
    report.n_subjects_out = len(subjects)
    return Cohort(subjects, roi_names, list(cohort.score_names)), report


def assemble_longitudinal(cohort, span, targets):
    """Per-subject baseline/follow ROI vectors, day gap and target row."""
    targets = [(s, _visit_code(v)) for s, v in targets]
    if not targets:
        raise ConfigError("at least one target is required")
    subjects = sorted(cohort.subjects, key=lambda s: s.subject_id)
    base, follow, dt, Y = [], [], [], []
    for s in subjects:
        b = s.visit(span.baseline)
        f = s.visit(span.follow)
        if b is None or f is None:
            raise AssemblyError(f"subject {s.subject_id} lacks a scan for span {span}")
        row = []
        for score, code in targets:
            v = s.visit(code)
            val = math.nan if v is None else v.scores.get(score, math.nan)
            if math.isnan(val):
                raise AssemblyError(
                    f"subject {s.subject_id} lacks target {target_label(score, code)}")
            row.append(val)
        base.append(b.roi_values)
        follow.append(f.roi_values)
        dt.append((f.scan_date - b.scan_date).days)
        Y.append(row)
    r = len(cohort.roi_names)
    return PairedDataset(
        subject_ids=[s.subject_id for s in subjects],
        dx=[s.dx_group for s in subjects],
        roi_names=list(cohort.roi_names),
        baseline=np.array(base, dtype=float).reshape(len(subjects), r),
        follow=np.array(follow, dtype=float).reshape(len(subjects), r),
        dt_days=np.array(dt, dtype=float),
        Y=np.array(Y, dtype=float).reshape(len(subjects), len(targets)),
        target_labels=[target_label(s, v) for s, v in targets],
        span=span,
    )

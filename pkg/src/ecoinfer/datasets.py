"""CSV ingestion, the canonical dataset file, and CSV writers for synthetic data.

Input schemas (UTF-8, header row required)::

    results:    precinct_id,series,department,option,votes
    padron:     precinct_id,age,electors
    plebiscite: precinct_id,si_votes
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IoFailure, JoinFailure, MarginalMismatch, NegativeCount, ParseError, ValidationError
from .model import (
    BracketPartition,
    OptionSet,
    PrecinctRecord,
    aggregate_padron,
    validate_records,
)

RESULTS_COLUMNS = ("precinct_id", "series", "department", "option", "votes")
PADRON_COLUMNS = ("precinct_id", "age", "electors")
PLEBISCITE_COLUMNS = ("precinct_id", "si_votes")
DATASET_FORMAT = "ecoinfer-dataset/1"
DEFAULT_ABSTAIN = "abstain"


@dataclass(frozen=True)
class Dataset:
    options: OptionSet
    partition: BracketPartition
    records: tuple[PrecinctRecord, ...]

    @property
    def n_electors(self) -> int:
        return sum(r.roll for r in self.records)

    def summary(self) -> dict:
        return {"precincts": len(self.records), "electors": self.n_electors,
                "options": len(self.options), "brackets": len(self.partition),
                "votes": sum(r.total_votes for r in self.records)}

    def to_json(self) -> str:
        doc = {
            "format": DATASET_FORMAT,
            "options": list(self.options.options),
            "abstain": self.options.abstain,
            "brackets": ",".join(self.partition.labels_spec()),
            "precincts": [
                {"precinct_id": r.precinct_id, "series": r.series, "department": r.department,
                 "electors": list(r.electors), "votes": list(r.votes)}
                for r in self.records
            ],
        }
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        doc = json.loads(text)
        if doc.get("format") != DATASET_FORMAT:
            raise ValidationError(f"not a dataset file (format {doc.get('format')!r})")
        options = OptionSet(tuple(doc["options"]), abstain=doc.get("abstain"))
        partition = BracketPartition.parse(doc["brackets"])
        records = tuple(PrecinctRecord(precinct_id=p["precinct_id"], electors=tuple(p["electors"]),
                                       votes=tuple(p["votes"]), series=p.get("series", ""),
                                       department=p.get("department", ""))
                        for p in doc["precincts"])
        validate_records(records, options, partition)
        return cls(options, partition, records)

    def write(self, path) -> Path:
        path = Path(path)
        try:
            path.write_bytes(self.to_json().encode("utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc
        return path

    @classmethod
    def read(cls, path) -> "Dataset":
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(str(path), 0, f"malformed dataset file: {exc}") from exc


def _rows(path, columns: Sequence[str]):
    """Yield (line number, row dict) after checking the header names the required columns."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise ParseError(str(path), 1, "missing header row")
        missing = [c for c in columns if c not in header]
        if missing:
            raise ParseError(str(path), 1, f"header lacks column(s) {', '.join(missing)}")
        for row in reader:
            if None in row or any(row[c] is None for c in columns):
                raise ParseError(str(path), reader.line_num, "wrong number of fields")
            yield reader.line_num, row


def _int(path, line, value, name) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise ParseError(str(path), line, f"{name} {value!r} is not an integer") from None


def read_results(path):
    """Long-format results -> (option order, {id: {option: votes}}, {id: (series, department)})."""
    options: list[str] = []
    votes: dict[str, dict[str, int]] = {}
    meta: dict[str, tuple[str, str]] = {}
    for line, row in _rows(path, RESULTS_COLUMNS):
        pid = row["precinct_id"].strip()
        opt = row["option"].strip()
        if not pid or not opt:
            raise ParseError(str(path), line, "empty precinct_id or option")
        n = _int(path, line, row["votes"], "votes")
        if n < 0:
            raise NegativeCount(f"{path}:{line}: negative votes {n} for precinct {pid!r}")
        m = (row["series"].strip(), row["department"].strip())
        if meta.setdefault(pid, m) != m:
            raise ParseError(str(path), line, f"precinct {pid!r} changes series/department")
        bucket = votes.setdefault(pid, {})
        if opt in bucket:
            raise ParseError(str(path), line, f"duplicate option {opt!r} for precinct {pid!r}")
        bucket[opt] = n
        if opt not in options:
            options.append(opt)
    return options, votes, meta


def read_padron(path) -> list[tuple[str, int, int]]:
    out = []
    for line, row in _rows(path, PADRON_COLUMNS):
        pid = row["precinct_id"].strip()
        if not pid:
            raise ParseError(str(path), line, "empty precinct_id")
        out.append((pid, _int(path, line, row["age"], "age"),
                    _int(path, line, row["electors"], "electors")))
    return out


def read_plebiscite(path) -> dict[str, int]:
    out = {}
    for line, row in _rows(path, PLEBISCITE_COLUMNS):
        pid = row["precinct_id"].strip()
        if pid in out:
            raise ParseError(str(path), line, f"duplicate precinct {pid!r}")
        out[pid] = _int(path, line, row["si_votes"], "si_votes")
    return out


def ingest(results_path, padron_path, partition: BracketPartition,
           abstain_label: str = DEFAULT_ABSTAIN) -> Dataset:
    """Join results and padron, derive abstention as roll minus votes, and validate.

    If the results already carry an ``abstain_label`` option it must equal
    the roll minus the other votes.
    """
    option_order, votes, meta = read_results(results_path)
    rolls = aggregate_padron(read_padron(padron_path), partition)
    only_results = set(votes) - set(rolls)
    only_padron = set(rolls) - set(votes)
    if only_results or only_padron:
        raise JoinFailure(missing_in_padron=only_results, missing_in_results=only_padron)
    given_abstain = abstain_label in option_order
    parties = [o for o in option_order if o != abstain_label]
    options = OptionSet(tuple(parties) + (abstain_label,), abstain=abstain_label)
    records, bad = [], []
    for pid in sorted(votes):
        counts = [votes[pid].get(o, 0) for o in parties]
        roll = sum(rolls[pid])
        abstain = roll - sum(counts)
        if abstain < 0 or (given_abstain and votes[pid].get(abstain_label, 0) != abstain):
            bad.append(pid)
            continue
        series, dept = meta[pid]
        records.append(PrecinctRecord(pid, rolls[pid], tuple(counts) + (abstain,), series, dept))
    if bad:
        first = bad[0]
        raise MarginalMismatch(", ".join(bad), sum(rolls[first]),
                               sum(v for o, v in votes[first].items() if o != abstain_label),
                               f"{len(bad)} precinct(s) with votes inconsistent with the roll")
    validate_records(records, options, partition)
    return Dataset(options, partition, tuple(records))


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


def write_results(path, records: Sequence[PrecinctRecord], options: OptionSet) -> Path:
    """Long-format results; the abstention column is left out (ingest derives it)."""
    rows = [(r.precinct_id, r.series, r.department, opt, n)
            for r in records for opt, n in zip(options.options, r.votes)
            if opt != options.abstain]
    return _write_csv(path, RESULTS_COLUMNS, rows)


def write_padron(path, precinct_ids: Sequence[str], ages: np.ndarray,
                 age_counts: np.ndarray) -> Path:
    rows = [(pid, int(a), int(c)) for pid, counts in zip(precinct_ids, age_counts)
            for a, c in zip(ages, counts) if c > 0]
    return _write_csv(path, PADRON_COLUMNS, rows)


def write_plebiscite(path, si_votes: dict[str, int]) -> Path:
    return _write_csv(path, PLEBISCITE_COLUMNS, sorted(si_votes.items()))

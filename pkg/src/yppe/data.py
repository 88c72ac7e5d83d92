"""Right-censored survival data containers and delimited-file ingestion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised when a dataset file or array violates the input contract."""

    def __init__(self, message: str, row: int | None = None, source: str | None = None):
        self.row = row
        self.source = source
        if row is not None:
            message = f"row {row}: {message}"
        if source is not None:
            message = f"{source}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SurvivalData:
    """Observed times, event indicators and a covariate matrix.

    ``time`` has shape (n,), ``status`` shape (n,) with values in {0, 1},
    ``covariates`` shape (n, p). Arrays are copied and made read-only.
    """

    time: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        time = np.array(self.time, dtype=float).reshape(-1)
        status = np.array(self.status).reshape(-1)
        cov = np.array(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(len(time), -1) if len(time) else cov.reshape(0, 0)
        names = tuple(str(s) for s in self.covariate_names)

        n = len(time)
        if n == 0:
            raise DatasetError("dataset has no rows")
        if status.shape != (n,) or cov.shape[0] != n:
            raise DatasetError("time, status and covariates must have the same number of rows")
        if cov.shape[1] != len(names):
            raise DatasetError(
                f"{cov.shape[1]} covariate columns but {len(names)} covariate names"
            )
        if len(set(names)) != len(names):
            raise DatasetError("duplicate covariate names")
        bad = np.flatnonzero(~np.isfinite(time) | (time <= 0))
        if bad.size:
            raise DatasetError("time must be finite and > 0", row=int(bad[0]) + 1)
        status_f = np.asarray(status, dtype=float)
        bad = np.flatnonzero((status_f != 0) & (status_f != 1))
        if bad.size:
            raise DatasetError("status must be 0 or 1", row=int(bad[0]) + 1)
        bad = np.flatnonzero(~np.all(np.isfinite(cov), axis=1))
        if bad.size:
            raise DatasetError("covariates must be finite", row=int(bad[0]) + 1)

        status = status_f.astype(np.int8)
        for arr in (time, status, cov):
            arr.setflags(write=False)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    def event_times(self) -> np.ndarray:
        """Sorted distinct event times."""
        return np.unique(self.time[self.status == 1])

    def subset(self, mask: np.ndarray) -> "SurvivalData":
        mask = np.asarray(mask, dtype=bool)
        return SurvivalData(
            self.time[mask], self.status[mask], self.covariates[mask], self.covariate_names
        )

    def permuted(self, order: Sequence[int]) -> "SurvivalData":
        order = np.asarray(order)
        return SurvivalData(
            self.time[order], self.status[order], self.covariates[order], self.covariate_names
        )

    @classmethod
    def from_arrays(cls, time, status, covariates=None, names: Iterable[str] | None = None):
        time = np.asarray(time, dtype=float)
        if covariates is None:
            covariates = np.zeros((len(time), 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if names is None:
            names = [f"z{j + 1}" for j in range(covariates.shape[1])]
        return cls(time, np.asarray(status), covariates, tuple(names))


def _sniff_delimiter(header_line: str) -> str:
    for delim in (",", "\t", ";"):
        if delim in header_line:
            return delim
    return ","


def parse_dataset(text: str, source: str = "<string>") -> SurvivalData:
    """Parse delimited text with a header containing ``time`` and ``status``.

    Every other column is a numeric covariate, kept in header order. Errors
    name the 1-based data row (header excluded).
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DatasetError("empty file", source=source)
    delim = _sniff_delimiter(lines[0])
    reader = csv.reader(io.StringIO("\n".join(lines)), delimiter=delim)
    header = [h.strip() for h in next(reader)]
    for required in ("time", "status"):
        if required not in header:
            raise DatasetError(f"missing required column '{required}'", source=source)
    i_time = header.index("time")
    i_status = header.index("status")
    cov_idx = [j for j, h in enumerate(header) if j not in (i_time, i_status)]
    names = [header[j] for j in cov_idx]

    times, status, cov = [], [], []
    for row_no, row in enumerate(reader, start=1):
        if len(row) != len(header):
            raise DatasetError(f"expected {len(header)} fields, got {len(row)}", row=row_no, source=source)
        values = []
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                raise DatasetError(f"missing value in column '{header[j]}'", row=row_no, source=source)
            try:
                values.append(float(cell))
            except ValueError:
                raise DatasetError(f"non-numeric value {cell!r} in column '{header[j]}'", row=row_no, source=source) from None
        t, s = values[i_time], values[i_status]
        if not math.isfinite(t) or t <= 0:
            raise DatasetError(f"time must be positive, got {t!r}", row=row_no, source=source)
        if s not in (0.0, 1.0):
            raise DatasetError(f"status must be 0 or 1, got {row[i_status].strip()}", row=row_no, source=source)
        times.append(t)
        status.append(int(s))
        cov.append([values[j] for j in cov_idx])

    if not times:
        raise DatasetError("no data rows", source=source)
    return SurvivalData(
        np.array(times), np.array(status), np.array(cov, dtype=float).reshape(len(times), len(names)),
        tuple(names),
    )


def read_dataset(path: str | Path) -> SurvivalData:
    path = Path(path)
    return parse_dataset(path.read_text(), source=str(path))


def format_dataset(data: SurvivalData, precision: int = 10) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["time", "status", *data.covariate_names])
    fmt = f"{{:.{precision}g}}"
    for t, s, z in zip(data.time, data.status, data.covariates):
        writer.writerow([fmt.format(t), int(s), *(fmt.format(v) for v in z)])
    return out.getvalue()


def write_dataset(data: SurvivalData, path: str | Path, precision: int = 10) -> None:
    Path(path).write_text(format_dataset(data, precision))


def gastric_path() -> Path:
    return Path(str(resources.files("yppe.datasets").joinpath("gastric.csv")))


def load_gastric() -> SurvivalData:
    """GTSG (1982) gastric cancer trial: 90 patients, ``treatment`` = 1 for
    chemotherapy plus radiotherapy, 0 for chemotherapy alone. Times in days."""
    return read_dataset(gastric_path())

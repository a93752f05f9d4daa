"""CSV ingestion, design-matrix construction, and synthetic-data generation.

The design matrix puts the intercept first, standardizes numeric covariates
with the n-1 sample standard deviation, and dummy-codes factors against a
reference level (the first declared or lexicographically first observed
level), naming indicator columns by concatenating the factor name and the
level.  The centering and scale constants live in a DesignInfo so that new
rows transform identically at prediction time.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (
    ConfigError,
    ConstantColumnWarning,
    DomainError,
    EmptyDataset,
    GeneratorError,
    IdentifiabilityWarning,
    ParseError,
    SchemaMismatch,
    UnseenLevel,
)
from .model import SurvivalDataset, Theta, cure_rate, susceptible_survival, validate_theta

__all__ = [
    "ColumnRoles",
    "DesignInfo",
    "LoadedData",
    "read_table",
    "load_dataset",
    "build_design_matrix",
    "simulate_dataset",
    "write_table",
]

_NA_TOKENS = frozenset({"", "na", "n/a", "nan", "null", "."})


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in _NA_TOKENS


def _parses_as_float(cell) -> bool:
    try:
        float(cell)
    except (TypeError, ValueError):
        return False
    return True


# ---------------------------------------------------------------------------
# raw tables
# ---------------------------------------------------------------------------


def read_table(path) -> tuple:
    """Read a headered CSV into (column names, list of row tuples).

    Rows keep their cells as strings; width mismatches raise ParseError with
    the offending data row (1-based, header excluded).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if any(not h for h in header):
            raise ParseError(f"{path}: blank column name in header")
        if len(set(header)) != len(header):
            raise ParseError(f"{path}: duplicate column names in header")
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: data row {i} has {len(row)} cells, expected {len(header)}",
                    row=i,
                )
            rows.append(tuple(row))
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")
    return header, rows


def write_table(path, columns: Mapping) -> None:
    """Write named columns as CSV with 17-significant-digit floats."""
    names = list(columns)
    arrays = [np.asarray(columns[c]) for c in names]
    n = arrays[0].shape[0] if arrays else 0

    def cell(v):
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return str(v)

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow([cell(a[i]) for a in arrays])


# ---------------------------------------------------------------------------
# column roles and design schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnRoles:
    """Which CSV columns play which part in the model.

    ``factors`` maps a column name to its declared levels: None picks the
    observed levels in lexicographic order, a single string names just the
    reference level, and a sequence fixes the full order (reference first).
    ``standardize`` applies to every numeric covariate when True, or to the
    named subset when given as a collection.
    """

    time: str
    status: str
    numeric: tuple = ()
    factors: Mapping = field(default_factory=dict)
    standardize: object = True
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "numeric", tuple(self.numeric))
        object.__setattr__(self, "factors", dict(self.factors))
        used = [self.time, self.status, *self.numeric, *self.factors]
        if len(set(used)) != len(used):
            raise ConfigError("time, censoring, and covariate columns must be distinct")

    def covariates(self) -> tuple:
        return self.numeric + tuple(self.factors)

    def wants_standardize(self, name: str) -> bool:
        if self.standardize is True:
            return True
        if not self.standardize:
            return False
        return name in set(self.standardize)


@dataclass(frozen=True)
class DesignInfo:
    """Frozen design schema: column layout plus transformation constants."""

    columns: tuple
    intercept: bool
    numeric: tuple
    centers: tuple
    scales: tuple
    standardized: tuple
    factors: tuple  # ((name, (level, ...)), ...) with the reference level first

    @property
    def k(self) -> int:
        return len(self.columns)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "intercept": self.intercept,
            "numeric": list(self.numeric),
            "centers": [format(c, ".17g") for c in self.centers],
            "scales": [format(s, ".17g") for s in self.scales],
            "standardized": list(self.standardized),
            "factors": [[name, list(levels)] for name, levels in self.factors],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DesignInfo":
        try:
            return cls(
                columns=tuple(d["columns"]),
                intercept=bool(d["intercept"]),
                numeric=tuple(d["numeric"]),
                centers=tuple(float(c) for c in d["centers"]),
                scales=tuple(float(s) for s in d["scales"]),
                standardized=tuple(bool(b) for b in d["standardized"]),
                factors=tuple((name, tuple(levels)) for name, levels in d["factors"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed design schema: {exc}") from exc

    def transform(self, columns: Mapping, n_rows: int | None = None) -> np.ndarray:
        """Build design rows from raw columns, applying the stored constants.

        Numeric cells may arrive as strings or numbers; factor cells must
        match a fitted level exactly (UnseenLevel otherwise).  ``n_rows`` is
        only needed for an intercept-only design, where no covariate column
        pins the row count.
        """
        used = (*self.numeric, *(name for name, _ in self.factors))
        missing = [c for c in used if c not in columns]
        if missing:
            raise SchemaMismatch(f"missing covariate columns: {', '.join(missing)}")
        lengths = {len(columns[c]) for c in used}
        if len(lengths) > 1:
            raise SchemaMismatch("covariate columns have unequal lengths")
        if lengths:
            n = lengths.pop()
        elif n_rows is not None:
            n = int(n_rows)
        else:
            raise SchemaMismatch("an intercept-only design needs an explicit row count")
        blocks = []
        if self.intercept:
            blocks.append(np.ones((n, 1)))
        for name, center, scale in zip(self.numeric, self.centers, self.scales):
            vals = np.empty(n)
            for i, cell in enumerate(columns[name]):
                try:
                    vals[i] = float(cell)
                except (TypeError, ValueError):
                    raise ParseError(
                        f"non-numeric value {cell!r} in column {name!r} at data row {i + 1}",
                        row=i + 1,
                        column=name,
                    ) from None
            if not np.all(np.isfinite(vals)):
                raise ParseError(f"non-finite value in column {name!r}", column=name)
            blocks.append(((vals - center) / scale)[:, None])
        for name, levels in self.factors:
            known = set(levels)
            vals = [str(c).strip() for c in columns[name]]
            for i, v in enumerate(vals):
                if v not in known:
                    raise UnseenLevel(
                        f"level {v!r} of factor {name!r} (data row {i + 1}) "
                        f"was not seen during fitting"
                    )
            arr = np.asarray(vals)
            for level in levels[1:]:
                blocks.append((arr == level).astype(float)[:, None])
        X = np.hstack(blocks) if blocks else np.empty((n, 0))
        return np.ascontiguousarray(X)


def _fit_design(columns: Mapping, roles: ColumnRoles) -> DesignInfo:
    names = ["(Intercept)"] if roles.intercept else []
    centers, scales, standardized = [], [], []
    constant = []
    for name in roles.numeric:
        try:
            vals = np.asarray(columns[name], dtype=float)
        except (TypeError, ValueError):
            bad = next(
                (i, c)
                for i, c in enumerate(columns[name])
                if not _parses_as_float(c)
            )
            raise ParseError(
                f"non-numeric value {bad[1]!r} in column {name!r} at data row {bad[0] + 1}",
                row=bad[0] + 1,
                column=name,
            ) from None
        if not np.all(np.isfinite(vals)):
            raise ParseError(f"non-finite value in column {name!r}", column=name)
        if roles.wants_standardize(name):
            center = float(vals.mean())
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            if sd == 0.0:
                constant.append(name)
                sd = 1.0
            centers.append(center)
            scales.append(sd)
            standardized.append(True)
        else:
            if vals.size and np.all(vals == vals[0]):
                constant.append(name)
            centers.append(0.0)
            scales.append(1.0)
            standardized.append(False)
        names.append(name)
    factor_specs = []
    for name, declared in roles.factors.items():
        observed = sorted(set(str(v).strip() for v in columns[name]))
        if declared is None:
            levels = observed
        elif isinstance(declared, str):
            if declared not in observed:
                raise ConfigError(
                    f"reference level {declared!r} of factor {name!r} not present in the data"
                )
            levels = [declared] + [v for v in observed if v != declared]
        else:
            levels = [str(v) for v in declared]
            extra = [v for v in observed if v not in set(levels)]
            if extra:
                raise ConfigError(
                    f"factor {name!r} has undeclared levels: {', '.join(extra)}"
                )
        if len([v for v in levels if v in set(observed)]) < 2:
            raise ConfigError(f"factor {name!r} needs at least 2 observed levels")
        factor_specs.append((name, tuple(levels)))
        names.extend(f"{name}{level}" for level in levels[1:])
    for name in constant:
        warnings.warn(
            f"covariate {name!r} is constant; its coefficient is not identified "
            f"separately from the intercept",
            ConstantColumnWarning,
            stacklevel=3,
        )
    covs = roles.covariates()
    if covs and len(constant) == len(roles.numeric) and not roles.factors:
        warnings.warn(
            "no non-constant covariate in the design; the cure link is weakly identified",
            IdentifiabilityWarning,
            stacklevel=3,
        )
    return DesignInfo(
        columns=tuple(names),
        intercept=roles.intercept,
        numeric=roles.numeric,
        centers=tuple(centers),
        scales=tuple(scales),
        standardized=tuple(standardized),
        factors=tuple(factor_specs),
    )


def build_design_matrix(columns: Mapping, roles: ColumnRoles) -> tuple:
    """Fit the design schema on raw columns and return (X, DesignInfo)."""
    info = _fit_design(columns, roles)
    return info.transform(columns), info


# ---------------------------------------------------------------------------
# dataset loading
# ---------------------------------------------------------------------------


@dataclass
class LoadedData:
    """A parsed dataset with its design schema and provenance."""

    data: SurvivalDataset
    design: DesignInfo
    n_dropped: int
    row_ids: np.ndarray  # 1-based data-row numbers of the retained rows
    columns: dict  # raw covariate columns of the retained rows


def load_dataset(path, roles: ColumnRoles) -> LoadedData:
    """Read a CSV and assemble the survival dataset it describes.

    Rows missing any used value are dropped (the count is reported on the
    result); the censoring column must code exactly 0 or 1.
    """
    header, rows = read_table(path)
    used = (roles.time, roles.status, *roles.covariates())
    index = {}
    for c in used:
        if c not in header:
            raise ConfigError(f"{path}: column {c!r} not found (header: {', '.join(header)})")
        index[c] = header.index(c)

    kept_rows, row_ids, n_dropped = [], [], 0
    for i, row in enumerate(rows, start=1):
        if any(_is_missing(row[index[c]]) for c in used):
            n_dropped += 1
            continue
        kept_rows.append(row)
        row_ids.append(i)
    if not kept_rows:
        raise EmptyDataset(f"{path}: no complete rows after dropping {n_dropped}")

    def parse_float(cell, row_id, col):
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(
                f"{path}: non-numeric value {cell!r} in column {col!r} at data row {row_id}",
                row=row_id,
                column=col,
            ) from None
        if not np.isfinite(v):
            raise ParseError(
                f"{path}: non-finite value in column {col!r} at data row {row_id}",
                row=row_id,
                column=col,
            )
        return v

    n = len(kept_rows)
    y = np.empty(n)
    delta = np.empty(n, dtype=np.uint8)
    for j, (row, rid) in enumerate(zip(kept_rows, row_ids)):
        t = parse_float(row[index[roles.time]], rid, roles.time)
        if t <= 0.0:
            raise ParseError(
                f"{path}: time must be positive, got {t!r} at data row {rid}",
                row=rid,
                column=roles.time,
            )
        y[j] = t
        s = parse_float(row[index[roles.status]], rid, roles.status)
        if s not in (0.0, 1.0):
            raise ParseError(
                f"{path}: censoring value must be 0 or 1, got {s!r} at data row {rid}",
                row=rid,
                column=roles.status,
            )
        delta[j] = np.uint8(s)

    columns = {}
    for c in roles.numeric:
        columns[c] = np.array(
            [parse_float(row[index[c]], rid, c) for row, rid in zip(kept_rows, row_ids)]
        )
    for c in roles.factors:
        columns[c] = [row[index[c]].strip() for row in kept_rows]

    info = _fit_design(columns, roles)
    X = info.transform(columns, n_rows=n)
    ids = np.asarray(row_ids, dtype=np.intp)
    data = SurvivalDataset(y=y, delta=delta, X=X, column_names=info.columns, ids=ids)
    return LoadedData(
        data=data,
        design=info,
        n_dropped=n_dropped,
        row_ids=ids,
        columns=columns,
    )


# ---------------------------------------------------------------------------
# synthetic benchmarks
# ---------------------------------------------------------------------------


def _susceptible_times(theta: Theta, X: np.ndarray, u: np.ndarray, spec) -> np.ndarray:
    """Invert the susceptible survival at uniforms u by vectorized bisection."""
    m = X.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    for _ in range(200):
        su = susceptible_survival(hi, theta, X, spec)
        grow = su > u
        if not np.any(grow):
            break
        hi = np.where(grow, hi * 2.0, hi)
    else:
        raise GeneratorError("susceptible quantile bracket did not close; check theta")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        su = susceptible_survival(mid, theta, X, spec)
        right = su > u
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    return 0.5 * (lo + hi)


def simulate_dataset(spec, theta: Theta, X, censoring_rate: float, rng) -> dict:
    """Generate (y, delta, true_status) from the population model.

    Each subject is cured with probability p0(x); cured subjects receive an
    exponential censoring time with delta=0, susceptibles draw an event time
    from the susceptible distribution (inverse CDF by bisection) and are
    censored by the same exponential clock.  ``true_status`` is 1 for cured.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise GeneratorError("covariate matrix must be two-dimensional")
    try:
        validate_theta(theta, spec, k=X.shape[1])
    except DomainError as exc:
        raise GeneratorError(f"invalid generator parameters: {exc}") from exc
    if not censoring_rate >= 0.0:
        raise GeneratorError(f"censoring rate must be non-negative, got {censoring_rate!r}")

    n = X.shape[0]
    p0 = np.atleast_1d(cure_rate(theta, X))
    cured = rng.random(n) < p0
    if censoring_rate > 0.0:
        cens = rng.exponential(1.0 / censoring_rate, n)
    else:
        if np.any(cured):
            raise GeneratorError(
                "zero censoring rate is impossible with a positive cure fraction"
            )
        cens = np.full(n, np.inf)
    T = np.full(n, np.inf)
    idx = np.nonzero(~cured)[0]
    if idx.size:
        u = rng.uniform(size=idx.size)
        T[idx] = _susceptible_times(theta, X[idx], u, spec)
    y = np.where(cured, cens, np.minimum(T, cens))
    delta = ((~cured) & (T <= cens)).astype(np.uint8)
    return {"y": y, "delta": delta, "true_status": cured.astype(np.uint8)}

"""Data ingestion and the sorted, grouped block design."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .errors import (
    ConfigError, EmptyData, GroupTooSmall, InputError, MissingColumn, NonNumericCell, TooFewRows,
)


@dataclass
class Dataset:
    """Raw observations ``(U, X, Z, Y)``.

    ``z`` is ``None`` for a pure varying coefficient model.
    """

    u: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        self.x = x.reshape(-1, 1) if x.ndim == 1 else x
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            self.z = z.reshape(-1, 1) if z.ndim == 1 else z
            if self.z.shape[1] == 0:
                self.z = None
        n = self.u.shape[0]
        if n < 2:
            raise EmptyData(f"need at least 2 observations, got {n}")
        if self.x.ndim != 2 or self.x.shape[1] < 1:
            raise InputError("x must have at least one column")
        rows = {self.x.shape[0], self.y.shape[0]}
        if self.z is not None:
            rows.add(self.z.shape[0])
        if rows != {n}:
            raise InputError(f"inconsistent row counts: u has {n}, others {sorted(rows)}")
        arrays = [self.u, self.x, self.y] + ([self.z] if self.z is not None else [])
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InputError("non-finite values in data")
        if not self.x_names:
            self.x_names = tuple(f"x{j + 1}" for j in range(self.p))
        if self.z is not None and not self.z_names:
            self.z_names = tuple(f"z{j + 1}" for j in range(self.q))

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.z is None else self.z.shape[1]

    def take(self, index) -> "Dataset":
        return Dataset(
            u=self.u[index], x=self.x[index], y=self.y[index],
            z=None if self.z is None else self.z[index],
            x_names=self.x_names, z_names=self.z_names,
        )


def add_intercept(data: Dataset, name: str = "intercept") -> Dataset:
    """Prepend a constant-one column to the varying-part covariates."""
    x = np.column_stack([np.ones(data.n), data.x])
    return Dataset(data.u, x, data.y, data.z, (name,) + tuple(data.x_names), data.z_names)


@dataclass(frozen=True)
class CsvSchema:
    u: str = "u"
    y: str = "y"
    x: tuple[str, ...] = ()
    z: tuple[str, ...] = ()


def ingest_csv(stream: "TextIO | str", schema: CsvSchema | None = None) -> Dataset:
    """Parse a comma separated file with a header row into a :class:`Dataset`.

    When ``schema.x`` is empty every column that is not the index, response
    or a constant-part column is taken as a varying-part covariate. Data rows
    are numbered from 1 in error messages.
    """
    schema = schema or CsvSchema()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyData("file has no header row") from None
    x_cols = tuple(schema.x) or tuple(
        h for h in header if h not in {schema.u, schema.y, *schema.z}
    )
    wanted = [schema.u, *x_cols, *schema.z, schema.y]
    for col in wanted:
        if col not in header:
            raise MissingColumn(col)
    idx = [header.index(c) for c in wanted]

    rows = []
    for rownum, rec in enumerate(reader, start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        vals = []
        for col, j in zip(wanted, idx):
            cell = rec[j].strip() if j < len(rec) else ""
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(rownum, col, cell) from None
            if not np.isfinite(v):
                raise NonNumericCell(rownum, col, cell)
            vals.append(v)
        rows.append(vals)
    if not rows:
        raise EmptyData()
    arr = np.asarray(rows, dtype=float)
    p, q = len(x_cols), len(schema.z)
    return Dataset(
        u=arr[:, 0],
        x=arr[:, 1:1 + p],
        z=arr[:, 1 + p:1 + p + q] if q else None,
        y=arr[:, -1],
        x_names=x_cols,
        z_names=tuple(schema.z),
    )


def read_csv(path, schema: CsvSchema | None = None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return ingest_csv(fh, schema)


@dataclass(frozen=True, eq=False)
class GroupedDesign:
    """Observations sorted by ``u`` and cut into ``k`` consecutive groups of size ``I``.

    Block arrays are indexed ``[group, row-in-group, column]``.
    """

    group_size: int
    u: np.ndarray            # (k, I)
    x: np.ndarray            # (k, I, p)
    y: np.ndarray            # (k, I)
    z: np.ndarray | None     # (k, I, q)
    order: np.ndarray        # (k, I) original row of each sorted observation
    dropped_count: int
    x_names: tuple[str, ...] = field(default=())
    z_names: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        return self.u.shape[0]

    @property
    def n(self) -> int:
        """Number of observations actually used, ``k * I``."""
        return self.u.size

    @property
    def p(self) -> int:
        return self.x.shape[2]

    @property
    def q(self) -> int:
        return 0 if self.z is None else self.z.shape[2]

    @property
    def u_bar(self) -> np.ndarray:
        return self.u.mean(axis=1)

    def move_to_constant(self, target: int) -> "GroupedDesign":
        """Return the design with varying column ``target`` moved to the constant part.

        The moved column is appended after any existing constant-part columns.
        """
        target = check_target(target, self.p)
        keep = [j for j in range(self.p) if j != target]
        col = self.x[:, :, target:target + 1]
        z = col if self.z is None else np.concatenate([self.z, col], axis=2)
        return GroupedDesign(
            group_size=self.group_size, u=self.u, x=self.x[:, :, keep], y=self.y,
            z=z, order=self.order, dropped_count=self.dropped_count,
            x_names=tuple(self.x_names[j] for j in keep) if self.x_names else (),
            z_names=(tuple(self.z_names) + (self.x_names[target],)) if self.x_names else (),
        )

    def stacked(self):
        """Flattened sorted arrays ``(u, x, z, y)`` with the remainder removed."""
        n = self.n
        z = None if self.z is None else self.z.reshape(n, -1)
        return self.u.reshape(n), self.x.reshape(n, -1), z, self.y.reshape(n)


def check_target(target: int, p: int) -> int:
    """Normalise a 0-based (negative allowed) varying-column index."""
    t = int(target)
    if t < 0:
        t += p
    if not 0 <= t < p:
        raise ConfigError(f"target column {target} out of range for p={p}")
    return t


def sort_and_group(data: Dataset, group_size: int, min_size: int | None = None) -> GroupedDesign:
    """Sort by the index variable and partition into groups of ``group_size`` rows.

    Ties in ``u`` keep their input order. The ``n mod I`` rows with the
    largest ``u`` are dropped.

    Parameters
    ----------
    data : Dataset
    group_size : int
        Rows per group, ``I``.
    min_size : int, optional
        Smallest admissible group size; defaults to ``p`` (identifiability of
        the per-group least squares).
    """
    I = int(group_size)
    need = data.p if min_size is None else int(min_size)
    if I < max(need, 1):
        raise GroupTooSmall(I, max(need, 1), f"p={data.p}")
    if data.n < I:
        raise TooFewRows(data.n, I)
    order = np.argsort(data.u, kind="stable")
    k = data.n // I
    dropped = data.n - k * I
    order = order[:k * I]
    p = data.p
    return GroupedDesign(
        group_size=I,
        u=data.u[order].reshape(k, I),
        x=data.x[order].reshape(k, I, p),
        y=data.y[order].reshape(k, I),
        z=None if data.z is None else data.z[order].reshape(k, I, data.q),
        order=order.reshape(k, I),
        dropped_count=dropped,
        x_names=tuple(data.x_names),
        z_names=tuple(data.z_names),
    )


def group_design(u: Sequence[float], x, y, group_size: int, z=None) -> GroupedDesign:
    return sort_and_group(Dataset(u=u, x=x, y=y, z=z), group_size)

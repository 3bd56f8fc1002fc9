"""Sparse dataset ingestion, label binarization, seeded splits, and synthetic problems."""

from __future__ import annotations

import bz2
import gzip
import math
from dataclasses import dataclass

import numpy as np

from .rng import SeedStream


class ParseError(ValueError):
    """Malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ClassEmptyError(ValueError):
    """A dataset, split side, or stage prefix is missing one of the two classes."""


@dataclass(frozen=True)
class SparseVector:
    """Sparse feature row: strictly increasing 0-based indices, finite nonzero values."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    @staticmethod
    def from_pairs(indices, values, dim: int) -> "SparseVector":
        idx = np.asarray(indices, dtype=np.int64)
        val = np.asarray(values, dtype=np.float64)
        if idx.shape != val.shape:
            raise ValueError("indices/values length mismatch")
        if not np.all(np.isfinite(val)):
            raise ValueError("non-finite feature value")
        keep = val != 0.0
        idx, val = idx[keep], val[keep]
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
            raise ValueError("indices must be strictly increasing and nonnegative")
        if idx.size and idx[-1] >= dim:
            raise ValueError(f"index {idx[-1]} out of range for dim {dim}")
        return SparseVector(idx, val, dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dot_dense(self, w: np.ndarray) -> float:
        if self.indices.size == 0:
            return 0.0
        return float(np.dot(w[self.indices], self.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


class Dataset:
    """Immutable collection of sparse rows with {+1,-1} labels and class index lists.

    Construction validates the row/label/partition invariants; afterwards the
    object is read-only and safe to share across workers.
    """

    def __init__(self, rows: list[SparseVector], labels, dim: int | None = None):
        labels = np.asarray(labels, dtype=np.int64)
        if len(rows) != labels.size:
            raise ValueError("rows/labels length mismatch")
        if labels.size and not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be in {+1,-1}")
        if dim is None:
            dim = max((int(r.indices[-1]) + 1 for r in rows if r.nnz), default=0)
        for k, r in enumerate(rows):
            if r.nnz and int(r.indices[-1]) >= dim:
                raise ValueError(f"row {k} exceeds dim {dim}")
        self.rows = list(rows)
        self.labels = labels
        self.dim = int(dim)
        self.pos_idx = np.flatnonzero(labels == 1)
        self.neg_idx = np.flatnonzero(labels == -1)
        self._csr = None

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def n_pos(self) -> int:
        return int(self.pos_idx.size)

    @property
    def n_neg(self) -> int:
        return int(self.neg_idx.size)

    def require_both_classes(self, what: str = "dataset") -> None:
        if self.n_pos == 0 or self.n_neg == 0:
            raise ClassEmptyError(f"class-empty {what}: n+={self.n_pos}, n-={self.n_neg}")

    def take(self, row_ids) -> "Dataset":
        row_ids = np.asarray(row_ids, dtype=np.int64)
        return Dataset([self.rows[i] for i in row_ids], self.labels[row_ids], self.dim)

    def matrix(self):
        """CSR matrix of the rows, built lazily and cached (used for bulk scoring)."""
        if self._csr is None:
            from scipy import sparse

            indptr = np.zeros(self.n + 1, dtype=np.int64)
            for k, r in enumerate(self.rows):
                indptr[k + 1] = indptr[k] + r.nnz
            indices = np.concatenate([r.indices for r in self.rows]) if self.n else np.zeros(0, np.int64)
            values = np.concatenate([r.values for r in self.rows]) if self.n else np.zeros(0)
            self._csr = sparse.csr_matrix((values, indices, indptr), shape=(self.n, self.dim))
        return self._csr

    def max_row_norm(self) -> float:
        return max((r.norm() for r in self.rows), default=0.0)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0,1)")


def parse_libsvm(text) -> Dataset:
    """Parse LIBSVM text (`<label> <idx>:<val> ...`, 1-based ascending indices).

    Labels are kept as raw reals pending binarization; explicit zero values are
    dropped; dim is the largest feature index seen.  Raises ParseError naming
    the offending line.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    raw_labels: list[float] = []
    parsed: list[tuple[np.ndarray, np.ndarray]] = []
    dim = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        toks = line.split()
        try:
            lab = float(toks[0])
        except ValueError:
            raise ParseError(line_no, f"bad label token {toks[0]!r}") from None
        idx: list[int] = []
        val: list[float] = []
        prev = 0
        for tok in toks[1:]:
            try:
                i_s, v_s = tok.split(":", 1)
                i, v = int(i_s), float(v_s)
            except ValueError:
                raise ParseError(line_no, f"bad feature token {tok!r}") from None
            if i <= 0:
                raise ParseError(line_no, f"index {i} must be >= 1")
            if i <= prev:
                raise ParseError(line_no, f"index {i} not ascending after {prev}")
            if not math.isfinite(v):
                raise ParseError(line_no, f"non-finite value in {tok!r}")
            prev = i
            idx.append(i - 1)
            val.append(v)
        dim = max(dim, prev)
        raw_labels.append(lab)
        parsed.append((np.asarray(idx, np.int64), np.asarray(val)))
    rows = [SparseVector.from_pairs(i, v, dim) for i, v in parsed]
    ds = Dataset(rows, _raw_to_pm1(raw_labels), dim)
    ds.raw_labels = np.asarray(raw_labels)
    return ds


def _raw_to_pm1(raw_labels) -> np.ndarray:
    """Provisional labels for Dataset construction; real binarization is explicit."""
    raw = np.asarray(raw_labels, dtype=np.float64)
    if raw.size == 0:
        return np.zeros(0, np.int64)
    distinct = np.unique(raw)
    if set(distinct.tolist()) <= {-1.0, 1.0}:
        return raw.astype(np.int64)
    if distinct.size == 2:
        return np.where(raw == distinct[1], 1, -1).astype(np.int64)
    # >2 or 1 distinct: placeholder signs, callers must binarize explicitly
    return np.where(raw >= np.median(raw), 1, -1).astype(np.int64)


def load_libsvm(path) -> Dataset:
    """Read a LIBSVM file from disk; .gz and .bz2 are decompressed transparently."""
    path = str(path)
    if path.endswith(".gz"):
        with gzip.open(path, "rb") as f:
            return parse_libsvm(f.read())
    if path.endswith(".bz2"):
        with bz2.open(path, "rb") as f:
            return parse_libsvm(f.read())
    with open(path, "rb") as f:
        return parse_libsvm(f.read())


def serialize(ds: Dataset, raw_labels=None) -> str:
    """LIBSVM text for a Dataset (1-based indices, shortest round-trip floats)."""
    labels = ds.labels if raw_labels is None else np.asarray(raw_labels)
    lines = []
    for r, lab in zip(ds.rows, labels):
        lab_s = f"{int(lab):+d}" if float(lab) == int(lab) else repr(float(lab))
        toks = [lab_s] + [f"{int(i) + 1}:{_fmt(v)}" for i, v in zip(r.indices, r.values)]
        lines.append(" ".join(toks))
    return "\n".join(lines) + ("\n" if lines else "")


def _fmt(v: float) -> str:
    return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(float(v))


def binarize(raw_labels, seed: int = 0) -> np.ndarray:
    """Map raw labels to {+1,-1}.

    Two distinct values: larger -> +1.  More: the distinct values are shuffled
    with the seed and the first half become +1 (the larger half is negative on
    odd counts).  A single distinct value is an error.
    """
    raw = np.asarray(raw_labels, dtype=np.float64)
    distinct = np.unique(raw)
    if distinct.size < 2:
        raise ValueError("degenerate labels: need at least 2 distinct values")
    if distinct.size == 2:
        pos = {distinct[1]}
    else:
        gen = SeedStream(seed).generator("binarize")
        perm = gen.permutation(distinct)
        pos = set(perm[: distinct.size // 2].tolist())
    return np.asarray([1 if v in pos else -1 for v in raw], dtype=np.int64)


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded permutation split; first ceil(train_fraction*n) rows go to train."""
    if ds.n < 2:
        raise ValueError("need n >= 2 to split")
    ds.require_both_classes("input to split")
    gen = SeedStream(spec.seed).generator("split")
    perm = gen.permutation(ds.n)
    n_train = math.ceil(spec.train_fraction * ds.n)
    train = ds.take(perm[:n_train])
    test = ds.take(perm[n_train:])
    for part, name in ((train, "split (train side)"), (test, "split (test side)")):
        part.require_both_classes(name)
    return train, test


def stage_permutation(ds: Dataset, seed: int, stratify: bool = False) -> np.ndarray:
    """The single per-run permutation whose prefixes form the nested stage subsets.

    stratify=True permutes positives and negatives independently and interleaves
    them proportionally (minority class first), so every prefix of size >= 2
    holds both classes.
    """
    gen = SeedStream(seed).generator("stage-perm")
    if not stratify:
        return gen.permutation(ds.n)
    pos = gen.permutation(ds.pos_idx)
    neg = gen.permutation(ds.neg_idx)
    if ds.n_pos <= ds.n_neg:
        minority, majority, n_min = pos, neg, ds.n_pos
    else:
        minority, majority, n_min = neg, pos, ds.n_neg
    out = np.empty(ds.n, dtype=np.int64)
    mi = ma = 0
    # integer Bresenham interleave, ceil variant: minority lands at position 0
    acc = ds.n - 1
    for t in range(ds.n):
        acc += n_min
        if acc >= ds.n and mi < n_min:
            out[t] = minority[mi]
            mi += 1
            acc -= ds.n
        else:
            out[t] = majority[ma]
            ma += 1
    return out


def nested_prefix(ds: Dataset, m: int, seed: int, stratify: bool = False) -> Dataset:
    """First m rows of the fixed seeded permutation; prefixes are nested in m."""
    perm = stage_permutation(ds, seed, stratify)
    return prefix_view(ds, perm, m)


def prefix_view(ds: Dataset, perm: np.ndarray, m: int) -> Dataset:
    if not 1 <= m <= ds.n:
        raise ValueError(f"prefix size {m} outside [1, {ds.n}]")
    view = ds.take(perm[:m])
    view.require_both_classes("stage")
    return view


def generate_synthetic(
    n: int, d: int, separation: float, class_balance: float, seed: int
) -> Dataset:
    """Two unit-variance Gaussian clouds at +/-(separation/2) along a fixed direction.

    Labels follow the cloud; n_pos = round(class_balance * n) exactly.
    """
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    if not 0.0 < class_balance < 1.0:
        raise ValueError("class_balance must lie in (0,1)")
    u = np.ones(d) / math.sqrt(d)
    n_pos = int(round(class_balance * n))
    n_pos = min(max(n_pos, 1), n - 1)
    gen = SeedStream(seed).generator("synthetic")
    noise = gen.standard_normal((n, d))
    labels = np.concatenate([np.ones(n_pos, np.int64), -np.ones(n - n_pos, np.int64)])
    centers = labels[:, None] * (separation / 2.0) * u[None, :]
    dense = centers + noise
    rows = [SparseVector.from_pairs(np.flatnonzero(x), x[x != 0.0], d) for x in dense]
    return Dataset(rows, labels, d)


def scale_max_abs(ds: Dataset) -> Dataset:
    """Per-feature max-abs scaling (LIBSVM *_scale convention); zeros stay zero."""
    scale = np.zeros(ds.dim)
    for r in ds.rows:
        if r.nnz:
            np.maximum.at(scale, r.indices, np.abs(r.values))
    scale[scale == 0.0] = 1.0
    rows = [
        SparseVector(r.indices, r.values / scale[r.indices], ds.dim) if r.nnz else r
        for r in ds.rows
    ]
    return Dataset(rows, ds.labels, ds.dim)


def subsample(ds: Dataset, m: int, seed: int) -> Dataset:
    """Seeded subsample of m rows without replacement (used for oversized inputs)."""
    if m >= ds.n:
        return ds
    gen = SeedStream(seed).generator("subsample")
    return ds.take(gen.permutation(ds.n)[:m])


def with_binarized_labels(ds: Dataset, seed: int = 0) -> Dataset:
    """Rebuild a parsed Dataset with labels from `binarize` of its raw labels."""
    raw = getattr(ds, "raw_labels", None)
    if raw is None:
        raw = ds.labels
    return Dataset(ds.rows, binarize(raw, seed), ds.dim)

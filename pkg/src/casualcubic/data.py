"""Datasets (LIBSVM text), synthetic generators, trace CSV files and run configs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, TextIO, Union

import numpy as np
import scipy.sparse as sp
import yaml

from .oracle import IterRecord, OracleCounters, StepKind, Trace
from .problems import LogSumExpProblem

TRACE_COLUMNS = (
    "k", "f", "grad_norm", "step_kind", "reg_used", "backtracks",
    "f_evals", "grad_evals", "hvp_evals", "hess_evals", "factorizations", "elapsed_s",
)
_COUNTER_COLUMNS = ("f_evals", "grad_evals", "hvp_evals", "hess_evals", "factorizations")


class LibsvmParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class TraceSchemaError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Dataset:
    A: sp.csr_matrix
    labels: np.ndarray
    name: str = "dataset"
    source: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


# -- LIBSVM ------------------------------------------------------------------

def parse_libsvm(stream: Union[str, TextIO, Iterable[str]], dim: Optional[int] = None,
                 name: str = "libsvm", source: str = "") -> Dataset:
    """Parse ``<label> <idx>:<val> ...`` lines (1-based, strictly increasing indices).

    ``d`` is the largest index seen unless ``dim`` is given.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, data, indices, indptr = [], [], [], [0]
    max_idx = 0
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise LibsvmParseError(lineno, f"bad label {tokens[0]!r}") from None
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(lineno, f"malformed token {tok!r}")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"malformed token {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(lineno, f"feature index {idx} is not positive")
            if idx <= prev:
                raise LibsvmParseError(lineno, f"non-increasing index {idx} after {prev}")
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        max_idx = max(max_idx, prev)
        indptr.append(len(indices))
    if not labels:
        raise LibsvmParseError(0, "empty input")
    d = max_idx if dim is None else int(dim)
    if d < max_idx:
        raise ValueError(f"dim={dim} is smaller than the largest feature index {max_idx}")
    A = sp.csr_matrix((np.array(data), np.array(indices, dtype=np.int64), np.array(indptr)),
                      shape=(len(labels), max(d, 1)))
    return Dataset(A=A, labels=np.array(labels), name=name, source=source)


def serialize_libsvm(ds: Dataset) -> str:
    A = ds.A.tocsr()
    out = []
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        order = np.argsort(A.indices[lo:hi])
        parts = [f"{ds.labels[i]:.17g}"]
        parts += [f"{A.indices[lo + j] + 1}:{A.data[lo + j]:.17g}" for j in order]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def load_libsvm(path: str, dim: Optional[int] = None, normalize_rows: bool = False) -> Dataset:
    with open(path) as fh:
        ds = parse_libsvm(fh, dim=dim, name=os.path.splitext(os.path.basename(path))[0], source=path)
    if normalize_rows:
        ds.A = normalize_dataset_rows(ds.A)
    return ds


def normalize_dataset_rows(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=float)
    norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    return sp.csr_matrix(sp.diags(1.0 / norms) @ A)


# -- generators --------------------------------------------------------------

def gen_logsumexp(n: int, d: int, rho: float, seed=None) -> LogSumExpProblem:
    """Standard-normal ``A`` (n x d) and ``b``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    b = rng.standard_normal(n)
    prob = LogSumExpProblem(A, b, rho)
    prob.name = f"logsumexp({rho:g})"
    return prob


def gen_separable_logistic(n: int, d: int, margin: float = 0.1, seed=None) -> Dataset:
    """Linearly separable data with margin ``margin`` along a random unit direction.

    Labels come back in {0, 1}; the separating direction is kept in ``meta``.
    """
    if not margin > 0:
        raise ValueError("margin must be positive")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    A = rng.standard_normal((n, d))
    proj = A @ v
    y = np.where(proj >= 0, 1.0, -1.0)
    shift = np.maximum(0.0, margin - y * proj)
    A += (y * shift)[:, None] * v[None, :]
    return Dataset(A=sp.csr_matrix(A), labels=(y > 0).astype(float),
                   name="separable_logistic", source=f"synthetic(seed={seed})",
                   meta={"direction": v.tolist(), "margin": margin})


def gen_random_logistic(n: int, d: int, seed=None, flip: float = 0.1) -> Dataset:
    """Gaussian features, labels from a random linear model with a fraction flipped."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d)) / math.sqrt(d)
    w = rng.standard_normal(d)
    y = (A @ w > 0).astype(float)
    flips = rng.random(n) < flip
    y[flips] = 1.0 - y[flips]
    return Dataset(A=sp.csr_matrix(A), labels=y, name="random_logistic",
                   source=f"synthetic(seed={seed})")


# above this many entries the dense SVD is replaced by ARPACK
DENSE_NORM_MAX_ENTRIES = 4_000_000


def spectral_norm(A) -> float:
    """Largest singular value of ``A`` to machine precision."""
    A = sp.csr_matrix(A, dtype=float)
    if A.nnz == 0:
        return 0.0
    if A.shape[0] * A.shape[1] <= DENSE_NORM_MAX_ENTRIES or min(A.shape) < 3:
        return float(np.linalg.norm(A.toarray(), 2))
    from scipy.sparse.linalg import svds

    # fixed start vector keeps the result reproducible
    s = svds(A, k=1, tol=0, v0=np.ones(min(A.shape)), return_singular_vectors=False)
    return float(s[0])


def estimate_H_logistic(ds) -> float:
    """Loose Hessian-Lipschitz bound ``max_i |a_i| * |A|_2^2 / (6 sqrt 3)`` for logistic loss."""
    A = sp.csr_matrix(ds.A if hasattr(ds, "A") else ds, dtype=float)
    if A.shape[0] == 0:
        raise ValueError("empty dataset")
    row_norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
    return float(row_norms.max(initial=0.0) * spectral_norm(A) ** 2 / (6.0 * math.sqrt(3.0)))


# -- traces ------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def metadata_path(path: str) -> str:
    return path + ".meta.json"


def write_trace_csv(trace: Trace, path: str, metadata: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            c = r.counters
            writer.writerow([
                r.k, f"{r.f:.17g}", f"{r.grad_norm:.17g}", r.step_kind.value, f"{r.reg_used:.17g}",
                r.backtracks, c.f_evals, c.grad_evals, c.hvp_evals, c.hess_evals, c.factorizations,
                f"{r.elapsed_s:.17g}",
            ])
    if metadata:
        with open(metadata_path(path), "w") as fh:
            json.dump(trace.metadata, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def read_trace_csv(path: str) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceSchemaError(f"{path}: empty file") from None
        if tuple(header) != TRACE_COLUMNS:
            raise TraceSchemaError(f"{path}: unexpected header {header}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise TraceSchemaError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
            vals = dict(zip(TRACE_COLUMNS, row))
            try:
                counters = OracleCounters(**{k: int(vals[k]) for k in _COUNTER_COLUMNS})
                records.append(IterRecord(
                    k=int(vals["k"]), f=float(vals["f"]), grad_norm=float(vals["grad_norm"]),
                    step_kind=StepKind(vals["step_kind"]), reg_used=float(vals["reg_used"]),
                    backtracks=int(vals["backtracks"]), counters=counters,
                    elapsed_s=float(vals["elapsed_s"]),
                ))
            except ValueError as exc:
                raise TraceSchemaError(f"{path}:{lineno}: {exc}") from None
    meta = {}
    if os.path.exists(metadata_path(path)):
        with open(metadata_path(path)) as fh:
            meta = json.load(fh)
    return Trace(records=records, metadata=meta)


# -- run configuration -------------------------------------------------------

@dataclass
class RunConfig:
    problem: str = "logsumexp"
    dataset_path: Optional[str] = None
    n: Optional[int] = None
    d: Optional[int] = None
    rho: Optional[float] = None
    l2: float = 0.0
    method: str = "cacuadgd"
    H0: Optional[float] = None
    alpha: float = 0.7
    L_hat: Union[None, float, list] = None
    H_hat: Union[None, float, list] = None
    lr: Optional[float] = None
    batch_frac: float = 0.1
    max_iters: Optional[int] = 1000
    max_seconds: Optional[float] = None
    grad_tol: Optional[float] = 1e-9
    seed: Union[int, list] = 0
    out: Optional[str] = None
    # extensions beyond the core key set
    sigma_g: float = 0.0
    normalize_rows: bool = False

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat mapping of keys to values")
        unknown = sorted(set(data) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for k, v in data.items():
            if isinstance(v, dict):
                raise ConfigError(f"config key {k!r} must not be nested")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("max_iters", "max_seconds", "grad_tol"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_iters is None and self.max_seconds is None and self.grad_tol is None:
            raise ConfigError("at least one stopping rule is required")
        if not 0 < self.batch_frac <= 1:
            raise ConfigError("batch_frac must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}


def load_config(path: str) -> RunConfig:
    """Read a flat YAML (or JSON) mapping; unknown keys are rejected."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return RunConfig.from_mapping(data)

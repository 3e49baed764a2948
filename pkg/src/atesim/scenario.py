"""Scenario construction and simulation.

A scenario is a fully known discrete causal model (P(Z), P(X|Z), P(Y|X,Z))
derived from a real tabular dataset by binary-coding confounders, forming
their joint strata, and keeping only strata in which both treatment levels
were observed. Because the scenario is an explicit probability table, the
true ATE is computable exactly by back-door standardization, and simulated
datasets are draws from a distribution whose truth is known.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import IngestError, ScenarioError
from .rng import substream

SCENARIO_FORMAT_VERSION = 1

_CONFOUNDER_KINDS = ("binary", "continuous-median-split", "categorical-collapse")
_FILTER_OPS = ("==", "!=", "in", "not-in", ">", ">=", "<", "<=")


# ---------------------------------------------------------------------------
# Configuration types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfounderSpec:
    """How one raw column becomes a binary confounder.

    kind:
      binary                   column already holds {0,1} values
      continuous-median-split  1 iff value > sample median (ties map to 0)
      categorical-collapse     collapse_map sends each category to 0 or 1
    """

    name: str
    kind: str
    collapse_map: dict | None = None

    def __post_init__(self):
        if self.kind not in _CONFOUNDER_KINDS:
            raise IngestError(f"unknown confounder kind {self.kind!r} for {self.name!r}")
        if self.kind == "categorical-collapse" and not self.collapse_map:
            raise IngestError(f"confounder {self.name!r} needs a collapse_map")
        if self.collapse_map is not None:
            bad = {v for v in self.collapse_map.values() if v not in (0, 1)}
            if bad:
                raise IngestError(f"collapse_map for {self.name!r} maps to {bad}, not {{0,1}}")


@dataclass(frozen=True)
class RowFilter:
    """A (column, predicate) pair applied before any coding happens."""

    column: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _FILTER_OPS:
            raise IngestError(f"unknown row filter op {self.op!r}")

    def keep(self, raw: str) -> bool:
        if self.op == "==":
            return raw == str(self.value)
        if self.op == "!=":
            return raw != str(self.value)
        if self.op == "in":
            return raw in {str(v) for v in self.value}
        if self.op == "not-in":
            return raw not in {str(v) for v in self.value}
        try:
            x = float(raw)
        except ValueError as exc:
            raise IngestError(f"non-numeric value {raw!r} in filtered column {self.column!r}") from exc
        t = float(self.value)  # type: ignore[arg-type]
        if self.op == ">":
            return x > t
        if self.op == ">=":
            return x >= t
        if self.op == "<":
            return x < t
        return x <= t


@dataclass(frozen=True)
class IngestionConfig:
    source: str
    outcome_column: str
    treatment_column: str
    confounders: tuple
    row_filters: tuple = ()
    # Optional declared codings: raw value (as text) that maps to 1.
    # When absent the column must already hold {0,1}.
    treatment_positive: str | None = None
    outcome_positive: str | None = None

    @staticmethod
    def from_json(path: str) -> "IngestionConfig":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            confs = tuple(
                ConfounderSpec(
                    name=c["name"],
                    kind=c["kind"],
                    collapse_map={str(k): int(v) for k, v in c["collapse_map"].items()}
                    if c.get("collapse_map")
                    else None,
                )
                for c in doc["confounders"]
            )
            filters = tuple(
                RowFilter(column=f["column"], op=f["op"], value=f["value"])
                for f in doc.get("row_filters", [])
            )
            return IngestionConfig(
                source=doc["source"],
                outcome_column=doc["outcome_column"],
                treatment_column=doc["treatment_column"],
                confounders=confs,
                row_filters=filters,
                treatment_positive=doc.get("treatment_positive"),
                outcome_positive=doc.get("outcome_positive"),
            )
        except KeyError as exc:
            raise IngestError(f"ingestion config {path} missing field {exc}") from exc


# ---------------------------------------------------------------------------
# Prepared table and scenario
# ---------------------------------------------------------------------------

@dataclass
class PreparedTable:
    """Binary-coded rows (z-vector, x, y) plus a build log."""

    z: np.ndarray  # (n, d) uint8
    x: np.ndarray  # (n,) uint8
    y: np.ndarray  # (n,) uint8
    confounder_names: list
    provenance: str = ""

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


@dataclass
class Scenario:
    """Discrete generating model over the retained confounder strata."""

    confounder_names: list
    strata: np.ndarray  # (K, d) uint8, distinct rows
    p_z: np.ndarray  # (K,)
    p_x_given_z: np.ndarray  # (K,)
    p_y_given_xz: np.ndarray  # (K, 2); [k, x] = P(Y=1 | X=x, z_k)
    provenance: str = ""
    retained_n: int | None = None

    @property
    def k(self) -> int:
        return int(self.strata.shape[0])

    @property
    def d(self) -> int:
        return int(self.strata.shape[1])

    def validate(self) -> None:
        if self.strata.ndim != 2:
            raise ScenarioError("strata must be a K x d matrix")
        k = self.k
        if self.p_z.shape != (k,) or self.p_x_given_z.shape != (k,) or self.p_y_given_xz.shape != (k, 2):
            raise ScenarioError("probability arrays do not match strata count")
        if np.any(self.p_z < 0) or abs(float(self.p_z.sum()) - 1.0) > 1e-12:
            raise ScenarioError("p_z entries must be >= 0 and sum to 1 within 1e-12")
        if np.any(self.p_x_given_z <= 0) or np.any(self.p_x_given_z >= 1):
            raise ScenarioError("positivity violated: need 0 < P(X=1|z) < 1 for every stratum")
        if np.any(self.p_y_given_xz < 0) or np.any(self.p_y_given_xz > 1):
            raise ScenarioError("outcome probabilities must lie in [0,1]")
        if len({tuple(row) for row in self.strata.tolist()}) != k:
            raise ScenarioError("strata rows must be distinct")


@dataclass
class SimulatedDataset:
    """One simulated sample; z rows are the redundant stratum decomposition."""

    n: int
    stratum_index: np.ndarray  # (n,) int32
    z: np.ndarray  # (n, d) uint8
    x: np.ndarray  # (n,) uint8
    y: np.ndarray  # (n,) uint8
    seed: int

    def take(self, indices: np.ndarray) -> "SimulatedDataset":
        """Row-subset view used by the bootstrap (resampling with replacement)."""
        idx = np.asarray(indices)
        return SimulatedDataset(
            n=int(idx.shape[0]),
            stratum_index=self.stratum_index[idx],
            z=self.z[idx],
            x=self.x[idx],
            y=self.y[idx],
            seed=self.seed,
        )

    def sha256(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.stratum_index, self.z, self.x, self.y):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _read_rows(path: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: no header row")
        rows = list(reader)
    return reader.fieldnames, rows


def _code_binary_column(values, column, positive=None):
    out = np.empty(len(values), dtype=np.uint8)
    if positive is not None:
        pos = str(positive)
        for i, v in enumerate(values):
            out[i] = 1 if v == pos else 0
        return out
    for i, v in enumerate(values):
        try:
            f = float(v)
        except ValueError as exc:
            raise IngestError(f"column {column!r}: non-numeric value {v!r} in a binary column") from exc
        if f not in (0.0, 1.0):
            raise IngestError(f"column {column!r}: value {v!r} is not binary after declared coding")
        out[i] = int(f)
    return out


def ingest(config: IngestionConfig) -> PreparedTable:
    """Read a delimited text file and reduce it to binary (z, x, y) rows.

    Row filters run first; medians for continuous-median-split confounders are
    computed on the filtered rows; ties (value == median) map to 0.
    """
    header, rows = _read_rows(config.source)
    needed = [config.outcome_column, config.treatment_column]
    needed += [c.name for c in config.confounders]
    needed += [f.column for f in config.row_filters]
    for col in needed:
        if col not in header:
            raise IngestError(f"{config.source}: missing column {col!r}")

    log = [f"source: {config.source}", f"rows read: {len(rows)}"]
    for f in config.row_filters:
        before = len(rows)
        rows = [r for r in rows if f.keep(r[f.column])]
        log.append(f"filter {f.column} {f.op} {f.value!r}: {before} -> {len(rows)} rows")
    if not rows:
        raise IngestError("all rows removed by row filters")

    n = len(rows)
    x = _code_binary_column([r[config.treatment_column] for r in rows],
                            config.treatment_column, config.treatment_positive)
    y = _code_binary_column([r[config.outcome_column] for r in rows],
                            config.outcome_column, config.outcome_positive)

    z = np.zeros((n, len(config.confounders)), dtype=np.uint8)
    for j, spec in enumerate(config.confounders):
        raw = [r[spec.name] for r in rows]
        if spec.kind == "binary":
            z[:, j] = _code_binary_column(raw, spec.name)
        elif spec.kind == "continuous-median-split":
            try:
                vals = np.array([float(v) for v in raw])
            except ValueError as exc:
                raise IngestError(f"column {spec.name!r}: non-numeric value in a continuous column") from exc
            med = float(np.median(vals))
            z[:, j] = (vals > med).astype(np.uint8)
            log.append(f"confounder {spec.name}: median split at {med!r} (ties -> 0)")
        else:  # categorical-collapse
            cmap = spec.collapse_map
            coded = np.empty(n, dtype=np.uint8)
            for i, v in enumerate(raw):
                if v not in cmap:
                    raise IngestError(f"column {spec.name!r}: category {v!r} not in collapse_map")
                coded[i] = cmap[v]
            z[:, j] = coded
            log.append(f"confounder {spec.name}: collapsed via {dict(sorted(cmap.items()))}")
    log.append(f"prepared rows: {n}, confounders: {[c.name for c in config.confounders]}")
    return PreparedTable(z=z, x=x, y=y,
                         confounder_names=[c.name for c in config.confounders],
                         provenance="\n".join(log))


# ---------------------------------------------------------------------------
# Builder / truth / simulation
# ---------------------------------------------------------------------------

def build_scenario(table: PreparedTable) -> Scenario:
    """Form joint strata and keep those observed at both treatment levels.

    Retained-strata probabilities are unsmoothed empirical frequencies over
    the retained rows. Strata are ordered lexicographically by z-vector.
    """
    if table.n == 0:
        raise ScenarioError("prepared table is empty")
    strata, inverse = np.unique(table.z, axis=0, return_inverse=True)
    k_all = strata.shape[0]
    n1 = np.bincount(inverse, weights=table.x.astype(float), minlength=k_all)
    n_tot = np.bincount(inverse, minlength=k_all).astype(float)
    n0 = n_tot - n1
    keep = (n1 > 0) & (n0 > 0)
    if not np.any(keep):
        raise ScenarioError("every stratum lacks one treatment level; nothing to retain")

    kept_ids = np.flatnonzero(keep)
    remap = -np.ones(k_all, dtype=np.int64)
    remap[kept_ids] = np.arange(kept_ids.size)
    row_keep = keep[inverse]
    ridx = remap[inverse[row_keep]]
    x = table.x[row_keep].astype(float)
    y = table.y[row_keep].astype(float)
    n_ret = int(row_keep.sum())
    k = kept_ids.size

    cnt = np.bincount(ridx, minlength=k).astype(float)
    cnt_x1 = np.bincount(ridx, weights=x, minlength=k)
    cnt_x0 = cnt - cnt_x1
    y_x1 = np.bincount(ridx, weights=x * y, minlength=k)
    y_x0 = np.bincount(ridx, weights=(1.0 - x) * y, minlength=k)

    p_y = np.column_stack([y_x0 / cnt_x0, y_x1 / cnt_x1])
    dropped_rows = table.n - n_ret
    prov = table.provenance + "\n" if table.provenance else ""
    prov += (
        f"strata observed: {k_all}; retained (both treatment levels present): {k}\n"
        f"rows retained: {n_ret} of {table.n} ({dropped_rows} in excluded strata)"
    )
    s = Scenario(
        confounder_names=list(table.confounder_names),
        strata=strata[kept_ids],
        p_z=cnt / n_ret,
        p_x_given_z=cnt_x1 / cnt,
        p_y_given_xz=p_y,
        provenance=prov,
        retained_n=n_ret,
    )
    s.validate()
    return s


def true_ate(s: Scenario) -> float:
    """Back-door adjusted ATE: sum_z [P(Y=1|X=1,z) - P(Y=1|X=0,z)] P(z)."""
    return float(np.sum(s.p_z * (s.p_y_given_xz[:, 1] - s.p_y_given_xz[:, 0])))


def simulate(s: Scenario, n: int, seed: int) -> SimulatedDataset:
    """Draw n rows: stratum ~ p_z, then x ~ Bern(p_x|z), then y ~ Bern(p_y|x,z).

    Row i consumes the i-th row of one (n, 3) uniform block from the Philox
    substream keyed by the seed, so identical (scenario, n, seed) reproduce
    bit-identical output and rows are independent.
    """
    if n < 1:
        raise ScenarioError("n must be >= 1")
    rng = substream(seed, "simulate")
    u = rng.random((n, 3))
    edges = np.cumsum(s.p_z)
    edges[-1] = 1.0 + 1e-12
    stratum = np.searchsorted(edges, u[:, 0], side="right").astype(np.int32)
    x = (u[:, 1] < s.p_x_given_z[stratum]).astype(np.uint8)
    y = (u[:, 2] < s.p_y_given_xz[stratum, x]).astype(np.uint8)
    return SimulatedDataset(
        n=n,
        stratum_index=stratum,
        z=s.strata[stratum],
        x=x,
        y=y,
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_scenario(s: Scenario, path: str) -> None:
    """Write the canonical scenario file (versioned JSON, full precision)."""
    s.validate()
    doc = {
        "format_version": SCENARIO_FORMAT_VERSION,
        "kind": "scenario",
        "confounder_names": list(s.confounder_names),
        "strata": [[int(v) for v in row] for row in s.strata.tolist()],
        "p_z": [float(v) for v in s.p_z],
        "p_x_given_z": [float(v) for v in s.p_x_given_z],
        "p_y_given_xz": [[float(a), float(b)] for a, b in s.p_y_given_xz.tolist()],
        "retained_n": s.retained_n,
        "provenance": s.provenance,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("kind") != "scenario":
        raise ScenarioError(f"{path}: not a scenario file")
    if doc.get("format_version") != SCENARIO_FORMAT_VERSION:
        raise ScenarioError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    s = Scenario(
        confounder_names=list(doc["confounder_names"]),
        strata=np.array(doc["strata"], dtype=np.uint8),
        p_z=np.array(doc["p_z"], dtype=float),
        p_x_given_z=np.array(doc["p_x_given_z"], dtype=float),
        p_y_given_xz=np.array(doc["p_y_given_xz"], dtype=float),
        provenance=doc.get("provenance", ""),
        retained_n=doc.get("retained_n"),
    )
    s.validate()
    return s


def save_dataset(d: SimulatedDataset, path: str, confounder_names=None) -> None:
    """Write a simulated dataset as CSV: stratum, z_*, x, y."""
    names = confounder_names or [f"z{j}" for j in range(d.z.shape[1])]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stratum"] + [f"z_{n}" for n in names] + ["x", "y"])
        for i in range(d.n):
            w.writerow([int(d.stratum_index[i])] + [int(v) for v in d.z[i]] +
                       [int(d.x[i]), int(d.y[i])])


def load_dataset(path: str) -> SimulatedDataset:
    """Read a dataset CSV written by save_dataset (or matching its layout)."""
    header, rows = _read_rows(path)
    zcols = [h for h in header if h.startswith("z_")]
    for col in ("x", "y"):
        if col not in header:
            raise IngestError(f"{path}: missing column {col!r}")
    n = len(rows)
    z = np.array([[int(float(r[c])) for c in zcols] for r in rows], dtype=np.uint8)
    if z.size == 0:
        z = z.reshape(n, 0)
    x = np.array([int(float(r["x"])) for r in rows], dtype=np.uint8)
    y = np.array([int(float(r["y"])) for r in rows], dtype=np.uint8)
    if "stratum" in header:
        stratum = np.array([int(float(r["stratum"])) for r in rows], dtype=np.int32)
    else:
        stratum = np.zeros(n, dtype=np.int32)
    return SimulatedDataset(n=n, stratum_index=stratum, z=z, x=x, y=y, seed=0)


def randomized_transform(s: Scenario) -> Scenario:
    """Replace p_x_given_z by its p_z-weighted mean (same true ATE, no confounding)."""
    const = float(np.sum(s.p_z * s.p_x_given_z))
    return replace(
        s,
        p_x_given_z=np.full(s.k, const),
        provenance=s.provenance + "\nrandomized transform: constant propensity "
        + repr(const),
    )

"""Experiment runner: one configuration in, one CSV row plus a JSON sidecar out.

CSV files are append-only. Each appended row gets a sidecar
``<csv stem>.row<N>.json`` holding the full configuration, the target itself
and the row, so :func:`replay` can recompute the row later. Sidecars are
created exclusively and never overwritten.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .exceptions import TargetFileError
from .forward import kl_init_gap
from .metrics import empirical_distribution, tv_distance
from .samplers import (
    SAMPLERS,
    BatchReport,
    Observer,
    SamplerSchedule,
    default_schedule,
    run_chains,
    score_call_bound,
)
from .score import ExactScoreOracle, PerturbedScoreOracle, ScoreOracle
from .state_space import SparseDistribution, load_target
from .validation import check_epsilon, check_optional_positive, check_positive_int

CSV_HEADER = ("sampler", "d", "K", "eps", "chains", "tv", "kl_init", "mean_calls", "bound_calls", "seconds", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``T``, ``delta``, ``h`` and ``eta`` override the default schedule for
    ``epsilon``; when ``T`` or ``delta`` is overridden without ``eta``/``h``,
    those are the default values shrunk to divide ``T - delta``.
    """

    target: str
    sampler: str
    epsilon: float
    chains: int
    seed: int = 0
    T: float | None = None
    delta: float | None = None
    h: float | None = None
    eta: float | None = None
    sigma: float = 0.0
    batch_size: int = 1 << 16

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        check_epsilon(self.epsilon)
        check_positive_int(self.chains, "chains")
        check_positive_int(self.batch_size, "batch_size")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        for name in ("T", "delta", "h", "eta"):
            check_optional_positive(getattr(self, name), name)
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class ResultRow:
    sampler: str
    d: int
    K: int
    eps: float
    chains: int
    tv: float
    kl_init: float
    mean_calls: float
    bound_calls: float
    seconds: float
    seed: int

    def as_csv(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in astuple_ordered(self)]

    @classmethod
    def from_csv(cls, values) -> "ResultRow":
        kinds = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for name, raw in zip(CSV_HEADER, values):
            kind = kinds[name]
            parsed[name] = raw if kind == "str" else (int(raw) if kind == "int" else float(raw))
        return cls(**parsed)

    def same_result(self, other: "ResultRow") -> bool:
        """Equality on every field except wallclock ``seconds``."""
        return replace(self, seconds=0.0) == replace(other, seconds=0.0)


def astuple_ordered(row: ResultRow) -> tuple:
    return tuple(getattr(row, name) for name in CSV_HEADER)


def build_schedule(cfg: ExperimentConfig, spec) -> SamplerSchedule:
    base = default_schedule(cfg.epsilon, spec, seed=cfg.seed)
    T = cfg.T if cfg.T is not None else base.T
    delta = cfg.delta if cfg.delta is not None else base.delta
    span = T - delta
    if span <= 0:
        raise ValueError(f"need delta < T, got delta={delta}, T={T}")
    eta = cfg.eta if cfg.eta is not None else span / max(1, math.ceil(span / base.eta - 1e-9))
    h = cfg.h if cfg.h is not None else span / max(1, math.ceil(span / base.h - 1e-9))
    return SamplerSchedule(T=T, delta=delta, eta=eta, h=h, seed=cfg.seed)


def build_oracle(cfg: ExperimentConfig, q0: SparseDistribution, T: float) -> ScoreOracle:
    exact = ExactScoreOracle(q0, T)
    if cfg.sigma == 0:
        return exact
    return PerturbedScoreOracle(exact, cfg.sigma, seed=cfg.seed)


@dataclass
class ExperimentResult:
    row: ResultRow
    report: BatchReport
    schedule: SamplerSchedule
    sidecar: Path | None = None


def run_experiment(
    cfg: ExperimentConfig,
    out=None,
    *,
    target: SparseDistribution | None = None,
    observer: Observer | None = None,
) -> ExperimentResult:
    """Run ``cfg`` and, if ``out`` is given, append its row and write a sidecar.

    ``target`` bypasses reading ``cfg.target`` (used by :func:`replay`).
    """
    q0 = target if target is not None else load_target(cfg.target)
    spec = q0.spec
    spec.check_dense()
    sched = build_schedule(cfg, spec)
    oracle = build_oracle(cfg, q0, sched.T)
    start = time.perf_counter()
    report = run_chains(
        cfg.sampler, oracle, sched, cfg.chains, seed=cfg.seed,
        batch_size=cfg.batch_size, observer=observer,
    )
    seconds = time.perf_counter() - start
    tv = tv_distance(empirical_distribution(report.final, spec), q0.densify())
    kl_init, _ = kl_init_gap(q0, sched.T)
    row = ResultRow(
        sampler=cfg.sampler,
        d=spec.d,
        K=spec.K,
        eps=float(cfg.epsilon),
        chains=cfg.chains,
        tv=tv,
        kl_init=kl_init,
        mean_calls=report.mean_score_calls,
        bound_calls=score_call_bound(spec, cfg.epsilon),
        seconds=seconds,
        seed=int(cfg.seed),
    )
    sidecar = None
    if out is not None:
        sidecar = append_row(out, row, cfg, q0, sched)
    return ExperimentResult(row, report, sched, sidecar)


def _data_rows(path: Path) -> int:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return 0
    if tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path} has header {rows[0]}, expected {list(CSV_HEADER)}")
    return len(rows) - 1


def sidecar_path(csv_path, index: int) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(f"{csv_path.stem}.row{index}.json")


def append_row(
    csv_path,
    row: ResultRow,
    cfg: ExperimentConfig,
    q0: SparseDistribution,
    sched: SamplerSchedule,
) -> Path:
    """Append ``row`` to ``csv_path`` (creating it with a header) and write its sidecar."""
    csv_path = Path(csv_path)
    exists = csv_path.exists() and csv_path.stat().st_size > 0
    index = _data_rows(csv_path) if exists else 0
    side = sidecar_path(csv_path, index)
    target_json = q0.to_json()
    payload = {
        "config": cfg.to_dict(),
        "schedule": {"T": sched.T, "delta": sched.delta, "eta": sched.eta, "h": sched.h},
        "target": target_json,
        "target_sha256": hashlib.sha256(json.dumps(target_json, sort_keys=True).encode()).hexdigest(),
        "csv": str(csv_path),
        "row_index": index,
        "row": dict(zip(CSV_HEADER, row.as_csv())),
    }
    # 'x' refuses to clobber an existing sidecar
    with side.open("x") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    with csv_path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(CSV_HEADER)
        writer.writerow(row.as_csv())
        fh.flush()
        os.fsync(fh.fileno())
    return side


def read_rows(csv_path) -> list[ResultRow]:
    with Path(csv_path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{csv_path} is not a results file")
    return [ResultRow.from_csv(r) for r in rows[1:]]


@dataclass(frozen=True)
class ReplayOutcome:
    stored: ResultRow
    replayed: ResultRow

    @property
    def matches(self) -> bool:
        return self.stored.same_result(self.replayed)


def replay(sidecar) -> ReplayOutcome:
    """Re-run the configuration stored in ``sidecar`` and compare with its stored row.

    The target embedded in the sidecar is used, so the replay does not depend
    on the original target file still existing.
    """
    payload = json.loads(Path(sidecar).read_text())
    cfg = ExperimentConfig.from_dict(payload["config"])
    try:
        q0 = SparseDistribution.from_json(payload["target"])
    except TargetFileError as exc:
        raise TargetFileError(f"{sidecar}: embedded target invalid ({exc})") from exc
    stored = ResultRow.from_csv([payload["row"][k] for k in CSV_HEADER])
    replayed = run_experiment(cfg, target=q0).row
    return ReplayOutcome(stored, replayed)

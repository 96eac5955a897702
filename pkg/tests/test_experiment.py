import csv
import json

import numpy as np
import pytest

from maskdiff.exceptions import DenseCapError, ScheduleError, TargetFileError
from maskdiff.experiment import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    build_schedule,
    read_rows,
    replay,
    run_experiment,
    sidecar_path,
)
from maskdiff.samplers import SAMPLERS
from maskdiff.state_space import SpaceSpec, SparseDistribution, save_target


@pytest.fixture
def target_file(tmp_path, target_23):
    path = tmp_path / "target.json"
    save_target(target_23, path)
    return str(path)


@pytest.mark.parametrize("sampler", SAMPLERS)
def test_single_chain_smoke_and_replay(tmp_path, target_file, sampler):
    out = tmp_path / "res.csv"
    cfg = ExperimentConfig(target=target_file, sampler=sampler, epsilon=0.5, chains=1, seed=3)
    res = run_experiment(cfg, out)
    row = res.row
    assert 0 <= row.tv <= 1 and row.chains == 1 and row.d == 2 and row.K == 3
    assert res.sidecar == sidecar_path(out, 0)
    assert replay(res.sidecar).matches


def test_csv_header_append_only_and_sidecars(tmp_path, target_file):
    out = tmp_path / "res.csv"
    cfg = ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=200, seed=1)
    first = run_experiment(cfg, out)
    second = run_experiment(cfg, out)
    with out.open() as fh:
        lines = list(csv.reader(fh))
    assert lines[0] == list(CSV_HEADER)
    assert ",".join(lines[0]) == "sampler,d,K,eps,chains,tv,kl_init,mean_calls,bound_calls,seconds,seed"
    assert len(lines) == 3
    assert first.sidecar != second.sidecar and first.sidecar.exists() and second.sidecar.exists()
    rows = read_rows(out)
    assert rows[0].same_result(rows[1])
    assert rows[0].same_result(first.row)
    # refuses to clobber an orphan sidecar at the next index
    sidecar_path(out, 2).write_text("{}")
    with pytest.raises(FileExistsError):
        run_experiment(cfg, out)
    assert len(read_rows(out)) == 2


def test_replay_is_bit_for_bit(tmp_path, target_file):
    out = tmp_path / "res.csv"
    cfg = ExperimentConfig(target=target_file, sampler="matu", epsilon=0.4, chains=3000, seed=7, sigma=0.1, batch_size=1000)
    res = run_experiment(cfg, out)
    outcome = replay(res.sidecar)
    assert outcome.matches
    assert outcome.replayed.tv == res.row.tv
    assert outcome.replayed.mean_calls == res.row.mean_calls
    # the sidecar carries the target, so the file may go away
    (tmp_path / "target.json").unlink()
    assert replay(res.sidecar).matches


def test_row_csv_roundtrip_preserves_floats():
    row = ResultRow("matu", 2, 3, 0.1, 10, 1 / 3, 1e-17, 12.345678901234567, 99.0, 0.5, 2**63 + 5)
    back = ResultRow.from_csv(row.as_csv())
    assert back == row


def test_result_tv_and_bound(tmp_path, target_file):
    res = run_experiment(ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=5000, seed=2))
    assert res.row.tv <= 2 * 0.5
    assert res.row.mean_calls <= res.row.bound_calls
    assert res.row.kl_init > 0


def test_config_validation(target_file):
    with pytest.raises(ValueError):
        ExperimentConfig(target=target_file, sampler="tau", epsilon=0.5, chains=1)
    with pytest.raises(ValueError):
        ExperimentConfig(target=target_file, sampler="matu", epsilon=1.0, chains=1)
    with pytest.raises(ValueError):
        ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=0)
    with pytest.raises(ValueError):
        ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=1, seed=-1)
    with pytest.raises(ValueError):
        ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=1, h=-0.1)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"target": target_file, "sampler": "matu", "epsilon": 0.5, "chains": 1, "bogus": 1})


def test_overrides_must_be_consistent(target_file, target_23):
    cfg = ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=1, T=3.0, delta=0.2, eta=0.3)
    with pytest.raises(ScheduleError):
        build_schedule(cfg, target_23.spec)
    cfg = ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=1, T=3.0, delta=0.2)
    s = build_schedule(cfg, target_23.spec)
    assert s.W * s.eta == pytest.approx(2.8) and s.eta <= 0.5 / 2


def test_distinct_errors(tmp_path):
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"d": 30, "K": 3, "support": [{"tokens": [1] * 30, "prob": 1.0}]}))
    with pytest.raises(DenseCapError):
        run_experiment(ExperimentConfig(target=str(big), sampler="matu", epsilon=0.5, chains=1))
    masked = tmp_path / "masked.json"
    masked.write_text(json.dumps({"d": 1, "K": 3, "support": [{"tokens": [3], "prob": 1.0}]}))
    with pytest.raises(TargetFileError):
        run_experiment(ExperimentConfig(target=str(masked), sampler="matu", epsilon=0.5, chains=1))
    with pytest.raises(FileNotFoundError):
        run_experiment(ExperimentConfig(target=str(tmp_path / "nope.json"), sampler="matu", epsilon=0.5, chains=1))


def test_foreign_csv_is_rejected(tmp_path, target_file):
    out = tmp_path / "other.csv"
    out.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        run_experiment(ExperimentConfig(target=target_file, sampler="matu", epsilon=0.5, chains=1), out)

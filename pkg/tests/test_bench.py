"""Experiment runner: sweeps, dumps, complexity, IQ grids, CLI determinism."""

import json

import numpy as np
import pytest

import hunfold as hf
from hunfold.bench import (ExperimentConfig, complexity_report, ingest_iq_grid,
                           metric_rows_table, read_iq_grid, run_single,
                           run_sweep, write_csv, write_iq_grid, write_manifest)
from hunfold.cli import main as cli_main
from hunfold.cplx import ComplexArray, matvec
from hunfold.metrics import hit_rate_metric
from hunfold.nets import forward, init_network
from hunfold.solvers import SolverConfig, default_lambda, ista
from hunfold.training import TrainConfig, train


def small_cfg(**kw):
    base = dict(shape=(16,), n_obs=8, k=2, noise_powers_db=[-10.0],
                methods=["ista"], trials_per_point=2, seed=3, sample_seed=4,
                budgets={"ista": 40, "fista": 20})
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_sweep_single_row():
    rows = run_sweep(small_cfg(trials_per_point=1))
    assert len(rows) == 1
    r = rows[0]
    assert r.method == "ista" and r.trials == 1
    assert 0.0 <= r.hit_rate <= 1.0
    assert r.mean_runtime_ms is None  # timing is opt-in


def test_run_sweep_deterministic_rows():
    a = run_sweep(small_cfg(noise_powers_db=[-10.0, 0.0], trials_per_point=3))
    b = run_sweep(small_cfg(noise_powers_db=[-10.0, 0.0], trials_per_point=3))
    assert [(r.method, r.noise_power_db, r.nmse_db, r.hit_rate) for r in a] == \
           [(r.method, r.noise_power_db, r.nmse_db, r.hit_rate) for r in b]


def test_run_sweep_monotone_in_noise():
    cfg = small_cfg(shape=(32,), n_obs=12, k=2,
                    noise_powers_db=[-20.0, -10.0, 0.0, 10.0],
                    trials_per_point=200, budgets={"ista": 30, "fista": 20})
    rows = run_sweep(cfg)
    nmse = [r.nmse_db for r in rows]
    for lo, hi in zip(nmse, nmse[1:]):
        assert hi >= lo - 0.5  # allow half a dB of estimation slack


def test_run_sweep_rejects_missing_or_mismatched_models():
    with pytest.raises(ValueError):
        small_cfg(methods=["lista-toeplitz"])
    d = hf.build_dictionary((8,), hf.draw_sampling(8, 4, seed=0))
    net = init_network("toeplitz1d", d, 2, lam=0.1)
    with pytest.raises(ValueError):
        small_cfg(methods=["lista-toeplitz"], models={"lista-toeplitz": net})
    with pytest.raises(ValueError):
        small_cfg(methods=["nonsense"])
    # arch/method mismatch
    d16 = hf.build_dictionary((16,), hf.draw_sampling(16, 8, seed=0))
    net16 = init_network("toeplitz1d", d16, 2, lam=0.1)
    with pytest.raises(ValueError):
        small_cfg(methods=["lista"], models={"lista": net16})


def test_run_single_zero_amplitude_dump():
    cfg = small_cfg(k=0)
    # zero components: k=0 draws an empty spectrum, dump must be all zero
    header, rows = run_single(cfg, offgrid=False)
    assert header[:2] == ["index", "true_mag"]
    assert len(rows) == 16
    assert all(r[1] == 0.0 and r[2] == 0.0 for r in rows)


def test_run_single_ongrid_recovers_support():
    cfg = small_cfg(shape=(64,), n_obs=16, k=2, seed=9,
                    budgets={"ista": 600, "fista": 200},
                    lambda_scale=0.02, methods=["ista", "fista"])
    header, rows = run_single(cfg, offgrid=False)
    mags = np.array([r[1] for r in rows])
    support = set(np.flatnonzero(mags > 0).tolist())
    for col in (2, 3):
        est = np.array([r[col] for r in rows])
        top = set(np.argsort(-est, kind="stable")[: len(support)].tolist())
        assert top == support


def test_complexity_report_counts():
    header, rows = complexity_report([512, 1024], n_obs=64, timing=False)
    assert rows[0][2] == 512 * 512 and rows[0][3] == 1023
    assert rows[1][2] == 1024 * 1024 and rows[1][3] == 2047
    # storage ratio example: 1023 / 262144, about 0.39%
    assert abs(rows[0][4] - 1023 / 262144) < 1e-12
    # doubling the grid quadruples dense storage but only doubles the kernel
    assert rows[1][2] == 4 * rows[0][2]
    assert rows[1][3] == 2 * rows[0][3] + 1


def test_iq_round_trip_bit_exact(tmp_path):
    d = hf.build_dictionary((4, 8), hf.draw_sampling(32, 10, seed=5))
    ds = hf.gen_dataset(d, 3, 2, 0.05, seed=6)
    y = ComplexArray(ds.obs.re[:, 1].copy(), ds.obs.im[:, 1].copy())
    path = tmp_path / "grid.hiq"
    write_iq_grid(path, (4, 8), d.sampling.omega, y)
    shape, omega, back = read_iq_grid(path)
    assert shape == (4, 8)
    assert np.array_equal(omega, d.sampling.omega)
    assert np.array_equal(back.re, y.re) and np.array_equal(back.im, y.im)
    y2, d2 = ingest_iq_grid(path, shape=(4, 8), omega=d.sampling.omega)
    assert np.max(np.abs(d2.phi.to_complex() - d.phi.to_complex())) < 1e-12


def test_iq_malformed_files(tmp_path):
    empty = tmp_path / "empty.hiq"
    empty.write_bytes(b"")
    with pytest.raises(ValueError):
        read_iq_grid(empty)
    bad = tmp_path / "bad.hiq"
    bad.write_bytes(b"HIQ1" + (123456).to_bytes(4, "little"))
    with pytest.raises(ValueError):
        read_iq_grid(bad)
    # payload length disagreeing with the index set
    d = hf.build_dictionary((2, 4), hf.draw_sampling(8, 3, seed=1))
    good = tmp_path / "good.hiq"
    write_iq_grid(good, (2, 4), d.sampling.omega,
                  ComplexArray.zeros((3,)))
    trunc = tmp_path / "trunc.hiq"
    trunc.write_bytes(good.read_bytes()[:-16])
    with pytest.raises(ValueError):
        read_iq_grid(trunc)
    with pytest.raises(ValueError):
        ingest_iq_grid(good, shape=(4, 2))


def test_iq_aircraft_style_recovery(tmp_path):
    # a few scatterers sharing one second-axis cell, like a single-velocity
    # target distributed over range: both solver and trained net must find them
    m1, m2, n, k = 8, 8, 32, 3
    d = hf.build_dictionary((m1, m2), hf.draw_sampling(m1 * m2, n, seed=31))
    rng = np.random.default_rng(32)
    vel_col = 5
    ranges = rng.choice(m1, size=k, replace=False)
    x = ComplexArray.zeros((m1 * m2,))
    for r in ranges:
        amp = 1.0 + 0.5 * rng.uniform()
        ph = rng.uniform(0, 2 * np.pi)
        idx = int(r) * m2 + vel_col
        x.re[idx] = amp * np.cos(ph)
        x.im[idx] = amp * np.sin(ph)
    y = hf.add_noise(matvec(d.phi, x), 0.01, seed=33)
    path = tmp_path / "aircraft.hiq"
    write_iq_grid(path, (m1, m2), d.sampling.omega, y)
    y2, d2 = ingest_iq_grid(path)

    res = ista(d2, y2, SolverConfig(lam=default_lambda(d2, y2, 0.02),
                                    max_iter=800, tol=0.0))
    assert hit_rate_metric(res.x_hat, x, k) == 1.0

    tr = hf.gen_dataset(d, 2500, k, 0.01, seed=34)
    vl = hf.gen_dataset(d, 250, k, 0.01, seed=35)
    net0 = init_network("toeplitz2d", d, 6, lam=0.1)
    net, _ = train(net0, tr, vl, TrainConfig(epochs=12, seed=3))
    assert hit_rate_metric(forward(net, y2), x, k) == 1.0


def test_write_csv_fixed_schema(tmp_path):
    rows = run_sweep(small_cfg())
    header, table = metric_rows_table(rows)
    path = tmp_path / "rows.csv"
    write_csv(path, header, table)
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == "method,noise_power_db,nmse_db,hit_rate,mean_runtime_ms,trials"
    assert lines[1].startswith("ista,-10.0,")
    assert ",," in lines[1]  # timing column present but empty
    assert text.endswith("\n") and "\r" not in text


def test_manifest_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_manifest(a, {"k": 2, "shape": [16]})
    write_manifest(b, {"k": 2, "shape": [16]})
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["tool"] == "hunfold" and "noise_db_convention" in doc


# -- CLI ----------------------------------------------------------------------


def test_cli_end_to_end_1d(tmp_path):
    data = tmp_path / "train.hud"
    model = tmp_path / "net.hun"
    sweep_csv = tmp_path / "sweep.csv"
    assert cli_main(["gen-data", "--problem", "1d", "--m", "24", "--n", "8",
                     "--k", "2", "--sigma2", "0.1", "--samples", "300",
                     "--seed", "5", "--sample-seed", "6",
                     "--out", str(data)]) == 0
    assert data.exists() and (tmp_path / "train.hud.json").exists()
    assert cli_main(["train", "--data", str(data), "--arch", "toeplitz1d",
                     "--depth", "2", "--epochs", "2", "--batch", "64",
                     "--seed", "1", "--out", str(model)]) == 0
    assert model.exists()
    assert cli_main(["sweep", "--problem", "1d", "--m", "24", "--n", "8",
                     "--k", "2", "--noise-db=-10,0", "--trials", "3",
                     "--methods", "ista,lista-toeplitz",
                     "--model-lista-toeplitz", str(model),
                     "--budget-ista", "30", "--seed", "5", "--sample-seed", "6",
                     "--out", str(sweep_csv)]) == 0
    lines = sweep_csv.read_text().strip().split("\n")
    assert len(lines) == 1 + 4  # header + 2 methods x 2 noise points


def test_cli_sweep_byte_identical(tmp_path):
    def run(out):
        assert cli_main(["sweep", "--problem", "1d", "--m", "16", "--n", "8",
                         "--k", "2", "--noise-db=-5,5", "--trials", "4",
                         "--methods", "ista,fista", "--budget-ista", "25",
                         "--budget-fista", "15", "--seed", "9",
                         "--sample-seed", "2", "--out", str(out)]) == 0

    one = tmp_path / "one.csv"
    run(one)
    csv_first = one.read_bytes()
    manifest_first = (tmp_path / "one.csv.manifest.json").read_bytes()
    run(one)  # same invocation again, including the output path
    assert one.read_bytes() == csv_first
    assert (tmp_path / "one.csv.manifest.json").read_bytes() == manifest_first
    two = tmp_path / "two.csv"
    run(two)  # the data rows do not depend on where they are written
    assert two.read_bytes() == csv_first


def test_cli_single_and_config_file(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "problem": "1d", "m": 16, "n": 8, "k": 2, "methods": "ista",
        "budget_ista": 30, "seed": 4, "sample_seed": 1}))
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert cli_main(["single", "--config", str(cfg_file), "--out", str(a)]) == 0
    assert cli_main(["single", "--config", str(cfg_file), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    # flags override the config document
    c = tmp_path / "c.csv"
    assert cli_main(["single", "--config", str(cfg_file), "--m", "32",
                     "--out", str(c)]) == 0
    assert len(c.read_text().strip().split("\n")) == 1 + 32


def test_cli_ingest(tmp_path):
    data = tmp_path / "pairs.hud"
    iq = tmp_path / "grid.hiq"
    out = tmp_path / "rec.csv"
    assert cli_main(["gen-data", "--problem", "2d", "--m1", "4", "--m2", "6",
                     "--n", "12", "--k", "2", "--sigma2", "0.01",
                     "--samples", "3", "--seed", "8", "--sample-seed", "3",
                     "--out", str(data), "--export-iq", str(iq),
                     "--export-index", "1"]) == 0
    assert cli_main(["ingest", "--path", str(iq), "--budget", "200",
                     "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "index,axis1_cell,axis2_cell,magnitude"
    assert len(lines) == 1 + 24
    # ingest output matches recovering straight from the dataset column
    ds = hf.read_dataset(data)
    y = ComplexArray(ds.obs.re[:, 1].copy(), ds.obs.im[:, 1].copy())
    y2, d2 = ingest_iq_grid(iq)
    assert np.array_equal(y2.re, y.re) and np.array_equal(y2.im, y.im)


def test_cli_complexity_no_timing(tmp_path):
    out = tmp_path / "cx.csv"
    assert cli_main(["complexity", "--sizes", "64,128", "--n", "16",
                     "--no-timing", "--out", str(out)]) == 0
    lines = out.read_text().strip().split("\n")
    assert len(lines) == 3
    assert lines[1].split(",")[2] == "4096"


def test_cli_missing_required_flag(tmp_path):
    with pytest.raises(SystemExit):
        cli_main(["gen-data", "--problem", "1d", "--m", "8", "--n", "4",
                  "--samples", "5"])  # no --out

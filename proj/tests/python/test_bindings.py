"""Bindings against the command-line program built from the same library.

The CLI prints 17 significant digits, so its numbers round-trip exactly and
the comparisons below are exact.
"""

import csv
import json
import os
import subprocess

import numpy as np
import pytest

import difw

CLI = os.environ.get("DIFW_CLI", "difw")


def run_cli(*args):
    subprocess.run([CLI, *map(str, args)], check=True, capture_output=True)


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def boundary_flag(zero_boundary):
    return "--zero-boundary" if zero_boundary else "--no-zero-boundary"


FIELD_CASES = [
    (2, True, "sparse", 1.0, 11, 1.0),
    (2, False, "svd", 0.5, 17, 0.3),
    (4, True, "qr", 1.0, 33, 2.0),
    (8, False, "rref", 0.7, 50, 1.0),
    (16, True, "sparse", 1.0, 101, 0.5),
    (16, False, "sparse", 1.0, 64, 1.5),
    (32, True, "svd", 1.3, 200, 1.0),
    (64, False, "sparse", 1.0, 257, 0.8),
]


def draw_theta(seed, n_cells, zero_boundary, method, scale):
    d = difw.basis_matrix(n_cells, zero_boundary, method).shape[1]
    return np.random.default_rng(seed).normal(0.0, scale, d)


@pytest.mark.parametrize("case", range(len(FIELD_CASES)))
def test_integrate_grid_parity(tmp_path, case):
    n_cells, zb, method, t, n_points, scale = FIELD_CASES[case]
    theta = draw_theta(case, n_cells, zb, method, scale)
    out = tmp_path / "warp.csv"
    run_cli("warp", "--cells", n_cells, boundary_flag(zb), "--basis", method, "--theta",
            json.dumps(theta.tolist()), "--points", n_points, "--time", t, "--out", out)
    header, table = read_csv(out)
    assert header == ["x", "phi"]
    phi = difw.integrate_grid(theta, table[:, 0], n_cells, zb, method, t)
    assert np.array_equal(phi, table[:, 1])


@pytest.mark.parametrize("case", range(len(FIELD_CASES)))
def test_grad_grid_parity(tmp_path, case):
    n_cells, zb, method, t, n_points, scale = FIELD_CASES[case]
    theta = draw_theta(100 + case, n_cells, zb, method, scale)
    out = tmp_path / "grad.csv"
    run_cli("warp", "--cells", n_cells, boundary_flag(zb), "--basis", method, "--theta",
            json.dumps(theta.tolist()), "--points", n_points, "--time", t, "--grad", "--out", out)
    _, table = read_csv(out)
    grad = difw.grad_grid(theta, table[:, 0], n_cells, zb, method, t, threads=2)
    assert grad.shape == (n_points, theta.size)
    assert np.array_equal(grad, table[:, 2:])


ALIGN_CASES = [
    dict(classes=1, seed=0, epochs=40, layers=1, batch=0),
    dict(classes=2, seed=1, epochs=30, layers=1, batch=0),
    dict(classes=1, seed=2, epochs=25, layers=2, batch=3),
    dict(classes=3, seed=3, epochs=20, layers=1, batch=4),
]


@pytest.mark.parametrize("case", range(len(ALIGN_CASES)))
def test_align_joint_parity(tmp_path, case):
    c = ALIGN_CASES[case]
    data = tmp_path / "data.csv"
    run_cli("synth", "--classes", c["classes"], "--per-class", 5, "--length", 40, "--lambda-sigma", 0.05,
            "--seed", c["seed"], "--out", data)
    run_cli("align", data, "--epochs", c["epochs"], "--layers", c["layers"], "--batch-size", c["batch"],
            "--seed", 7, "--cells", 8, "--out", tmp_path)
    header, table = read_csv(data)
    assert header[0] == "label"
    labels = table[:, 0].astype(int).tolist() if c["classes"] > 1 else None
    result = difw.align_joint(table[:, 1:], labels, n_cells=8, n_layers=c["layers"], epochs=c["epochs"],
                              batch_size=c["batch"], seed=7)
    _, aligned = read_csv(tmp_path / "aligned.csv")
    assert np.array_equal(result["warped"], aligned[:, 1:])
    with open(tmp_path / "theta.json") as f:
        thetas = np.array(json.load(f)["thetas"])
    assert np.array_equal(result["thetas"], thetas)
    _, loss = read_csv(tmp_path / "loss.csv")
    assert np.array_equal(result["history"], loss[:, 1:3])
    assert result["history"].shape == (c["epochs"] + 1, 2)


def test_zero_parameters_give_the_identity():
    x = np.linspace(0.0, 1.0, 41)
    assert np.array_equal(difw.integrate_grid(np.zeros(17), x, 16), x)
    assert np.array_equal(difw.integrate_grid(np.zeros(15), x, 16, True), x)


def test_wrong_theta_length_names_the_dimension():
    with pytest.raises(difw.InvalidArgument, match="expected d = 1") as info:
        difw.integrate_grid(np.zeros(3), np.linspace(0.0, 1.0, 5), 2, True)
    assert isinstance(info.value, ValueError)


def test_numeric_failures_raise_runtime_errors():
    signals = np.vstack([np.sin(np.linspace(0, 3, 20) + s) for s in (0.0, 0.3, 0.6)])
    with pytest.raises(difw.NumericError) as info:
        difw.align_joint(signals, epochs=10, learning_rate=1e6)
    assert isinstance(info.value, RuntimeError)


def test_points_outside_the_domain():
    with pytest.raises(difw.OutOfDomain):
        difw.integrate_grid(np.zeros(3), np.array([1.5]), 2)


def test_prior_samples_are_seeded():
    a = difw.sample_prior(16, True, "sparse", 0.1, 0.5, 42)
    assert a.shape == (15,)
    assert np.array_equal(a, difw.sample_prior(16, True, "sparse", 0.1, 0.5, 42))


def test_warp_signal_identity():
    y = np.cos(np.linspace(0.0, 2.0, 30))
    grid = np.arange(30) / 29.0  # the library's grid j / (T - 1)
    assert np.array_equal(difw.warp_signal(y, grid), y)

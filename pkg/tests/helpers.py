"""Shared test utilities: finite-difference oracles and toy data builders.

The oracles only ever call ``mlp_forward`` (or a supplied scalar function)
so they stay independent of the gradient code they check.
"""

from __future__ import annotations

import json

import numpy as np

from synthflow import dataio, nets, toydata

FD_STEP = 1e-4
# Pre-activations must clear this margin so FD perturbation cannot flip a
# ReLU mask.
KINK_MARGIN = 1e-3


def fd_param_grad(net, scalar_fn, h=FD_STEP):
    """Central finite differences of scalar_fn() over every parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = scalar_fn()
            p[i] = orig - h
            down = scalar_fn()
            p[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def fd_input_grad(net, x, h=FD_STEP):
    """Central finite differences of the scalar output w.r.t. each input."""
    fd = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp = x.copy()
            xp[i, j] += h
            xm = x.copy()
            xm[i, j] -= h
            fd[i, j] = (
                nets.mlp_forward(net, xp)[0][i, 0]
                - nets.mlp_forward(net, xm)[0][i, 0]
            ) / (2.0 * h)
    return fd


def rel_err(analytic, reference):
    """Vector-level relative error between two gradient lists/arrays."""
    if isinstance(analytic, np.ndarray):
        analytic, reference = [analytic], [reference]
    a = np.concatenate([np.asarray(x).ravel() for x in analytic])
    b = np.concatenate([np.asarray(x).ravel() for x in reference])
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def min_preact_margin(net, x):
    _, cache = nets.mlp_forward(net, x)
    return min(float(np.abs(z).min()) for z in cache.preacts)


def random_net_and_batch(seed, sizes=(3, 5, 4, 1), batch=4, margin=KINK_MARGIN):
    """Deterministic random network and batch clear of ReLU kinks.

    Re-seeds until every pre-activation magnitude exceeds ``margin`` so the
    finite-difference step cannot cross a kink.
    """
    attempt = seed
    while True:
        rng = np.random.default_rng(attempt)
        net = nets.build_mlp(list(sizes), rng)
        x = rng.normal(size=(batch, sizes[0]))
        if min_preact_margin(net, x) >= margin:
            return net, x
        attempt += 100_003


def toy_attack_dataset():
    """The toy dataset ingested the same way the CLI does, attack rows only."""
    rows = toydata.toy_rows()
    values = np.array([[r[0], r[1]] for r in rows])
    labels = [r[2] for r in rows]
    normalized, stats = dataio.minmax_normalize(values)
    full = dataio.DatasetMatrix(normalized, labels, stats, toydata.toy_schema())
    return dataio.filter_by_label(full, {"attack"})


def constant_dataset(value=0.5, n_rows=500):
    """Single-feature dataset where every entry equals ``value``."""
    schema = dataio.FeatureSchema(
        (dataio.Column("f1", dataio.NUMERIC), dataio.Column("label", dataio.LABEL))
    )
    stats = dataio.NormalizationStats(np.zeros(1), np.ones(1))
    return dataio.DatasetMatrix(
        np.full((n_rows, 1), value), ["x"] * n_rows, stats, schema
    )


def write_toy_run(tmp_path, gan_overrides=None, eval_overrides=None, seed=7):
    """Write toy.csv, toy_schema.json, and a run config; returns config path."""
    csv_path = tmp_path / "toy.csv"
    schema_path = tmp_path / "toy_schema.json"
    toydata.write_toy_csv(csv_path)
    dataio.schema_to_json(toydata.toy_schema(), schema_path)
    gan_cfg = {
        "noise_dim": 8,
        "generator_hidden": [32, 32],
        "critic_hidden": [32, 32],
        "gen_steps": 60,
    }
    gan_cfg.update(gan_overrides or {})
    eval_cfg = {"n_trees": 30}
    eval_cfg.update(eval_overrides or {})
    config = {
        "dataset": "custom",
        "csv": ["toy.csv"],
        "labels": ["attack"],
        "schema": "toy_schema.json",
        "seed": seed,
        "out": "run",
        "gan": gan_cfg,
        "eval": eval_cfg,
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return config_path

"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also repeated in the pytest terminal summary.
"""

import itertools
import time

import numpy as np
import pytest
from _helpers import TINY, OP_NAMES, full_model_grad_errors, op_grad_error, random_dictionary, random_graph, random_params

from causalwalk import autodiff as ad
from causalwalk.autodiff import Tensor
from causalwalk.checkpoint import load_checkpoint, save_checkpoint
from causalwalk.featurize import FeaturizerConfig
from causalwalk.graph import as_graphs
from causalwalk.model import ModelConfig, compute_losses, forward_causal, intervene
from causalwalk.scm import conditional_L_given_G, confounded_scm, interventional, verify
from causalwalk.synth import GeneratorConfig, generate
from causalwalk.training import TrainConfig, evaluate, mean_row_entropy, train
from causalwalk.walk import beam_search_paths, transition_probs

SEEDS = range(5)
RESULTS = {}


def report(number, title, ok, detail):
    line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def synthetic_graphs(bias, seed):
    cfg = GeneratorConfig(n_train=500, n_dev=100, n_test=200, chain_length=3, bias_strength=bias, seed=seed)
    feat = FeaturizerConfig()
    splits = {name: as_graphs([ex.to_record() for ex in exs], feat) for name, exs in generate(cfg).items()}
    return splits, ModelConfig(labels=cfg.labels)


# ---------------------------------------------------------------- 1


def test_criterion_1_frontdoor_identity():
    t0 = time.perf_counter()
    rep = verify(200, seed=0)
    conf = confounded_scm()
    gap = max(
        np.abs(conditional_L_given_G(conf, g) - interventional(conf, g)).max() for g in range(conf.cardinalities[1])
    )
    elapsed = time.perf_counter() - t0
    ok = rep["max_frontdoor_deviation"] < 1e-12 and gap > 0.1 and elapsed < 5
    report(1, "front-door identity", ok,
           f"max dev {rep['max_frontdoor_deviation']:.2e} over 200 SCMs, confounded gap {gap:.3f}, {elapsed:.2f}s")


# ---------------------------------------------------------------- 2


def brute_force_paths(P, n_nodes):
    out = []
    for rest in itertools.permutations(range(1, len(P)), n_nodes - 1):
        nodes = (0, *rest)
        prob = 1.0
        for i, j in zip(nodes[:-1], nodes[1:]):
            prob *= P[i, j]
        out.append((nodes, prob))
    return sorted(out, key=lambda t: (-t[1], t[0]))


def test_criterion_2_beam_matches_brute_force():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    same_paths, worst = True, 0.0
    for _ in range(50):
        n1 = int(rng.integers(2, 7))
        max_len = int(rng.integers(1, 4))
        T = transition_probs(Tensor(rng.normal(size=(n1, n1))))
        brute = brute_force_paths(T.values, min(max_len + 1, n1))
        beam = beam_search_paths(T, width=len(brute), max_len=max_len)
        same_paths &= [p.nodes for p in beam] == [b[0] for b in brute]
        worst = max(worst, max(abs(p.prob - b[1]) / b[1] for p, b in zip(beam, brute)))
    elapsed = time.perf_counter() - t0
    ok = same_paths and worst < 1e-12 and elapsed < 5
    report(2, "beam equals exhaustive enumeration", ok,
           f"paths identical={same_paths}, max rel prob error {worst:.1e}, {elapsed:.2f}s")


# ---------------------------------------------------------------- 3


def test_criterion_3_gradient_integrity():
    t0 = time.perf_counter()
    op_worst = max(op_grad_error(op, trial) for op in OP_NAMES for trial in range(20))
    rng = np.random.default_rng(3)
    model_worst = 0.0
    for i in range(10):
        g = random_graph(rng, 3, dim=TINY.feature_dim)
        errors = full_model_grad_errors(g, random_params(TINY, rng), random_dictionary(TINY, rng), TINY, gold=i % 3)
        model_worst = max(model_worst, max(errors.values()))
    elapsed = time.perf_counter() - t0
    ok = op_worst < 1e-4 and model_worst < 1e-3 and elapsed < 60
    report(3, "gradient integrity", ok,
           f"per-op max {op_worst:.1e}, full model max {model_worst:.1e} over 10 graphs, {elapsed:.1f}s")


# ---------------------------------------------------------------- 4


def test_criterion_4_reduction_identities():
    rng = np.random.default_rng(4)
    cfg = ModelConfig(feature_dim=12, hidden_dim=6, n_clusters=2)
    alpha_exact = rows_ok = causal_ok = total_exact = True
    for _ in range(20):
        p = random_params(cfg, rng)
        x, e = Tensor(rng.normal(size=(3, 6))), Tensor(rng.normal(size=(3, 6)))
        plain = ad.softmax(ad.matmul(x, ad.transpose(p["W_r"]))).data
        alpha_exact &= np.array_equal(intervene(x, e, p, alpha=0.0).data, plain)
        g = random_graph(rng, int(rng.integers(1, 8)), dim=12)
        out = forward_causal(g, p, random_dictionary(cfg, rng), cfg)
        rows_ok &= bool(np.abs(out.transitions.values.sum(axis=1) - 1).max() <= 1e-9)
        causal_ok &= abs(out.causal_probs.sum() - 1) <= 1e-6
        L_c, L_w, L_t = compute_losses(out, int(rng.integers(3)))
        total_exact &= L_t.item() == L_w.item() + L_c.item()
    ok = alpha_exact and rows_ok and causal_ok and total_exact
    report(4, "reduction identities", ok,
           f"alpha=0 exact={alpha_exact}, rows sum to 1={rows_ok}, l_causal sums to 1={causal_ok}, "
           f"L_total exact={total_exact}")


# ---------------------------------------------------------------- 5 and 7


@pytest.fixture(scope="module")
def bias_free_runs():
    """Default training on the bias-free set, one run per seed, with timing."""
    runs, t0 = [], time.perf_counter()
    for seed in SEEDS:
        splits, cfg = synthetic_graphs(0.0, seed)
        res = train(splits["train"], cfg, TrainConfig(seed=seed, epochs=10))
        acc = evaluate(splits["test_id"], res.params, res.dictionary, cfg).accuracy
        runs.append((splits, cfg, res, acc))
    return runs, time.perf_counter() - t0


def test_criterion_5_trainability(bias_free_runs):
    runs, elapsed = bias_free_runs
    accs = [acc for *_, acc in runs]
    wins = sum(a >= 0.90 for a in accs)
    ok = wins >= 4 and elapsed < 300
    report(5, "trainability on the bias-free set", ok,
           f"test accuracy per seed {[round(a, 3) for a in accs]}, {wins}/5 >= 0.90, {elapsed:.0f}s")


def test_criterion_7_evidence_supervision_sparsity(bias_free_runs):
    runs, _ = bias_free_runs
    default, supervised = [], []
    for seed, (splits, cfg, res, _) in zip(SEEDS, runs):
        sup = train(splits["train"], cfg, TrainConfig(seed=seed, epochs=10, evidence_supervision=True))
        default.append(mean_row_entropy(splits["test_id"], res.params, cfg))
        supervised.append(mean_row_entropy(splits["test_id"], sup.params, cfg))
    ok = np.mean(supervised) < np.mean(default)
    report(7, "evidence supervision gives sparser transitions", ok,
           f"mean row entropy {np.mean(supervised):.3f} supervised vs {np.mean(default):.3f} default")


# ---------------------------------------------------------------- 6


def test_criterion_6_debiasing_direction():
    t0 = time.perf_counter()
    acc = {m: {"id": [], "adv": []} for m in ("causal", "walk-only")}
    for seed in SEEDS:
        splits, cfg = synthetic_graphs(0.9, seed)
        for mode in acc:
            res = train(splits["train"], cfg, TrainConfig(seed=seed, epochs=10, mode=mode))
            acc[mode]["id"].append(evaluate(splits["test_id"], res.params, res.dictionary, cfg, mode).accuracy)
            acc[mode]["adv"].append(evaluate(splits["test_adversarial"], res.params, res.dictionary, cfg, mode).accuracy)
    elapsed = time.perf_counter() - t0
    mean = {m: {k: float(np.mean(v)) for k, v in d.items()} for m, d in acc.items()}
    drop = {m: mean[m]["id"] - mean[m]["adv"] for m in mean}
    gain = mean["causal"]["adv"] - mean["walk-only"]["adv"]
    ok = gain > 0 and drop["causal"] < drop["walk-only"] and elapsed < 900
    report(6, "debiasing direction at bias 0.9", ok,
           f"adversarial acc causal {mean['causal']['adv']:.3f} vs walk-only {mean['walk-only']['adv']:.3f}, "
           f"drop causal {drop['causal']:.3f} vs walk-only {drop['walk-only']:.3f}, {elapsed:.0f}s")


# ---------------------------------------------------------------- 8


def test_criterion_8_determinism_and_round_trip(tmp_path):
    cfg_data = GeneratorConfig(n_train=60, n_dev=30, n_test=10, seed=8)
    feat = FeaturizerConfig(dim=64)
    splits = {k: as_graphs([ex.to_record() for ex in v], feat) for k, v in generate(cfg_data).items()}
    cfg = ModelConfig(feature_dim=64, hidden_dim=16, n_clusters=3, labels=cfg_data.labels)
    tc = TrainConfig(seed=8, epochs=3)
    a = train(splits["train"], cfg, tc, dev=splits["dev"])
    b = train(splits["train"], cfg, tc, dev=splits["dev"])
    curves_equal = a.history == b.history
    params_equal = all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)

    path = tmp_path / "model.ckpt"
    save_checkpoint(path, a.params, a.dictionary, cfg, tc, feat)
    ck = load_checkpoint(path)
    dev = as_graphs([ex.to_record() for ex in generate(cfg_data)["dev"]], ck.featurizer)
    reloaded = evaluate(dev, ck.params, ck.dictionary, ck.model_config).accuracy
    original = a.history[-1].dev_accuracy
    ok = curves_equal and params_equal and reloaded == original
    report(8, "determinism and checkpoint round trip", ok,
           f"curves identical={curves_equal}, params identical={params_equal}, "
           f"dev accuracy {original!r} trained vs {reloaded!r} reloaded")


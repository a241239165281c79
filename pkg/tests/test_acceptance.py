"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import functools
import itertools
import json
import math
import time

import numpy as np
import pytest

from atelier import artistio as ao
from atelier import composer as cp
from atelier import embedding as em
from atelier import engine as eg
from atelier import labanstr as lb
from atelier import phase as ph
from atelier.optim import finite_difference_gradient, pack
from atelier.store import session_load

from conftest import random_score
from test_engine import (
    cell_score,
    gradient_bruteforce,
    loglik_bruteforce,
    phase1_session,
    record_for,
    small_vocab,
    spearman,
)


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                print(f"\n[FAIL] {name}")
                raise
            print(f"\n[PASS] {name}")
            return result

        return wrapper

    return decorate


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@criterion("LabanSTR round trip: 200-score corpus, 1000 seeded permutations each, < 5 s")
def test_labanstr_round_trip():
    start = time.monotonic()
    rng = np.random.default_rng(123)
    scores = [random_score(rng, int(rng.integers(1, 13))) for _ in range(200)]
    for score in scores:
        canon = lb.canonicalize(score)
        assert lb.parse_score(lb.serialize_score(canon)) == canon
        reference = lb.serialize_score(canon)
        tokens = list(score.tokens)
        for _ in range(1000):
            rng.shuffle(tokens)
            shuffled = lb.Score(score.meter, tuple(tokens))
            assert lb.serialize_score(lb.canonicalize(shuffled)) == reference
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"round-trip criterion took {elapsed:.2f}s"


@criterion("Similarity algebra: dot symmetry/bilinearity to 1e-12; penalty score strictly increasing in reward")
def test_similarity_algebra():
    rng = np.random.default_rng(21)
    for _ in range(100):
        x, y = rng.normal(size=16), rng.normal(size=16)
        alpha = float(rng.normal())
        assert abs(em.dot_similarity(x, y) - em.dot_similarity(y, x)) <= 1e-12
        assert abs(em.dot_similarity(alpha * x, y) - alpha * em.dot_similarity(x, y)) <= 1e-12
        assert abs(em.dot_similarity(x + y, y) - em.dot_similarity(x, y) - em.dot_similarity(y, y)) <= 1e-12
    x, y = rng.normal(size=8), rng.normal(size=8)
    values = [em.sc_score(x, y, r, 2.0, 0.5, "penalty") for r in np.linspace(0.0, 6.0, 20)]
    assert all(b > a for a, b in zip(values, values[1:]))


@criterion("Gradient suite: alignment/composer/phase-1/phase-2 match central differences < 1e-4 at 10 points each, < 30 s")
def test_gradient_suite():
    start = time.monotonic()
    vocab = em.default_vocab()

    for seed in range(10):
        params = em.init_encoder_params(vocab, dim=3, seed=seed)
        pairs = cp.procedural_pairs(vocab, seed=seed, n=2)
        theta = pack(em._align_arrays(params))
        theta = theta + np.random.default_rng(seed).uniform(-0.05, 0.05, theta.shape)
        analytic = em.alignment_gradient(em._with_align_vector(params, theta), pairs)
        numeric = finite_difference_gradient(
            lambda v: em.alignment_objective(em._with_align_vector(params, v), pairs), theta
        )
        assert relative_error(analytic, numeric) < 1e-4

    for seed in range(10):
        enc = em.init_encoder_params(vocab, dim=3, seed=seed)
        comp = cp.init_composer_params(enc, seed=seed)
        corpus = cp.procedural_corpus(vocab, seed=seed, items_per_pair=1)[:5]
        theta = pack(cp._composer_arrays(comp))
        theta = theta + np.random.default_rng(seed).uniform(-0.05, 0.05, theta.shape)
        analytic = cp.composer_gradient(cp._with_composer_vector(comp, theta), corpus, enc)
        numeric = finite_difference_gradient(
            lambda v: cp.composer_objective(cp._with_composer_vector(comp, v), corpus, enc), theta
        )
        assert relative_error(analytic, numeric) < 1e-4

    mini = small_vocab()
    for seed in range(10):
        session = phase1_session(mini, dim=3, seed=seed)
        enc0, comp0 = session.enc, session.comp
        theta = pack(eg._phase1_arrays(enc0, comp0))
        theta = theta + np.random.default_rng(seed + 50).uniform(-0.02, 0.02, theta.shape)
        gen_seed = (seed, 99)
        enc_t, comp_t = eg._phase1_unpack(enc0, comp0, theta)
        analytic = eg.phase1_batch_gradient(enc_t, comp_t, session.pairs, session.config, 0.5, gen_seed)

        def phase1_obj(v):
            enc, comp = eg._phase1_unpack(enc0, comp0, v)
            return eg.phase1_batch_objective(enc, comp, session.pairs, session.config, 0.5, gen_seed)

        numeric = finite_difference_gradient(phase1_obj, theta)
        assert relative_error(analytic, numeric) < 1e-4

    enc4 = em.init_encoder_params(mini, dim=4, seed=1)
    config = eg.LoopConfig(reward_l2=0.01)
    states = [
        cell_score(lb.Column.ARM_R, lb.Direction.FORWARD, lb.Level.HIGH),
        cell_score(lb.Column.HEAD, lb.Direction.BACK, lb.Level.LOW),
    ]
    judgements = [eg.Judgement(), eg.Judgement(text=("lift",))]
    transitions = [np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([[0.5, 0.5], [0.2, 0.8]])]
    space = eg.build_toy_space(states, [0.6, 0.4], transitions, judgements, enc4)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        records = [
            record_for(space, tuple(int(rng.integers(0, 2)) for _ in range(3))) for _ in range(2)
        ]
        theta = rng.uniform(-0.5, 0.5, 216 + 4 + 1)
        analytic = eg.phase2_gradient(eg._rp_from_vector(theta), records, [space, space], config)
        numeric = finite_difference_gradient(
            lambda v: eg.phase2_objective(eg._rp_from_vector(v), records, [space, space], config),
            theta,
        )
        assert relative_error(analytic, numeric) < 1e-4

    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"gradient suite took {elapsed:.2f}s"


@criterion("Trajectory likelihood equals brute-force enumeration to 1e-9; reward-shift invariance to 1e-9")
def test_trajectory_oracle_equivalence():
    vocab = small_vocab()
    enc = em.init_encoder_params(vocab, dim=4, seed=1)

    # 2-state / 2-action / T=2 space: all 8 trajectories.
    states2 = [
        cell_score(lb.Column.ARM_R, lb.Direction.FORWARD, lb.Level.HIGH),
        cell_score(lb.Column.HEAD, lb.Direction.BACK, lb.Level.LOW),
    ]
    actions2 = [
        eg.Judgement(targets=(((lb.Column.ARM_R, lb.Direction.FORWARD, lb.Level.HIGH), 1.0),)),
        eg.Judgement(targets=(((lb.Column.HEAD, lb.Direction.BACK, lb.Level.LOW), 0.5),)),
    ]
    space2 = eg.build_toy_space(
        states2,
        [0.6, 0.4],
        [np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([[0.5, 0.5], [0.2, 0.8]])],
        actions2,
        enc,
    )

    # 6-action / T=3 space over 4 states; the 3 steps use 3 of the 6 actions.
    rng = np.random.default_rng(5)
    states4 = [
        cell_score(c, lb.Direction.FORWARD, lb.Level.MIDDLE)
        for c in (lb.Column.ARM_L, lb.Column.ARM_R, lb.Column.LEG_L, lb.Column.LEG_R)
    ]
    action_set = [
        eg.Judgement(targets=(((c, lb.Direction.LEFT, lb.Level.LOW), float(rng.uniform(-1, 1))),))
        for c in (lb.Column.ARM_L, lb.Column.ARM_R, lb.Column.LEG_L,
                  lb.Column.LEG_R, lb.Column.BODY, lb.Column.HEAD)
    ]
    transitions4 = []
    for _ in range(3):
        matrix = rng.uniform(0.1, 1.0, size=(4, 4))
        transitions4.append(matrix / matrix.sum(axis=1, keepdims=True))
    space4 = eg.build_toy_space(
        states4, np.full(4, 0.25), transitions4, [action_set[0], action_set[3], action_set[5]], enc
    )

    config = eg.LoopConfig(discount0=0.9, discount_decay=0.8)
    for space, seed in ((space2, 31), (space4, 32)):
        rng = np.random.default_rng(seed)
        rp = eg.RewardParams(
            weights=rng.uniform(-0.5, 0.5, 216 + enc.dim), bias=float(rng.uniform(-0.5, 0.5))
        )
        n = len(space.states)
        for path in itertools.product(range(n), repeat=space.horizon + 1):
            traj = record_for(space, path)
            got = eg.trajectory_loglik(traj, rp, config, space)
            want = loglik_bruteforce(traj, rp, config, space)
            assert abs(got - want) <= 1e-9
        for _ in range(3):
            path = tuple(int(rng.integers(0, n)) for _ in range(space.horizon + 1))
            traj = record_for(space, path)
            got_grad = eg.trajectory_loglik_gradient(traj, rp, config, space)
            want_grad = gradient_bruteforce(traj, rp, config, space)
            assert np.max(np.abs(got_grad - want_grad)) <= 1e-9

        # Shifting the bias leaves the normalized trajectory distribution unchanged.
        shifted = eg.RewardParams(weights=rp.weights.copy(), bias=rp.bias + 2.9)
        paths = list(itertools.product(range(n), repeat=space.horizon + 1))
        base = np.array([eg.trajectory_loglik(record_for(space, p), rp, config, space) for p in paths])
        moved = np.array(
            [eg.trajectory_loglik(record_for(space, p), shifted, config, space) for p in paths]
        )
        assert np.max(np.abs(np.exp(base) - np.exp(moved))) <= 1e-9
        assert abs(np.exp(base).sum() - 1.0) <= 1e-9


@criterion("Planted-reward recovery: Spearman >= 0.9 between planted and learned state rewards (seed 7), < 20 s")
def test_reward_recovery():
    start = time.monotonic()
    vocab = small_vocab()
    enc = em.init_encoder_params(vocab, dim=4, seed=1)
    cells = [
        (lb.Column.ARM_L, lb.Direction.FORWARD, lb.Level.HIGH),
        (lb.Column.ARM_R, lb.Direction.BACK, lb.Level.LOW),
        (lb.Column.LEG_L, lb.Direction.LEFT, lb.Level.MIDDLE),
        (lb.Column.LEG_R, lb.Direction.RIGHT, lb.Level.HIGH),
        (lb.Column.BODY, lb.Direction.PLACE, lb.Level.MIDDLE),
        (lb.Column.HEAD, lb.Direction.RIGHT_FORWARD, lb.Level.LOW),
    ]
    states = [cell_score(*cell) for cell in cells]
    n = len(states)
    planted = np.linspace(-1.0, 1.0, n)
    preference = np.exp(planted) / np.exp(planted).sum()
    horizon = 3
    judgements = [eg.Judgement() for _ in range(horizon)]
    space = eg.build_toy_space(
        states, np.full(n, 1.0 / n), [np.full((n, n), 1.0 / n)] * horizon, judgements, enc
    )

    rng = np.random.default_rng(7)
    records = [
        record_for(space, tuple(int(rng.choice(n, p=preference)) for _ in range(horizon + 1)), judgements)
        for _ in range(150)
    ]
    config = eg.LoopConfig(discount0=1.0, discount_decay=1.0, reward_l2=1e-3)
    reward, trace = eg.optimize_reward(
        eg.init_reward_params(enc.dim), records, [space] * len(records), config, steps=60, step_size=2.0
    )
    assert trace[-1] >= trace[0]
    learned = space.state_features @ reward.weights[: space.state_features.shape[1]]
    rho = spearman(planted, learned)
    assert rho >= 0.9, f"Spearman {rho:.3f} < 0.9"
    elapsed = time.monotonic() - start
    assert elapsed < 20.0, f"reward recovery took {elapsed:.2f}s"


@criterion("Phase fit: sinusoid recovery within 1%/2%/0.05 rad; residual monotone in k_max")
def test_phase_fit():
    rate = 64
    t = np.arange(rate * 4) / rate

    single = 2.0 * np.sin(2.0 * math.pi * 3.0 * t) + 1.0
    fit = ph.fit_cyclic_elements(single, rate, k_max=2)
    assert len(fit.elements) == 1
    el = fit.elements[0]
    assert abs(el.frequency - 3.0) / 3.0 < 0.01
    assert abs(el.amplitude - 2.0) / 2.0 < 0.02
    assert abs(ph.wrap_phase(el.phase - 0.0)) < 0.05
    assert abs(fit.offset - 1.0) < 0.02

    double = 1.0 * np.sin(2.0 * math.pi * 2.0 * t + 0.4) + 0.5 * np.sin(2.0 * math.pi * 5.0 * t - 1.1)
    fit2 = ph.fit_cyclic_elements(double, rate, k_max=2)
    assert len(fit2.elements) == 2
    expected = [(2.0, 1.0, 0.4), (5.0, 0.5, -1.1)]
    for el, (f, a, phs) in zip(sorted(fit2.elements, key=lambda e: e.frequency), expected):
        assert abs(el.frequency - f) / f < 0.01
        assert abs(el.amplitude - a) / a < 0.02
        assert abs(ph.wrap_phase(el.phase - phs)) < 0.05

    rng = np.random.default_rng(3)
    mixed = (
        np.sin(2.0 * math.pi * 1.0 * t)
        + 0.6 * np.sin(2.0 * math.pi * 2.5 * t + 0.5)
        + 0.3 * np.sin(2.0 * math.pi * 4.25 * t - 0.9)
        + 0.02 * rng.standard_normal(t.size)
    )
    residuals = [ph.fit_cyclic_elements(mixed, rate, k).residual_rms for k in range(0, 6)]
    for smaller_k, larger_k in zip(residuals[:-1], residuals[1:]):
        assert larger_k <= smaller_k + 1e-12


def _acceptance_oracle():
    target = np.zeros((8, 9, 3))
    cells = [
        (lb.Column.SUPPORT_L, lb.Direction.FORWARD, lb.Level.MIDDLE, 0.3),
        (lb.Column.SUPPORT_R, lb.Direction.BACK, lb.Level.LOW, 0.3),
        (lb.Column.ARM_L, lb.Direction.LEFT_FORWARD, lb.Level.HIGH, 0.2),
        (lb.Column.LEG_R, lb.Direction.RIGHT_BACK, lb.Level.MIDDLE, 0.2),
    ]
    for column, direction, level, mass in cells:
        target[lb.COLUMN_INDEX[column], lb.DIRECTION_INDEX[direction], lb.LEVEL_INDEX[level]] = mass
    return ao.OracleSpec(target=target, r_max=1.0, budget=1), target


@criterion(
    "End-to-end loop: 20 iterations (seed 7): TV improves to golden values, best rating "
    "non-decreasing, reruns byte-identical, resume equals uninterrupted, < 60 s"
)
def test_end_to_end_loop(tmp_path):
    start = time.monotonic()
    spec, target = _acceptance_oracle()
    config = eg.LoopConfig()
    vocab = em.default_vocab()

    session = eg.run_session(config, vocab, ao.make_oracle(spec), 20, seed=7)
    generated = [e for e in session.events if e["kind"] == "generated"]
    assert len(generated) == 20
    tvs = [
        ao.total_variation(lb.attribute_histogram(lb.parse_score(e["payload"]["score"])), target)
        for e in generated
    ]
    assert tvs[-1] <= tvs[0]
    # Golden values from the first verified run of this configuration.
    assert abs(tvs[0] - 1.0) <= 1e-9
    assert abs(tvs[-1] - 0.7) <= 1e-9

    ratings = [e["payload"]["rating"] for e in session.events if e["kind"] == "feedback"]
    best_so_far = -math.inf
    for rating in ratings:
        best_so_far = max(best_so_far, rating)
    assert abs(best_so_far - 0.3) <= 1e-9
    bests = list(itertools.accumulate(ratings, max))
    assert bests == sorted(bests)

    rerun = eg.run_session(config, vocab, ao.make_oracle(spec), 20, seed=7)
    lines = ["\n".join(json.dumps(e, sort_keys=True) for e in s.events) for s in (session, rerun)]
    assert lines[0] == lines[1]

    # Resume: cut the log after the 10th feedback, reload, continue.
    full_lines = [json.dumps(e, sort_keys=True) for e in session.events]
    feedback_positions = [i for i, e in enumerate(session.events) if e["kind"] == "feedback"]
    cut = feedback_positions[9] + 1
    partial = tmp_path / "partial.jsonl"
    partial.write_text("".join(line + "\n" for line in full_lines[:cut]))
    resumed = session_load(partial)
    eg.drive(resumed, ao.make_oracle(spec), 20)
    assert [json.dumps(e, sort_keys=True) for e in resumed.events] == full_lines

    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"end-to-end criterion took {elapsed:.2f}s"

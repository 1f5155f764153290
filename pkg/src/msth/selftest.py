"""Fast invariant checks runnable from an installed package (``msth selftest``).

The pytest suite covers the same ground in more depth; this exists so a
deployed install can be sanity-checked without the test tree.
"""
from __future__ import annotations

import numpy as np

from .coordinator import CoordinatorState, ScaleRequestSet, coordinate, update_emergency_counter
from .health import adaptive_lr, enhancement_estimate, realism_score
from .coordinator import InterventionLedger
from .network import backward, build_model
from .numerics import frobenius_norm, sigmoid, stats
from .regulators import (
    NeuronState, RegulatorConfig, Scale, calcium_error, medium_scale, regulate_calcium, structural_step, suppress,
)


def _checks(rng: np.random.Generator):
    cfg = RegulatorConfig()

    def variance_scaling():
        v = rng.normal(size=7)
        return abs(stats(3.0 * v).var - 9.0 * stats(v).var) <= 1e-9 * max(1.0, 9.0 * stats(v).var)

    def sigmoid_symmetry():
        xs = rng.uniform(-30, 30, size=50)
        return bool(np.all(np.abs(sigmoid(xs) + sigmoid(-xs) - 1.0) <= 1e-12))

    def frobenius_homogeneity():
        w = rng.normal(size=(3, 4))
        return abs(frobenius_norm(-2.5 * w) - 2.5 * frobenius_norm(w)) <= 1e-9 * frobenius_norm(w)

    def suppression_bound():
        a = rng.normal(scale=3.0, size=10)
        return np.max(np.abs(suppress(a, cfg))) <= np.max(np.abs(a))

    def calcium_contraction():
        c = rng.uniform(0, 1, size=3)
        for _ in range(500):
            if calcium_error(c, cfg) <= cfg.calcium_threshold:
                return True
            c_next, _ = regulate_calcium(c, cfg)
            if not calcium_error(c_next, cfg) < calcium_error(c, cfg):
                return False
            c = c_next
        return False

    def scaling_preserves_ratios():
        w = rng.uniform(0.5, 1.5, size=(3, 3))
        st = NeuronState(np.zeros(3), np.full(3, 0.5), activity_accum=2.0, accum_steps=1)
        w2, _, _ = medium_scale(w, st, cfg)
        return np.allclose(w2 / w2[0, 0], w / w[0, 0], rtol=1e-12)

    def structural_factor():
        w = rng.normal(scale=2.0, size=(4, 4))
        w2, out = structural_step(w, NeuronState.initial(4), cfg)
        return out.fired and abs(frobenius_norm(w2) - 0.999 * frobenius_norm(w)) <= 1e-12 * frobenius_norm(w)

    def override_trace():
        st = CoordinatorState()
        for _ in range(3):
            st = update_emergency_counter(st, True)
        granted, st = coordinate(ScaleRequestSet.of(Scale.ULTRA, Scale.FAST, Scale.MEDIUM), st)
        return granted.requested == {Scale.ULTRA} and st.override_active

    def realism_bounds():
        counts = rng.integers(0, 100, size=4)
        s = realism_score(counts, int(rng.integers(0, 2))).score
        return 0.1 <= s <= 0.99

    def enhancement_cap():
        led = InterventionLedger(counts=[5, 1000, 1000, 5], coordination_events=1000)
        return enhancement_estimate(led, 10).total <= 0.05

    def lr_monotone():
        return adaptive_lr(0.5, 0.5) <= adaptive_lr(0.6, 0.5) <= adaptive_lr(0.6, 0.7)

    def gradient_check():
        m = build_model([3, 4, 2], ["tanh", "identity"], seed=int(rng.integers(1 << 30)))
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 2))
        _, g = backward(m, x, y, "mse")
        h = 1e-5
        W = m.layers[0].W
        i, j = 1, 2
        W[i, j] += h
        lp, _ = backward(m, x, y, "mse")
        W[i, j] -= 2 * h
        lm, _ = backward(m, x, y, "mse")
        W[i, j] += h
        fd = (lp - lm) / (2 * h)
        return abs(fd - g.dW[0][i, j]) <= 1e-4 * max(1e-8, abs(fd))

    return [
        ("variance scaling", variance_scaling),
        ("sigmoid symmetry", sigmoid_symmetry),
        ("frobenius homogeneity", frobenius_homogeneity),
        ("suppression never amplifies", suppression_bound),
        ("calcium contraction", calcium_contraction),
        ("synaptic scaling preserves ratios", scaling_preserves_ratios),
        ("structural factor 0.999", structural_factor),
        ("override after 3 emergencies", override_trace),
        ("realism score bounds", realism_bounds),
        ("enhancement cap", enhancement_cap),
        ("adaptive lr monotone", lr_monotone),
        ("gradient vs finite differences", gradient_check),
    ]


def run_selftest(trials: int = 20, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in _checks(rng):
        passed = all(check() for _ in range(trials))
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok

"""Numeric self-checks: fusion-weight gradients against central differences,
and attention-row normalization on seeded forward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import FusionWeights, TransformerStage, fuse_weighted_sum, fuse_weighted_sum_grad

GRAD_TOL = 1e-6
ATTN_TOL = 1e-6
_FD_STEP = 1e-6
# relative error floor: below this magnitude central differences are noise-bound
_REL_FLOOR = 1e-2


@dataclass
class CheckResult:
    name: str
    trials: int
    worst_err: float
    tolerance: float
    worst_case: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.worst_err < self.tolerance

    def summary(self):
        status = "pass" if self.passed else "FAIL"
        return (f"{status} {self.name}: {self.trials} trials, "
                f"worst error {self.worst_err:.3e} (tolerance {self.tolerance:.0e})")


def check_fusion_gradients(trials=100, seed=0, tol=GRAD_TOL):
    """Analytic fusion-weight gradients vs. 64-bit central differences.

    Each trial draws 2-4 inputs, weights with |w| >= 0.1 (the relu kink at
    zero is excluded from the domain; negative weights exercise the clamped
    zero-gradient branch), and a random upstream gradient.
    """
    rng = np.random.default_rng(seed)
    worst, worst_case = 0.0, {}
    for trial in range(trials):
        n = int(rng.integers(2, 5))
        shape = (1, int(rng.integers(1, 5)), int(rng.integers(2, 7)), int(rng.integers(2, 7)))
        w = rng.uniform(0.1, 2.0, size=n)
        w[rng.uniform(size=n) < 0.2] *= -1.0
        inputs = [rng.uniform(-1.0, 1.0, size=shape) for _ in range(n)]
        upstream = rng.uniform(-1.0, 1.0, size=shape)
        ws = FusionWeights(w.copy(), eps=1e-4)
        analytic = fuse_weighted_sum_grad(ws, inputs, upstream)

        for i in range(n):
            def objective(wi):
                shifted = w.copy()
                shifted[i] = wi
                return float(np.sum(upstream * fuse_weighted_sum(FusionWeights(shifted, 1e-4), inputs)))

            numeric = (objective(w[i] + _FD_STEP) - objective(w[i] - _FD_STEP)) / (2 * _FD_STEP)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), _REL_FLOOR)
            if err > worst:
                worst = err
                worst_case = {
                    "trial": trial, "weight_index": i, "weights": w.tolist(),
                    "analytic": float(analytic[i]), "numeric": float(numeric),
                }
    return CheckResult("fusion weight gradients", trials, worst, tol, worst_case)


def check_attention_rows(trials=100, seed=0, tol=ATTN_TOL):
    """Every attention-weight row must sum to 1 on seeded forward passes."""
    rng = np.random.default_rng(seed)
    worst, worst_case = 0.0, {}
    for trial in range(trials):
        heads = int(rng.choice([1, 2, 4]))
        c = heads * int(rng.integers(2, 9))
        h = int(rng.integers(1, 6))
        w = int(rng.integers(1, 6))
        stage = TransformerStage(c, heads=heads, layers=int(rng.integers(1, 3)),
                                 rng=np.random.default_rng(int(rng.integers(0, 2 ** 31))))
        x = rng.uniform(-2.0, 2.0, size=(1, c, h, w)).astype(np.float32)
        for li, attn in enumerate(stage.attention_weights(x)):
            err = float(np.abs(attn.astype(np.float64).sum(axis=-1) - 1.0).max())
            if err > worst:
                worst = err
                worst_case = {"trial": trial, "layer": li, "channels": c, "heads": heads,
                              "tokens": h * w}
    return CheckResult("attention row normalization", trials, worst, tol, worst_case)


def run_all(trials=100, seed=0):
    return [check_fusion_gradients(trials, seed), check_attention_rows(trials, seed)]

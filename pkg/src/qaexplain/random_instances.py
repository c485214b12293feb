"""Seeded random MDPs for property checks against the oracle."""

from __future__ import annotations

import numpy as np

from .mdp import AVERAGE_COST, EVENT_COUNT, STANDARD, ExplicitMdp, QaSpec, ValueFn
from .valuation import _almost_sure_region


def _qa_specs(n_qa: int) -> list[QaSpec]:
    specs = [QaSpec("risk", EVENT_COUNT, ValueFn(0.0), event="incident")]
    specs += [QaSpec(f"q{i}", STANDARD, ValueFn(0.0), unit="units") for i in range(1, n_qa)]
    return specs


def _distribution(rng: np.random.Generator, n: int, support: int) -> np.ndarray:
    idx = rng.choice(n, size=support, replace=False)
    w = rng.integers(1, 10, size=support).astype(float)
    d = np.zeros(n)
    d[idx] = w / w.sum()
    return d


def random_total_cost(rng: np.random.Generator, max_states: int = 6, max_actions: int = 3,
                      n_qa: int | None = None) -> ExplicitMdp:
    """SSP instance: last state is the goal, state 0 the start.

    QA values are drawn on a coarse grid so ties and zero-cost actions occur.
    """
    while True:
        n = int(rng.integers(2, max_states + 1))
        nq = int(n_qa or rng.integers(2, 4))
        trans, qa = [], []
        for s in range(n - 1):
            k = int(rng.integers(1, max_actions + 1))
            trans.append([_distribution(rng, n, int(rng.integers(1, min(3, n) + 1))) for _ in range(k)])
            rows = []
            for _ in range(k):
                v = rng.integers(0, 11, size=nq) / 10.0
                v[0] = rng.integers(0, 6) / 10.0
                rows.append(v)
            qa.append(rows)
        trans.append([])
        qa.append([])
        mdp = ExplicitMdp.from_arrays(trans, qa, goal=[n - 1], qa_specs=_qa_specs(nq),
                                      name=f"random-ssp-{n}")
        inside, _, _ = _almost_sure_region(mdp)
        if inside[0]:
            return mdp


def random_unichain(rng: np.random.Generator, max_states: int = 5, max_actions: int = 3,
                    n_qa: int = 2) -> ExplicitMdp:
    """Average-cost instance where every successor distribution has full
    support, so every deterministic policy induces an irreducible chain."""
    n = int(rng.integers(2, max_states + 1))
    trans, qa = [], []
    for s in range(n):
        k = int(rng.integers(1, max_actions + 1))
        trans.append([_distribution(rng, n, n) for _ in range(k)])
        rows = []
        for _ in range(k):
            v = rng.integers(0, 11, size=n_qa) / 10.0
            v[0] = rng.integers(0, 6) / 10.0
            rows.append(v)
        qa.append(rows)
    alpha = np.full(n, 1.0 / n)
    return ExplicitMdp.from_arrays(trans, qa, alpha=alpha, criterion=AVERAGE_COST,
                                   qa_specs=_qa_specs(n_qa), name=f"random-avg-{n}")

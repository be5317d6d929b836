"""NumPy reference for the Viterbi add-compare-select loop."""

import numpy as np


def transition_tables(order: int, memory: int):
    """Candidate labels and predecessor states for every trellis state.

    A state is the label of the ``memory - 1`` most recent symbols; the branch
    into state ``ns`` with oldest digit ``t`` carries label ``ns + S*t`` and
    leaves state ``label // order``.
    """
    n_states = order ** (memory - 1)
    t = np.arange(order)
    labels = np.arange(n_states)[:, None] + n_states * t[None, :]
    return labels, labels // order


def viterbi_path(metrics, order, memory, init_cost=None):
    """Minimum-cost digit sequence for per-step label costs ``metrics`` (B, M**L).

    Ties go to the lowest predecessor state and, at the end, the lowest
    final state.
    """
    metrics = np.ascontiguousarray(metrics, dtype=np.float64)
    n_steps = metrics.shape[0]
    n_states = order ** (memory - 1)
    if metrics.shape[1] != n_states * order:
        raise ValueError("metric width must be order**memory")
    labels, prev = transition_tables(order, memory)
    cost = np.zeros(n_states) if init_cost is None else np.array(init_cost, dtype=np.float64)
    back = np.empty((n_steps, n_states), dtype=np.int64)
    rows = np.arange(n_states)
    for i in range(n_steps):
        tot = cost[prev] + metrics[i][labels]
        t = np.argmin(tot, axis=1)
        back[i] = t
        cost = tot[rows, t]
    out = np.empty(n_steps, dtype=np.int64)
    if n_steps == 0:
        return out
    ns = int(np.argmin(cost))
    for i in range(n_steps - 1, -1, -1):
        lab = ns + n_states * int(back[i, ns])
        out[i] = lab % order
        ns = lab // order
    return out

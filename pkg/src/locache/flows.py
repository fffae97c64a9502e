"""Small integer transportation solver.

Rows carry a supply, columns a demand, and flow may only travel along
allowed arcs (optionally capacitated). The solver starts from a greedy
northwest fill in natural order and repairs the remainder with shortest
augmenting paths, so the result is deterministic for a given input.
"""

from collections import deque

import numpy as np

__all__ = ["transport", "TransportInfeasible"]


class TransportInfeasible(ValueError):
    """No integral flow meets every supply and demand on the allowed arcs."""


def transport(supply, demand, allowed, capacity=None):
    """Return an integer matrix ``x`` with row sums ``supply`` and column
    sums ``demand`` using only arcs where ``allowed`` is true.

    Parameters
    ----------
    supply, demand : sequence of int
        Non-negative row and column totals with equal sums.
    allowed : array_like of bool, shape (len(supply), len(demand))
    capacity : array_like of int, optional
        Per-arc upper bounds; unbounded when omitted.

    Raises
    ------
    TransportInfeasible
        If the totals differ or no feasible flow exists.
    """
    supply = [int(v) for v in supply]
    demand = [int(v) for v in demand]
    if min(supply + demand, default=0) < 0:
        raise TransportInfeasible("negative supply or demand")
    if sum(supply) != sum(demand):
        raise TransportInfeasible(
            f"supply total {sum(supply)} differs from demand total {sum(demand)}")
    allowed = np.asarray(allowed, dtype=bool)
    n_rows, n_cols = len(supply), len(demand)
    if allowed.shape != (n_rows, n_cols):
        raise ValueError("allowed mask has the wrong shape")
    big = sum(supply) + 1
    if capacity is None:
        cap = np.where(allowed, big, 0).astype(np.int64)
    else:
        cap = np.where(allowed, np.asarray(capacity, dtype=np.int64), 0)

    flow = np.zeros((n_rows, n_cols), dtype=np.int64)
    row_left = list(supply)
    col_left = list(demand)
    arcs = [[j for j in range(n_cols) if cap[i, j] > 0] for i in range(n_rows)]
    col_arcs = [[i for i in range(n_rows) if cap[i, j] > 0] for j in range(n_cols)]

    # greedy northwest start
    for i in range(n_rows):
        for j in arcs[i]:
            if row_left[i] == 0:
                break
            push = min(row_left[i], col_left[j], cap[i, j])
            if push > 0:
                flow[i, j] += push
                row_left[i] -= push
                col_left[j] -= push

    # augmenting paths: row -> col along spare capacity, col -> row along flow
    while any(row_left):
        parent_col = [-1] * n_cols
        parent_row = [-1] * n_rows
        seen_row = [False] * n_rows
        queue = deque()
        for i in range(n_rows):
            if row_left[i] > 0:
                seen_row[i] = True
                queue.append(i)
        sink = -1
        while queue and sink < 0:
            i = queue.popleft()
            for j in arcs[i]:
                if parent_col[j] >= 0 or flow[i, j] >= cap[i, j]:
                    continue
                parent_col[j] = i
                if col_left[j] > 0:
                    sink = j
                    break
                for i2 in col_arcs[j]:
                    if not seen_row[i2] and flow[i2, j] > 0:
                        seen_row[i2] = True
                        parent_row[i2] = j
                        queue.append(i2)
        if sink < 0:
            raise TransportInfeasible("no augmenting path; allowed arcs too sparse")
        # trace back to find the bottleneck
        path = []
        j = sink
        while True:
            i = parent_col[j]
            path.append((i, j))
            if parent_row[i] < 0:
                break
            j = parent_row[i]
        source = path[-1][0]
        push = min(row_left[source], col_left[sink])
        for step, (i, j) in enumerate(path):
            push = min(push, cap[i, j] - flow[i, j])
            if step + 1 < len(path):
                push = min(push, flow[i, parent_row[i]])
        for step, (i, j) in enumerate(path):
            flow[i, j] += push
            if step + 1 < len(path):
                flow[i, parent_row[i]] -= push
        row_left[source] -= push
        col_left[sink] -= push
    return flow

"""Wasserstein distances between grid distributions, and mode classification.

Two backends compute the same quantity: the minimal cost of moving one
grid distribution onto another, with straight-line distance between cell
centers as the ground cost.  The exact backend solves the transportation
linear program; the Sinkhorn backend solves an entropically smoothed
version with epsilon-scaling and dual absorption, which scales to full
100x100 grids where the linear program is out of reach.  Classification
assigns a test distribution the label of its nearest benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

__all__ = [
    "SUPPORT_EPS",
    "TransportPlan",
    "WdMatrix",
    "SinkhornNotConverged",
    "emd_exact",
    "emd_sinkhorn",
    "classify",
    "wd_matrix",
    "save_wd_matrix",
    "load_wd_matrix",
]

SUPPORT_EPS = 1e-12  # cells at or below this mass are dropped before solving
MASS_MISMATCH_TOL = 1e-9
MARGINAL_TOL = 1e-9  # exact plans must reproduce the inputs this closely
EXACT_SUPPORT_CAP = 4096  # per side, i.e. a full 64x64 grid


class SinkhornNotConverged(RuntimeError):
    """Iteration budget exhausted before the marginals matched.

    The achieved L1 marginal violation is carried in .violation.
    """

    def __init__(self, violation: float, iterations: int):
        self.violation = violation
        self.iterations = iterations
        super().__init__(
            f"sinkhorn failed to converge after {iterations} iterations "
            f"(marginal violation {violation:.3e})"
        )


@dataclass
class TransportPlan:
    """Sparse optimal flows: (source cell, target cell, mass) triples.

    Cells are (row, column) indices into the grid; cost is the plan's
    total transport cost.
    """

    flows: list[tuple[tuple[int, int], tuple[int, int], float]]
    cost: float


@dataclass
class WdMatrix:
    """Pairwise distances: rows are benchmarks, columns are test sets."""

    values: np.ndarray
    row_labels: list[str]
    col_labels: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("distance matrix shape must match the label lists")


def _support(dist):
    """Kept cells, their masses, and their center coordinates."""
    g = dist.grid_size
    z1, z2 = dist.cell_centers()
    rows, cols = np.nonzero(dist.masses > SUPPORT_EPS)
    masses = dist.masses[rows, cols]
    xy = np.column_stack([z1[cols], z2[rows]])
    cells = list(zip(rows.tolist(), cols.tolist()))
    return cells, masses, xy


def _check_pair(p_dist, q_dist):
    if p_dist.grid_size != q_dist.grid_size:
        raise ValueError("grid sizes differ")
    if p_dist.z1_bounds != q_dist.z1_bounds or p_dist.z2_bounds != q_dist.z2_bounds:
        raise ValueError("grid bounds differ; normalize jointly before comparing")
    gap = abs(float(p_dist.masses.sum()) - float(q_dist.masses.sum()))
    if gap > MASS_MISMATCH_TOL:
        raise ValueError(f"total masses differ by {gap:.3e}; renormalize upstream")


def _swap_for_symmetry(p_mass, q_mass, p_xy, q_xy) -> bool:
    """True when the pair should be solved with the roles exchanged.

    The distance is symmetric, but the iteration order is not; solving
    every pair in one canonical orientation makes W(P, Q) and W(Q, P)
    bit-identical.
    """
    key_p = (p_mass.size, p_mass.tobytes(), p_xy.tobytes())
    key_q = (q_mass.size, q_mass.tobytes(), q_xy.tobytes())
    return key_p > key_q


def emd_exact(p_dist, q_dist, max_support: int = EXACT_SUPPORT_CAP):
    """Exact Wasserstein distance and optimal plan via the transport LP.

    Supports are sparsified at SUPPORT_EPS and rebalanced to exactly equal
    totals (the dropped mass is at most grid_size^2 * 1e-12).  Raises if a
    support exceeds max_support; big grids belong to the Sinkhorn backend.
    """
    _check_pair(p_dist, q_dist)
    p_cells, p_mass, p_xy = _support(p_dist)
    q_cells, q_mass, q_xy = _support(q_dist)
    swapped = _swap_for_symmetry(p_mass, q_mass, p_xy, q_xy)
    if swapped:
        p_cells, q_cells = q_cells, p_cells
        p_mass, q_mass = q_mass, p_mass
        p_xy, q_xy = q_xy, p_xy
    n, m = len(p_cells), len(q_cells)
    if n == 0 or m == 0:
        raise ValueError("empty support after sparsification")
    if n > max_support or m > max_support:
        raise ValueError(
            f"support sizes {n}x{m} exceed the exact-solver cap {max_support}; "
            "use emd_sinkhorn"
        )
    p = p_mass / p_mass.sum()
    q = q_mass / q_mass.sum()
    # the equality system is rank-deficient by one, so the two totals must
    # agree; nudging the largest cell keeps the distance change below an ulp
    for _ in range(4):
        gap = p.sum() - q.sum()
        if gap == 0.0:
            break
        q[np.argmax(q)] += gap
    cost = cdist(p_xy, q_xy)

    var = np.arange(n * m)
    row_idx = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    col_idx = np.concatenate([var, var])
    a_eq = sparse.csr_matrix(
        (np.ones(2 * n * m), (row_idx, col_idx)), shape=(n + m, n * m)
    )
    b_eq = np.concatenate([p, q])
    # presolve falsely flags balanced instances as infeasible when the
    # marginals span many orders of magnitude; the polytope always contains
    # the product coupling, so skip presolve rather than trust that verdict.
    # 1e-10 is the tightest feasibility tolerance the solver accepts
    res = linprog(
        cost.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={
            "presolve": False,
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if not res.success:
        raise RuntimeError(f"exact transport LP failed: {res.message}")

    flow = np.clip(res.x.reshape(n, m), 0.0, None)
    row_err = float(np.abs(flow.sum(axis=1) - p).sum())
    col_err = float(np.abs(flow.sum(axis=0) - q).sum())
    if max(row_err, col_err) > MARGINAL_TOL:
        raise RuntimeError(
            f"LP plan violates marginals (L1 {max(row_err, col_err):.3e})"
        )
    value = float((flow * cost).sum())
    keep = np.argwhere(flow > 0.0)
    if swapped:
        flows = [(q_cells[j], p_cells[i], float(flow[i, j])) for i, j in keep]
    else:
        flows = [(p_cells[i], q_cells[j], float(flow[i, j])) for i, j in keep]
    return value, TransportPlan(flows=flows, cost=value)


def _sinkhorn_schedule(target: float) -> list[float]:
    # halve from 0.1 down to the requested regularization
    if target >= 0.1:
        return [target]
    out = [0.1]
    while out[-1] / 2.0 > target:
        out.append(out[-1] / 2.0)
    out.append(target)
    return out


_KERNEL_BLOCK_FLOATS = 8_000_000  # ~64 MB temporaries per rebuild block


def _scaled_kernel(alpha, beta, cost, eps, out):
    """out[i, j] = exp((alpha[i] + beta[j] - cost[i, j]) / eps), in row blocks.

    Blockwise so a full 100x100-grid support (10^4 x 10^4 kernel) never
    allocates more than one modest temporary on top of the output buffer.
    """
    block = max(1, _KERNEL_BLOCK_FLOATS // max(cost.shape[1], 1))
    for s in range(0, cost.shape[0], block):
        e = min(s + block, cost.shape[0])
        chunk = out[s:e]
        np.subtract(alpha[s:e, None] + beta[None, :], cost[s:e], out=chunk)
        chunk /= eps
        # transient dual overshoot must not produce inf; absorption fixes it later
        np.minimum(chunk, 500.0, out=chunk)
        np.exp(chunk, out=chunk)
    return out


def _rounded_plan_cost(alpha, beta, cost, eps, p, q, kernel) -> float:
    """Cost of the dual-implied plan projected onto the transport polytope.

    Scales rows then columns down to their targets and patches the leftover
    marginal deficit with a rank-1 completion, so the costed plan satisfies
    both marginals exactly (up to float roundoff).  A feasible plan can
    never undercut the exact optimum, whatever the residual was at stop.
    Works in place on the kernel buffer.
    """
    _scaled_kernel(alpha, beta, cost, eps, kernel)
    row = kernel.sum(axis=1)
    kernel *= np.minimum(1.0, p / np.maximum(row, 1e-300))[:, None]
    col = kernel.sum(axis=0)
    kernel *= np.minimum(1.0, q / np.maximum(col, 1e-300))[None, :]
    err_r = np.maximum(p - kernel.sum(axis=1), 0.0)
    err_c = np.maximum(q - kernel.sum(axis=0), 0.0)
    kernel *= cost
    total = float(kernel.sum())
    deficit = float(err_r.sum())
    if deficit > 1e-15:
        total += float(err_r @ (cost @ err_c)) / deficit
    return total


def emd_sinkhorn(
    p_dist,
    q_dist,
    epsilon: float = 1e-3,
    max_iter: int = 300000,
    tol: float = 1e-6,
) -> float:
    """Entropically regularized transport cost (raw, no debiasing).

    Runs Sinkhorn scaling in the exponential domain with log-domain dual
    absorption, warm-starting each level of an epsilon-halving schedule
    from 0.1 down to the requested epsilon.  Converged means every cell
    of both marginals of the implied plan matches its target mass within
    tol; otherwise SinkhornNotConverged is raised (carrying the violation
    it did reach).  The reported value is the cost of the stopped plan
    rounded onto the transport polytope, so it is always the cost of an
    exactly feasible plan.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_pair(p_dist, q_dist)
    p_cells, p_mass, p_xy = _support(p_dist)
    q_cells, q_mass, q_xy = _support(q_dist)
    if len(p_cells) == 0 or len(q_cells) == 0:
        raise ValueError("empty support after sparsification")
    if _swap_for_symmetry(p_mass, q_mass, p_xy, q_xy):
        p_mass, q_mass = q_mass, p_mass
        p_xy, q_xy = q_xy, p_xy
    p = p_mass / p_mass.sum()
    q = q_mass / q_mass.sum()
    cost = cdist(p_xy, q_xy)

    alpha = np.zeros(p.size)
    beta = np.zeros(q.size)
    log_p = np.log(p)
    log_q = np.log(q)
    absorb_cutoff = 30.0  # |log scaling| beyond this folds into the duals

    schedule = _sinkhorn_schedule(epsilon)
    iters_used = 0
    violation = np.inf
    kernel = np.empty_like(cost)

    for level, eps in enumerate(schedule):
        final = level == len(schedule) - 1
        level_tol = tol if final else max(tol, 1e-4)
        _scaled_kernel(alpha, beta, cost, eps, kernel)
        log_u = np.zeros(p.size)
        log_v = np.zeros(q.size)
        kv = kernel @ np.ones(q.size)
        while iters_used < max_iter:
            iters_used += 1
            log_u = log_p - np.log(np.maximum(kv, 1e-300))
            if np.abs(log_u).max() > absorb_cutoff:
                alpha += eps * log_u
                beta += eps * log_v
                _scaled_kernel(alpha, beta, cost, eps, kernel)
                log_u = np.zeros(p.size)
                log_v = np.zeros(q.size)
                kv = kernel @ np.ones(q.size)
                continue
            u = np.exp(log_u)
            ku = kernel.T @ u
            log_v = log_q - np.log(np.maximum(ku, 1e-300))
            if np.abs(log_v).max() > absorb_cutoff:
                alpha += eps * log_u
                beta += eps * log_v
                _scaled_kernel(alpha, beta, cost, eps, kernel)
                log_u = np.zeros(p.size)
                log_v = np.zeros(q.size)
                kv = kernel @ np.ones(q.size)
                continue
            v = np.exp(log_v)
            kv = kernel @ v
            # worst per-cell deviation across both marginals of the plan
            violation = float(max(np.abs(u * kv - p).max(), np.abs(v * ku - q).max()))
            if violation < level_tol:
                break
        alpha += eps * log_u
        beta += eps * log_v
        if final and violation >= tol:
            raise SinkhornNotConverged(violation, iters_used)

    return _rounded_plan_cost(alpha, beta, cost, schedule[-1], p, q, kernel)


def _backend(name_or_fn, **kw):
    if callable(name_or_fn):
        return name_or_fn
    if name_or_fn == "exact":
        return lambda a, b: emd_exact(a, b, **kw)[0]
    if name_or_fn == "sinkhorn":
        return lambda a, b: emd_sinkhorn(a, b, **kw)
    raise ValueError(f"unknown transport backend {name_or_fn!r}")


def classify(test_dist, benchmarks, backend="sinkhorn", **backend_kw):
    """Label of the benchmark nearest to the test distribution.

    benchmarks is an ordered list of (label, GridDistribution); ties go
    to the earliest entry.  Returns (label, distances) with one distance
    per benchmark in the given order.
    """
    if not benchmarks:
        raise ValueError("no benchmark distributions given")
    fn = _backend(backend, **backend_kw)
    distances = np.array([fn(bench, test_dist) for _, bench in benchmarks])
    winner = int(np.argmin(distances))
    return benchmarks[winner][0], distances


def wd_matrix(benchmarks, tests, backend="sinkhorn", n_jobs: int = 1, **backend_kw) -> WdMatrix:
    """Distance of every benchmark (rows) to every test set (columns).

    n_jobs > 1 computes the pairs in a thread pool; results land by index
    so the matrix is identical regardless of worker count.
    """
    fn = _backend(backend, **backend_kw)
    values = np.empty((len(benchmarks), len(tests)))
    pairs = [(i, j) for i in range(len(benchmarks)) for j in range(len(tests))]
    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = pool.map(lambda ij: fn(benchmarks[ij[0]][1], tests[ij[1]][1]), pairs)
            for (i, j), value in zip(pairs, results):
                values[i, j] = value
    else:
        for i, j in pairs:
            values[i, j] = fn(benchmarks[i][1], tests[j][1])
    return WdMatrix(
        values=values,
        row_labels=[label for label, _ in benchmarks],
        col_labels=[label for label, _ in tests],
    )


def save_wd_matrix(matrix: WdMatrix, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("benchmark\\test," + ",".join(matrix.col_labels) + "\n")
        for label, row in zip(matrix.row_labels, matrix.values):
            fh.write(label + "," + ",".join(format(v, ".17g") for v in row) + "\n")


def load_wd_matrix(path) -> WdMatrix:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[0] != "benchmark\\test":
            raise ValueError(f"{path}: unexpected matrix header {header[0]!r}")
        col_labels = header[1:]
        row_labels = []
        rows = []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            row_labels.append(cells[0])
            rows.append([float(tok) for tok in cells[1:]])
    return WdMatrix(values=np.array(rows), row_labels=row_labels, col_labels=col_labels)

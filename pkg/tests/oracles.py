"""Independent reference implementations used to check the real ones.

Everything here is deliberately naive: exhaustive enumeration and closed
forms only, no shared code with the package under test.
"""

import itertools

import numpy as np
from scipy.stats import multivariate_normal


def integer_masses(masses: np.ndarray, denominator: int) -> np.ndarray:
    """Masses as integer multiples of 1/denominator, validated."""
    scaled = masses * denominator
    rounded = np.rint(scaled)
    if not np.allclose(scaled, rounded, atol=1e-9):
        raise ValueError("masses are not integer multiples of 1/denominator")
    return rounded.astype(int)


def _compositions(total: int, caps: list[int]):
    """All ways to split `total` units over len(caps) slots, slot i <= caps[i]."""
    if len(caps) == 1:
        if total <= caps[0]:
            yield (total,)
        return
    for first in range(min(total, caps[0]) + 1):
        for rest in _compositions(total - first, caps[1:]):
            yield (first,) + rest


def enumerate_emd(p_dist, q_dist, denominator: int = 8) -> float:
    """Brute-force minimum transport cost over all integer-scaled plans.

    Masses must be multiples of 1/denominator.  Enumerates every feasible
    flow matrix whose entries are multiples of 1/denominator and returns
    the cheapest total cost under the Euclidean ground metric between
    cell centers.  Exponential; intended for tiny grids only.
    """
    z1p, z2p = p_dist.cell_centers()
    z1q, z2q = q_dist.cell_centers()
    pr, pc = np.nonzero(p_dist.masses > 0)
    qr, qc = np.nonzero(q_dist.masses > 0)
    p_units = integer_masses(p_dist.masses[pr, pc], denominator)
    q_units = integer_masses(q_dist.masses[qr, qc], denominator)
    p_xy = np.column_stack([z1p[pc], z2p[pr]])
    q_xy = np.column_stack([z1q[qc], z2q[qr]])
    cost = np.sqrt(((p_xy[:, None, :] - q_xy[None, :, :]) ** 2).sum(axis=2))

    n, m = len(p_units), len(q_units)
    best = [np.inf]

    def fill(row: int, remaining_cols: tuple, partial: float):
        if partial >= best[0]:
            return
        if row == n:
            if all(r == 0 for r in remaining_cols):
                best[0] = partial
            return
        for split in _compositions(int(p_units[row]), list(remaining_cols)):
            extra = sum(f * cost[row, j] for j, f in enumerate(split) if f)
            fill(
                row + 1,
                tuple(r - f for r, f in zip(remaining_cols, split)),
                partial + extra,
            )

    fill(0, tuple(int(u) for u in q_units), 0.0)
    if not np.isfinite(best[0]):
        raise ValueError("no feasible plan; masses do not balance")
    return best[0] / denominator


def gaussian_box_mass(mean, cov, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> float:
    """Exact probability a bivariate normal assigns to an axis box."""
    mvn = multivariate_normal(mean=mean, cov=cov)
    (x0, y0), (x1, y1) = lo, hi
    return float(
        mvn.cdf([x1, y1]) - mvn.cdf([x0, y1]) - mvn.cdf([x1, y0]) + mvn.cdf([x0, y0])
    )


def mixture_box_mass(points: np.ndarray, h: np.ndarray) -> float:
    """Integral over the unit square of the KDE mixture with bandwidth h.

    The kernel covariance is h @ h.T, matching a density built from
    kernels N(x; point, h h^T) averaged over points.
    """
    cov = h @ h.T
    return float(
        np.mean([gaussian_box_mass(pt, cov) for pt in np.asarray(points)])
    )


def kl_standard_normal(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Closed-form KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over dims."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    return float(0.5 * np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar))


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))

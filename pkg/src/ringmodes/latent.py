"""Latent-plane analysis: trajectories, joint scaling, and grid densities.

A trained encoder turns each window into a latent mean; the means of one
dataset form a trajectory.  Trajectories that will be compared are scaled
jointly onto the unit square, turned into densities with a Gaussian kernel
(Scott's bandwidth rule), and discretized on a fixed square grid so the
transport machinery can compare them cell by cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatentTrajectory",
    "KdeConfig",
    "GridDistribution",
    "embed_dataset",
    "joint_frame",
    "apply_frame",
    "normalize_joint",
    "scott_factor",
    "scott_bandwidth",
    "kde_density",
    "gkde",
    "save_trajectory",
    "load_trajectory",
    "save_grid",
    "load_grid",
    "hull_overlap_area",
]

MASS_TOL = 1e-12
COV_REGULARIZER = 1e-12  # times trace, added to the diagonal before the sqrt


@dataclass
class LatentTrajectory:
    """Ordered latent points for one dataset: points is (n, 2)."""

    points: np.ndarray
    mode_label: str = ""
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("trajectory points must have shape (n, 2)")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("trajectory contains non-finite points")
        if self.timestamps is None:
            self.timestamps = np.arange(self.points.shape[0], dtype=float)
        else:
            self.timestamps = np.asarray(self.timestamps, dtype=float)
            if self.timestamps.shape != (self.points.shape[0],):
                raise ValueError("one timestamp per point required")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class KdeConfig:
    """Grid size and optional bandwidth override.

    bandwidth may be a 2x2 matrix or a scalar (isotropic); None selects
    Scott's rule from the data.  scalar_bandwidth_kernel evaluates the
    kernel with a single width det(h)^(1/2) on both axes instead of the
    full bandwidth matrix.
    """

    grid_size: int = 100
    bandwidth: float | np.ndarray | None = None
    scalar_bandwidth_kernel: bool = False

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")


@dataclass
class GridDistribution:
    """Probability masses on a square grid over a rectangle.

    masses[i, j] is the mass of the cell in row i (second latent
    coordinate, ascending) and column j (first coordinate, ascending).
    Masses are non-negative and sum to one within 1e-12.
    """

    masses: np.ndarray
    z1_bounds: tuple[float, float] = (0.0, 1.0)
    z2_bounds: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.ndim != 2 or self.masses.shape[0] != self.masses.shape[1]:
            raise ValueError("grid masses must be square")
        if not np.all(np.isfinite(self.masses)) or np.any(self.masses < 0):
            raise ValueError("grid masses must be finite and non-negative")
        if abs(float(self.masses.sum()) - 1.0) > MASS_TOL:
            raise ValueError("grid masses must sum to 1 within 1e-12")
        for lo, hi in (self.z1_bounds, self.z2_bounds):
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValueError("grid bounds must be finite with hi > lo")

    @property
    def grid_size(self) -> int:
        return self.masses.shape[0]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(z1 centers by column, z2 centers by row)."""
        g = self.grid_size
        lo1, hi1 = self.z1_bounds
        lo2, hi2 = self.z2_bounds
        idx = (np.arange(g) + 0.5) / g
        return lo1 + idx * (hi1 - lo1), lo2 + idx * (hi2 - lo2)


def embed_dataset(model, windows, mode_label: str | None = None, times=None) -> LatentTrajectory:
    """Encode every window to its latent mean, in the order given.

    times defaults to each window's start index when the windows carry
    one, else to 0, 1, 2, ...
    """
    if len(windows) == 0:
        raise ValueError("cannot embed an empty window list")
    xs = np.stack([np.asarray(getattr(w, "data", w), dtype=float) for w in windows])
    mu, _ = model.encode_batch(xs)
    if mode_label is None:
        mode_label = getattr(windows[0], "source_label", "") or ""
    if times is None:
        starts = [getattr(w, "start_index", None) for w in windows]
        if all(s is not None for s in starts):
            times = np.array(starts, dtype=float)
    return LatentTrajectory(points=mu, mode_label=mode_label, timestamps=times)


def joint_frame(point_sets: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis (lo, hi) over the union of all point sets."""
    if not point_sets:
        raise ValueError("joint_frame needs at least one point set")
    stacked = np.concatenate([np.asarray(p, dtype=float) for p in point_sets], axis=0)
    if stacked.ndim != 2 or stacked.shape[1] != 2:
        raise ValueError("point sets must have shape (n, 2)")
    if not np.all(np.isfinite(stacked)):
        raise ValueError("point sets contain non-finite values")
    return stacked.min(axis=0), stacked.max(axis=0)


def apply_frame(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Affine map of the frame onto the unit square; flat axes go to 0.5."""
    points = np.asarray(points, dtype=float)
    span = hi - lo
    out = np.empty_like(points)
    for axis in range(2):
        if span[axis] > 0:
            out[:, axis] = (points[:, axis] - lo[axis]) / span[axis]
        else:
            out[:, axis] = 0.5
    return out


def normalize_joint(point_sets: list[np.ndarray]) -> list[np.ndarray]:
    """Min-max scale all sets onto [0, 1]^2 with one shared frame.

    The frame comes from the union of the sets, so relative geometry
    between sets is preserved; a degenerate axis maps to 0.5.
    """
    lo, hi = joint_frame(point_sets)
    return [apply_frame(p, lo, hi) for p in point_sets]


def scott_factor(n: int, d: int = 2) -> float:
    """Scott's rule bandwidth factor n**(-1/(d+4))."""
    if n < 1:
        raise ValueError("need at least one sample")
    return float(n) ** (-1.0 / (d + 4))


def scott_bandwidth(points: np.ndarray) -> np.ndarray:
    """Scott's rule matrix bandwidth: factor times the principal sqrt of cov.

    The covariance gets 1e-12 * trace added to its diagonal first, so a
    rank-deficient cloud (all points on a line) still yields a usable,
    positive-definite bandwidth.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise ValueError("scott_bandwidth expects at least two 2-D points")
    cov = np.cov(points.T)
    tr = float(np.trace(cov))
    if tr <= 0.0:
        raise ValueError("degenerate point cloud: zero covariance")
    cov = cov + COV_REGULARIZER * tr * np.eye(2)
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return scott_factor(points.shape[0]) * root


def kde_density(
    points: np.ndarray,
    h: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    scalar_bandwidth_kernel: bool = False,
) -> np.ndarray:
    """Raw Gaussian kernel density on the grid y (rows) by x (columns).

    The kernel is the bivariate normal with covariance h h^T, so the
    density integrates to one over the whole plane.  The scalar variant
    replaces the matrix with the single width det(h)^(1/2) applied
    isotropically.
    """
    points = np.asarray(points, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.shape == ():
        h = float(h) * np.eye(2)
    if h.shape != (2, 2):
        raise ValueError("bandwidth must be scalar or 2x2")
    det_h = abs(float(np.linalg.det(h)))
    if det_h <= 0.0:
        raise ValueError("bandwidth matrix is singular")
    if scalar_bandwidth_kernel:
        s2 = det_h  # (det h)^(1/2) squared
        hinv = np.eye(2) / s2
        norm = 1.0 / (2.0 * np.pi * s2)
    else:
        cov = h @ h.T
        hinv = np.linalg.inv(cov)
        norm = 1.0 / (2.0 * np.pi * det_h)
    a, b, c = hinv[0, 0], hinv[0, 1], hinv[1, 1]

    n = points.shape[0]
    out = np.empty((y.size, x.size))
    px = points[:, 0][None, :]
    py = points[:, 1]
    for i, yi in enumerate(y):
        dx = x[:, None] - px  # (n_x, n)
        dy = yi - py  # (n,)
        q = a * dx * dx + 2.0 * b * dx * dy[None, :] + c * dy[None, :] ** 2
        out[i] = np.exp(-0.5 * q).sum(axis=1)
    return norm / n * out


def gkde(points: np.ndarray, cfg: KdeConfig | None = None) -> GridDistribution:
    """Kernel density of jointly normalized points on the unit-square grid.

    Evaluates the raw density at every cell center and renormalizes the
    cell values to a probability distribution.  Points must already lie in
    [0, 1]^2 (see normalize_joint).
    """
    cfg = cfg or KdeConfig()
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise ValueError("gkde expects at least two 2-D points")
    if points.min() < -1e-9 or points.max() > 1.0 + 1e-9:
        raise ValueError("points must be normalized into [0, 1]^2 before gkde")
    h = cfg.bandwidth if cfg.bandwidth is not None else scott_bandwidth(points)
    g = cfg.grid_size
    centers = (np.arange(g) + 0.5) / g
    dens = kde_density(points, h, centers, centers, cfg.scalar_bandwidth_kernel)
    total = float(dens.sum())
    if total <= 0.0:
        raise ValueError("density vanished on the grid")
    return GridDistribution(masses=dens / total)


def block_pool(dist: GridDistribution, factor: int) -> GridDistribution:
    """Sum k-by-k blocks of cells into one coarser grid cell.

    Pooling both sides of a transport comparison by the same factor
    perturbs the distance by at most one pooled-cell diagonal, while the
    per-iteration cost of the solvers drops by factor**4.
    """
    if factor < 1:
        raise ValueError("pool factor must be >= 1")
    if factor == 1:
        return dist
    g = dist.grid_size
    if g % factor:
        raise ValueError(f"pool factor {factor} does not divide grid size {g}")
    coarse = g // factor
    masses = dist.masses.reshape(coarse, factor, coarse, factor).sum(axis=(1, 3))
    return GridDistribution(masses=masses, z1_bounds=dist.z1_bounds, z2_bounds=dist.z2_bounds)


# ---------------------------------------------------------------------------
# disk formats


def _fmt(v: float) -> str:
    return format(v, ".17g")


def save_trajectory(traj: LatentTrajectory, path) -> None:
    """idx,z1,z2 rows in trajectory order."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("idx,z1,z2\n")
        for i, (z1, z2) in enumerate(traj.points):
            fh.write(f"{i},{_fmt(z1)},{_fmt(z2)}\n")


def load_trajectory(path, mode_label: str = "") -> LatentTrajectory:
    pts = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "idx,z1,z2":
            raise ValueError(f"{path}: unexpected trajectory header {header!r}")
        for line in fh:
            _, z1, z2 = line.strip().split(",")
            pts.append((float(z1), float(z2)))
    return LatentTrajectory(points=np.array(pts).reshape(-1, 2), mode_label=mode_label)


def save_grid(dist: GridDistribution, path) -> None:
    """Plain G x G CSV of masses, rows in ascending second-coordinate order."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for row in dist.masses:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_grid(path) -> GridDistribution:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            if line.strip():
                rows.append([float(tok) for tok in line.strip().split(",")])
    return GridDistribution(masses=np.array(rows))


def hull_overlap_area(points_a: np.ndarray, points_b: np.ndarray) -> float:
    """Area of the intersection of the two convex hulls (0 when disjoint)."""
    from shapely.geometry import MultiPoint

    hull_a = MultiPoint(np.asarray(points_a, dtype=float)).convex_hull
    hull_b = MultiPoint(np.asarray(points_b, dtype=float)).convex_hull
    return float(hull_a.intersection(hull_b).area)

"""Open-set verification of a single enrolled subject.

Enrollment standardises the subject's own feature vectors, reduces them with
PCA, splits them into density clusters with a grid/wavelet clusterer and gives
each cluster a regularised covariance and a distance threshold. A test period
is accepted when it falls within the threshold of at least one cluster.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, ndimage
from scipy.interpolate import CubicSpline

from .errors import EmptyInput, InsufficientData, NotPositiveDefinite, TooFewPoints
from .features import FeatureVector
from .identification import Standardizer
from .segmentation import Morphology

FORMAT = "cardioid-auth"
VERSION = 1

PCA_VARIANCE = 0.95
COV_RIDGE = 1e-6
TAU_PERCENTILE = 95.0
SMALL_CLUSTER = 20
SMALL_CLUSTER_SLACK = 1.1
MIN_ENROLL_PERIODS = 20
MIN_MORPHOLOGY_SAMPLES = 3
GRID_CELLS = 32
GRID_MARGIN = 0.05
MAX_GRID_DIMS = 3
OUTLIER = -1


# ---------------------------------------------------------------- PCA


@dataclass
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # d x m, orthonormal columns
    explained: np.ndarray  # variance fraction of every eigen-direction, descending

    @property
    def m(self) -> int:
        return self.components.shape[1]

    def project(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def back_project(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) @ self.components.T + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.ravel().tolist(),
            "shape": list(self.components.shape),
            "explained": self.explained.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["mean"]),
            np.asarray(d["components"]).reshape(d["shape"]),
            np.asarray(d["explained"]),
        )


def fit_pca(X, variance: float = PCA_VARIANCE) -> PcaBasis:
    """Principal axes of ``X`` (rows are samples), keeping the fewest that reach ``variance``.

    ``X`` may also be a list of FeatureVectors. No scaling is applied here; the
    enrollment code standardises before calling.
    """
    if len(X) and isinstance(X[0], FeatureVector):
        X = np.stack([fv.values for fv in X])
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < MIN_MORPHOLOGY_SAMPLES:
        raise InsufficientData(f"PCA needs at least {MIN_MORPHOLOGY_SAMPLES} samples")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False).reshape(X.shape[1], X.shape[1])
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = np.clip(evals[::-1], 0.0, None), evecs[:, ::-1]
    total = evals.sum()
    if total <= 0:
        explained = np.zeros_like(evals)
        explained[0] = 1.0
    else:
        explained = evals / total
    m = int(np.searchsorted(np.cumsum(explained), variance - 1e-12) + 1)
    m = min(m, X.shape[1])
    # fix signs so that the largest loading of each axis is positive
    comps = evecs[:, :m]
    signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(m)])
    return PcaBasis(mean, comps * np.where(signs == 0, 1.0, signs), explained)


# ---------------------------------------------------------------- WaveCluster


def _haar_approx(counts: np.ndarray) -> np.ndarray:
    """One level of the separable Haar approximation (2x down-sampling per axis)."""
    out = counts
    for ax in range(counts.ndim):
        if out.shape[ax] % 2:
            pad = [(0, 0)] * out.ndim
            pad[ax] = (0, 1)
            out = np.pad(out, pad)
        a = np.take(out, np.arange(0, out.shape[ax], 2), axis=ax)
        b = np.take(out, np.arange(1, out.shape[ax], 2), axis=ax)
        out = (a + b) / np.sqrt(2.0)
    return out


def wavecluster(
    points,
    grid_cells_per_dim: int | None = None,
    density_threshold: float | None = None,
    reach_cells: float = 2.0,
    bridge_cells: int = 1,
) -> np.ndarray:
    """Grid-density clustering; returns a label per point, ``-1`` for outliers.

    Only the first three coordinates are gridded, so callers should pass points
    whose leading axes carry the most variance (PCA scores). The grid defaults
    to :func:`enrollment_grid_cells` for the sample size. Kept cells separated
    by at most ``bridge_cells`` dropped cells join one component, which stops
    sampling noise at a cloud's rim from splitting off islands. Labels are
    numbered from 0 by first appearance in ``points``.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0:
        raise EmptyInput("no points to cluster")
    if not np.all(np.isfinite(P)):
        raise ValueError("points must be finite")
    P = P[:, :MAX_GRID_DIMS]
    k = P.shape[1]

    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    lo = lo - GRID_MARGIN * span
    width = span * (1 + 2 * GRID_MARGIN)
    G = enrollment_grid_cells(P.shape[0], k) if grid_cells_per_dim is None else int(grid_cells_per_dim)
    cell = np.clip(np.floor((P - lo) / width * G).astype(int), 0, G - 1)
    counts = np.zeros((G,) * k)
    np.add.at(counts, tuple(cell.T), 1.0)

    smooth = _haar_approx(counts)
    coarse = cell // 2
    nonzero = smooth[smooth > 0]
    thr = 1.5 * nonzero.mean() if density_threshold is None else density_threshold
    kept = smooth >= thr
    if not kept.any():
        kept = smooth >= nonzero.max()
    # face-adjacent components of the kept cells after closing small gaps
    grown = ndimage.binary_dilation(kept, iterations=bridge_cells) if bridge_cells > 0 else kept
    comp, _ = ndimage.label(grown)
    comp = np.where(kept, comp, 0)

    # dropped cells borrow the component of the nearest kept cell within reach
    dist, nearest = ndimage.distance_transform_edt(~kept, return_indices=True)
    cell_label = comp[tuple(nearest)]
    cell_label = np.where(dist <= reach_cells, cell_label, 0)

    raw = cell_label[tuple(coarse.T)]
    labels = np.full(P.shape[0], OUTLIER)
    remap: dict[int, int] = {}
    for i, r in enumerate(raw):
        if r > 0:
            labels[i] = remap.setdefault(int(r), len(remap))
    return labels


def enrollment_grid_cells(n_points: int, dims: int) -> int:
    """Default grid resolution for a sample of ``n_points``.

    About two points per smoothed cell of the bounding box, with 4 to 16
    smoothed cells per axis. Together with gap bridging this keeps a single
    cloud whole while leaving room between separated clouds.
    """
    k = min(dims, MAX_GRID_DIMS)
    coarse = int(np.floor((n_points / 2.0) ** (1.0 / k)))
    return 2 * int(np.clip(coarse, 4, GRID_CELLS // 2))


# ---------------------------------------------------------------- clusters


def augment_cluster(points, target_count: int) -> np.ndarray:
    """Pad a small cluster with points on a spline through its members.

    Members are ordered along their first principal axis and parameterised by
    cumulative arc length. Every round inserts the spline value at the midpoint
    of each parameter interval, which keeps symmetric clouds symmetric. The
    original points come first, unchanged.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] < 2:
        raise TooFewPoints("need at least two points to augment")
    if P.shape[0] >= target_count:
        return P.copy()
    c = P - P.mean(axis=0)
    axis = np.linalg.svd(c, full_matrices=False)[2][0]
    order = np.argsort(c @ axis, kind="stable")
    path = P[order]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    keep = np.concatenate([[True], np.diff(s) > 0])
    s, path = s[keep], path[keep]
    if s.size < 2:
        # all members coincide; copies are the only points on the "curve"
        return np.vstack([P, np.repeat(P[:1], target_count - P.shape[0], axis=0)])
    spline = CubicSpline(s, path, axis=0)
    knots = s
    extra = []
    while P.shape[0] + len(extra) < target_count:
        mids = 0.5 * (knots[1:] + knots[:-1])
        extra.extend(spline(mids))
        knots = np.sort(np.concatenate([knots, mids]))
    return np.vstack([P, np.asarray(extra)])


def mahalanobis_distance(x, mu, cov) -> float:
    """sqrt((x-mu)^T cov^-1 (x-mu)) through a Cholesky factor of ``cov``."""
    try:
        L = linalg.cholesky(np.asarray(cov, dtype=float), lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefinite("covariance is not positive definite") from None
    return _chol_distance(np.asarray(x, dtype=float) - np.asarray(mu, dtype=float), L)


def _chol_distance(diff: np.ndarray, L: np.ndarray) -> float | np.ndarray:
    z = linalg.solve_triangular(L, np.atleast_2d(diff).T, lower=True)
    d = np.sqrt(np.sum(z * z, axis=0))
    return float(d[0]) if np.ndim(diff) == 1 else d


def regularize(cov: np.ndarray, ridge: float = COV_RIDGE) -> np.ndarray:
    m = cov.shape[0]
    tr = np.trace(cov)
    return cov + ridge * (tr / m if tr > 0 else 1.0) * np.eye(m)


@dataclass
class AuthCluster:
    mean: np.ndarray
    cov: np.ndarray  # regularised
    tau: float
    n_members: int
    augmented: bool = False
    metric: str = "mahalanobis"
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float).reshape(self.mean.size, self.mean.size)
        if self.metric == "mahalanobis":
            try:
                self._chol = linalg.cholesky(self.cov, lower=True)
            except linalg.LinAlgError:
                raise NotPositiveDefinite("cluster covariance is not positive definite") from None

    def distance(self, X) -> float | np.ndarray:
        diff = np.asarray(X, dtype=float) - self.mean
        if self.metric == "euclidean":
            d = np.linalg.norm(np.atleast_2d(diff), axis=1)
            return float(d[0]) if diff.ndim == 1 else d
        return _chol_distance(diff, self._chol)

    def ratio(self, x) -> float:
        d = self.distance(x)
        if self.tau > 0:
            return d / self.tau
        return 0.0 if d == 0 else np.inf

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "cov": self.cov.ravel().tolist(),
            "tau": self.tau,
            "n_members": self.n_members,
            "augmented": self.augmented,
            "metric": self.metric,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["cov"]), float(d["tau"]), int(d["n_members"]),
                   bool(d["augmented"]), d["metric"])


def mahalanobis(x, cluster: AuthCluster) -> float:
    """Distance of ``x`` to a cluster under its regularised covariance."""
    x = np.asarray(x, dtype=float)
    if x.shape != cluster.mean.shape:
        raise ValueError(f"point has {x.size} dims, cluster has {cluster.mean.size}")
    return _chol_distance(x - cluster.mean, cluster._chol)


def build_cluster(
    members: np.ndarray,
    metric: str = "mahalanobis",
    tau_percentile: float = TAU_PERCENTILE,
    ridge: float = COV_RIDGE,
) -> AuthCluster:
    """Centroid, regularised covariance and acceptance threshold for one cluster.

    The threshold is taken over the real members only; spline points exist to
    make the covariance estimable, not to widen the acceptance region.
    """
    members = np.atleast_2d(members)
    m = members.shape[1]
    pts = members
    augmented = False
    if metric == "mahalanobis" and members.shape[0] <= m + 1:
        pts = augment_cluster(members, m + 2)
        augmented = True
    mean = pts.mean(axis=0)
    cov = regularize(np.cov(pts, rowvar=False).reshape(m, m), ridge)
    c = AuthCluster(mean, cov, 0.0, members.shape[0], augmented, metric)
    if members.shape[0] < SMALL_CLUSTER:
        c.tau = float(np.max(c.distance(members)) * SMALL_CLUSTER_SLACK)
    elif metric == "mahalanobis" and not augmented:
        c.tau = float(np.percentile(loo_mahalanobis(members, cov - np.cov(members, rowvar=False).reshape(m, m)), tau_percentile))
    else:
        c.tau = float(np.percentile(c.distance(members), tau_percentile))
    return c


def loo_mahalanobis(X: np.ndarray, ridge_matrix: np.ndarray) -> np.ndarray:
    """Distance of each row to the mean and covariance of the other rows.

    In-sample distances are biased low when the dimension is a sizeable
    fraction of the sample count, so thresholds drawn from them reject too many
    fresh genuine periods. The leave-one-out value follows from a rank-one
    update of the scatter matrix; ``ridge_matrix`` is added to every
    leave-one-out covariance unchanged.
    """
    n = X.shape[0]
    if n < 3:
        raise TooFewPoints("leave-one-out distances need at least 3 points")
    R = X - X.mean(axis=0)
    B = R.T @ R / (n - 2) + ridge_matrix
    try:
        L = linalg.cholesky(B, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefinite("scatter matrix is not positive definite") from None
    q = np.sum(linalg.solve_triangular(L, R.T, lower=True) ** 2, axis=0)
    c = n / ((n - 1) * (n - 2))
    denom = np.maximum(1.0 - c * q, 1e-12)
    return np.sqrt((n / (n - 1)) ** 2 * q / denom)


# ---------------------------------------------------------------- profiles


@dataclass
class MorphologyProfile:
    scaler: Standardizer
    basis: PcaBasis
    clusters: list[AuthCluster]

    def score(self, values: np.ndarray) -> float:
        z = self.basis.project(self.scaler(values))
        return min(c.ratio(z) for c in self.clusters)

    def to_dict(self) -> dict:
        return {
            "scaler": self.scaler.to_dict(),
            "basis": self.basis.to_dict(),
            "clusters": [c.to_dict() for c in self.clusters],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Standardizer.from_dict(d["scaler"]), PcaBasis.from_dict(d["basis"]),
                   [AuthCluster.from_dict(c) for c in d["clusters"]])


@dataclass
class AuthProfile:
    subject_id: str | None
    morphologies: dict  # Morphology -> MorphologyProfile

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "subject_id": self.subject_id,
            "morphologies": {m.value: p.to_dict() for m, p in sorted(self.morphologies.items(), key=lambda kv: kv[0].value)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuthProfile":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError(f"not a {FORMAT} v{VERSION} profile")
        return cls(d["subject_id"], {Morphology(m): MorphologyProfile.from_dict(p) for m, p in d["morphologies"].items()})


def _identity_scaler(d: int) -> Standardizer:
    return Standardizer(np.zeros(d), np.ones(d))


def enroll(
    train: Sequence[FeatureVector],
    subject_id: str | None = None,
    metric: str = "mahalanobis",
    multi_cluster: bool = True,
    tau_percentile: float = TAU_PERCENTILE,
    pca_variance: float = PCA_VARIANCE,
    standardize: bool = True,
    grid_cells_per_dim: int | None = None,
    min_periods: int = MIN_ENROLL_PERIODS,
) -> AuthProfile:
    """Build a verification profile from one subject's periods.

    ``metric`` is ``"mahalanobis"`` or ``"euclidean"``; ``multi_cluster=False``
    treats every morphology as one cluster. The grid resolution defaults to
    :func:`enrollment_grid_cells` for the sample size.
    """
    if metric not in ("mahalanobis", "euclidean"):
        raise ValueError("metric must be 'mahalanobis' or 'euclidean'")
    if len(train) < min_periods:
        raise InsufficientData(f"enrollment needs at least {min_periods} periods, got {len(train)}")
    groups: dict[Morphology, list[np.ndarray]] = defaultdict(list)
    for fv in train:
        if fv.morphology.accepted:
            groups[fv.morphology].append(fv.values)

    profiles = {}
    for morph, rows in sorted(groups.items(), key=lambda kv: kv[0].value):
        if len(rows) < MIN_MORPHOLOGY_SAMPLES:
            continue
        X = np.stack(rows)
        scaler = Standardizer.fit(X) if standardize else _identity_scaler(X.shape[1])
        basis = fit_pca(scaler(X), pca_variance)
        Z = basis.project(scaler(X))

        groups_z = [Z]
        if multi_cluster:
            labels = wavecluster(Z, grid_cells_per_dim)
            groups_z = [Z[labels == lab] for lab in range(labels.max() + 1)]
            groups_z = [g for g in groups_z if len(g) >= 2]
            if not groups_z:
                groups_z = [Z]
        clusters = [build_cluster(g, metric, tau_percentile) for g in groups_z]
        profiles[morph] = MorphologyProfile(scaler, basis, clusters)

    if not profiles:
        raise InsufficientData(f"no morphology has {MIN_MORPHOLOGY_SAMPLES} or more periods")
    return AuthProfile(subject_id, profiles)


def verify(profile: AuthProfile, fv: FeatureVector) -> tuple[bool, float]:
    """Accept when some cluster's distance/threshold ratio is at most 1."""
    mp = profile.morphologies.get(fv.morphology)
    if mp is None or mp.scaler.mean.size != fv.dims:
        return False, float("inf")
    r = float(mp.score(fv.values))
    return bool(r <= 1.0), r

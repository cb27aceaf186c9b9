"""Truncated r-separated sequences and r-lattices in the pseudo-hyperbolic metric.

Lattices are built by first-fit greedy selection from a seeded scrambled Sobol
stream mapped to ``{|x| <= R}``.  The radius is drawn uniformly with respect to
the invariant measure ``tau`` (lattice points are ``tau``-uniform), so the
stream is dense exactly where the lattice is.  The stream is consumed in
blocks until ``FINAL_BLOCK`` consecutive in-region candidates are all covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from . import geometry as geo
from .errors import DomainError
from .framing import read_frame, write_frame
from .quadrature import tau_ball_volume

FIRST_BLOCK = 256
MAX_BLOCK = 1 << 16
#: This many consecutive in-region candidates without an acceptance end the stream.
FINAL_BLOCK = 1 << 18
MAX_STREAM = 1 << 27
#: Growth exponent separating "bounded" from "divergent" partial sums.
GAMMA_EXPONENT_THRESHOLD = 0.125
GAMMA_RATIO_THRESHOLD = 1.25


@dataclass
class SeparatedSet:
    points: np.ndarray
    r: float
    R_max: float
    seed: int = 0
    covering_verified: bool = False
    _tree: object = field(default=None, repr=False, compare=False)

    @property
    def n(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def weights(self):
        """``1 - |a_m|^2`` per point."""
        return geo.one_minus_norm_sq(self.points)


# ---------------------------------------------------------------------------
# candidate stream


class _TauRadius:
    """Inverse of the ``tau``-volume CDF on ``[0, R]``."""

    def __init__(self, n, R):
        self.n, self.R = n, R
        if n == 2:
            self.total = R * R / (1.0 - R * R)
        else:
            # tabulate on radii whose gaps shrink toward R, then interpolate in log-volume
            grid = R * (1.0 - np.geomspace(1.0, 1e-9, 4000))
            grid = np.unique(np.concatenate([[0.0], grid, [R]]))
            vols = np.array([tau_ball_volume(n, float(t), order=200) for t in grid])
            self.grid, self.vols = grid, vols
            self.total = vols[-1]

    def __call__(self, u):
        v = u * self.total
        if self.n == 2:
            return np.sqrt(v / (1.0 + v))
        return np.interp(v, self.vols, self.grid)


def candidate_stream(n, R, seed):
    """Yield blocks of candidate points in ``{|x| <= R}`` (sizes double up to ``MAX_BLOCK``)."""
    if not 0.0 < R < 1.0:
        raise DomainError(f"truncation radius {R} must lie in (0, 1)")
    dims = 2 if n == 2 else n + 1
    sob = qmc.Sobol(d=dims, scramble=True, seed=np.random.default_rng(seed))
    radius = _TauRadius(n, R)
    size = FIRST_BLOCK
    produced = 0
    while produced < MAX_STREAM:
        u = sob.random(size)
        rad = radius(u[:, 0])
        if n == 2:
            ang = 2.0 * np.pi * u[:, 1]
            direction = np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            g = norm.ppf(np.clip(u[:, 1:], 1e-15, 1.0 - 1e-15))
            direction = g / np.linalg.norm(g, axis=1, keepdims=True)
        yield np.minimum(rad, R)[:, None] * direction
        produced += size
        size = min(2 * size, MAX_BLOCK)


# ---------------------------------------------------------------------------
# neighbour queries


def pseudo_ball_arrays(x, r):
    """Euclidean centers and radii of ``E_r(x)`` for each row of ``x``."""
    x2 = geo.norm_sq(x)
    denom = 1.0 - x2 * r * r
    return ((1.0 - r * r) / denom)[:, None] * x, geo.one_minus_norm_sq(x) * r / denom


def pseudo_neighbors(tree, points, queries, r, k=8):
    """Indices ``(P, k)`` of lattice points with ``rho(query, a) < r`` (``-1`` pads).

    Lattice point ``a`` is within ``rho < r`` of ``x`` iff it lies in the
    Euclidean ball ``E_r(x)``; nearest neighbours of the ball's center are
    pulled until the farthest one leaves that ball.
    """
    queries = np.atleast_2d(queries)
    m = points.shape[0]
    centers, radii = pseudo_ball_arrays(queries, r)
    k = min(k, m)
    while True:
        dist, idx = tree.query(centers, k=k)
        dist, idx = dist.reshape(len(queries), k), idx.reshape(len(queries), k)
        if k == m or np.all(dist[:, -1] > radii * (1.0 + 1e-9)):
            break
        k = min(2 * k, m)
    cand = dist <= radii[:, None] * (1.0 + 1e-9)
    out = np.full(idx.shape, -1)
    rows, cols = np.nonzero(cand)
    if rows.size:
        rr = geo._rho(queries[rows], points[idx[rows, cols]], geo.bracket)
        keep = rr < r
        out[rows[keep], cols[keep]] = idx[rows[keep], cols[keep]]
    return out


# ---------------------------------------------------------------------------
# greedy construction


def _first_fit(candidates, r, start):
    """Sequential first-fit among ``candidates`` (already clear of ``start``)."""
    accepted = []
    for x in candidates:
        if accepted:
            acc = np.asarray(accepted)
            if np.min(geo._rho(acc, x[None, :], geo.bracket)) < r:
                continue
        accepted.append(x)
    return accepted


def _clear(tree, points, x, r):
    """Mask of candidates with no lattice point at ``rho < r``.

    The nearest lattice point to the center of ``E_r(x)`` decides, except in
    a thin band around the ball's radius where ``rho`` is evaluated exactly.
    """
    centers, radii = pseudo_ball_arrays(x, r)
    dist, idx = tree.query(centers, k=1)
    clear = dist > radii * (1.0 + 1e-9)
    band = np.flatnonzero(~clear & (dist >= radii * (1.0 - 1e-9)))
    if band.size:
        hits = pseudo_neighbors(tree, points, x[band], r)
        clear[band] = np.all(hits < 0, axis=1)
    return clear


def greedy_from_blocks(blocks, r, R_max, n, final_block=FINAL_BLOCK):
    points = np.zeros((0, n))
    tree = None
    idle = 0
    for block in blocks:
        block = block[geo.norm_sq(block) <= R_max * R_max]
        if block.shape[0] == 0:
            continue
        size = block.shape[0]
        if points.shape[0]:
            block = block[_clear(tree, points, block, r)]
        new = _first_fit(block, r, points)
        if new:
            points = np.concatenate([points, np.asarray(new)])
            tree = cKDTree(points)
            idle = 0
        else:
            idle += size
            if idle >= final_block:
                break
    if points.shape[0] == 0:
        raise DomainError("candidate stream produced no points in the truncated region")
    return points


def greedy_lattice(n, r, R_max, seed=0, stream_radius=None, final_block=FINAL_BLOCK):
    """First-fit maximal r-separated subset of the stream restricted to ``|x| <= R_max``.

    ``stream_radius`` (default ``R_max``) is the radius the stream is drawn
    from; sweeps over ``R_max`` share one stream by passing the largest radius.
    """
    if not 0.0 < r < 1.0:
        raise DomainError(f"separation r={r} must lie in (0, 1)")
    if not 0.0 < R_max < 1.0:
        raise DomainError(f"R_max={R_max} must lie in (0, 1)")
    R_stream = R_max if stream_radius is None else stream_radius
    if R_stream < R_max:
        raise DomainError("stream radius must be at least R_max")
    pts = greedy_from_blocks(candidate_stream(n, R_stream, seed), r, R_max, n, final_block)
    return SeparatedSet(points=pts, r=float(r), R_max=float(R_max), seed=int(seed))


# ---------------------------------------------------------------------------
# verification


def verify_separation(ss, chunk=2048):
    """Exact minimum pairwise ``rho`` (``inf`` for a single point)."""
    pts = ss.points
    m = pts.shape[0]
    if m < 2:
        return math.inf
    best = math.inf
    for i in range(0, m, chunk):
        block = pts[i : i + chunk]
        rr = geo._rho(block[:, None, :], pts[None, :, :], geo.bracket)
        ii = np.arange(i, min(i + chunk, m))
        rr[np.arange(block.shape[0]), ii] = np.inf
        best = min(best, float(rr.min()))
    return best


def uniform_ball_probes(n, R, count, seed):
    """Lebesgue-uniform probes in ``{|x| <= R}`` from an independent generator."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (R * rng.random(count) ** (1.0 / n))[:, None]


def verify_covering(ss, probes=None, count=100_000, seed=12345):
    """Fraction of probes in ``{|x| <= R_max}`` within ``rho < r`` of some lattice point."""
    if probes is None:
        probes = uniform_ball_probes(ss.n, ss.R_max, count, seed)
    probes = np.atleast_2d(probes)
    probes = probes[geo.norm_sq(probes) <= ss.R_max**2]
    if probes.shape[0] == 0:
        return 1.0
    hits = pseudo_neighbors(ss.tree, ss.points, probes, ss.r)
    frac = float(np.mean(np.any(hits >= 0, axis=1)))
    ss.covering_verified = frac == 1.0
    return frac


def overlap_count(ss, delta, probes=None, count=100_000, seed=54321):
    """Empirical max over probes of ``#{m : rho(probe, a_m) < delta}``."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta={delta} must lie in (0, 1)")
    if probes is None:
        probes = uniform_ball_probes(ss.n, ss.R_max, count, seed)
    hits = pseudo_neighbors(ss.tree, ss.points, np.atleast_2d(probes), delta)
    return int(np.max(np.sum(hits >= 0, axis=1)))


def overlap_bound(n, r, delta):
    """``tau(B_s) / tau(B_{r/2})`` with ``s = (delta + r/2) / (1 + delta r/2)``."""
    s = (delta + 0.5 * r) / (1.0 + 0.5 * delta * r)
    return tau_ball_volume(n, s) / tau_ball_volume(n, 0.5 * r)


# ---------------------------------------------------------------------------
# cells


@dataclass
class CellPartition:
    """Cells ``E_m``: ``x`` in a half-ball ``E_{r/2}(a_m)`` belongs to ``m``;
    otherwise to the first ``m`` with ``rho(x, a_m) < r``; otherwise ``-1``
    (uncovered, a truncation artifact)."""

    set: SeparatedSet

    def owner(self, x, chunk=1 << 16):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0], dtype=np.int64)
        pts, r = self.set.points, self.set.r
        for i in range(0, x.shape[0], chunk):
            q = x[i : i + chunk]
            hits = pseudo_neighbors(self.set.tree, pts, q, r)
            big = np.where(hits >= 0, hits, np.iinfo(np.int64).max)
            first = big.min(axis=1)
            own = np.where(first == np.iinfo(np.int64).max, -1, first)
            # protected half-balls take precedence (they are pairwise disjoint)
            rows, cols = np.nonzero(hits >= 0)
            if rows.size:
                rr = geo._rho(q[rows], pts[hits[rows, cols]], geo.bracket)
                half = rr < 0.5 * r
                own[rows[half]] = hits[rows[half], cols[half]]
            out[i : i + chunk] = own
        return out

    def masses(self, rule):
        """Cell masses under ``rule`` (whose weight defines the measure) by node ownership.

        Returns ``(masses, uncovered_mass, uncovered_inside_fraction)`` where the
        last entry is the fraction of rule nodes with ``|y| <= R_max`` left
        unowned.
        """
        m = len(self.set)
        masses = np.zeros(m)
        uncovered = 0.0
        inside = 0
        bad_inside = 0
        for pts, w in rule.chunks():
            own = self.owner(pts)
            ok = own >= 0
            np.add.at(masses, own[ok], w[ok])
            uncovered += float(w[~ok].sum())
            ins = geo.norm_sq(pts) <= self.set.R_max**2
            inside += int(ins.sum())
            bad_inside += int((ins & ~ok).sum())
        return masses, uncovered, bad_inside / max(inside, 1)


def build_cells(ss):
    if len(ss) == 0:
        raise DomainError("cannot partition an empty set")
    return CellPartition(ss)


# ---------------------------------------------------------------------------
# gamma sums


@dataclass(frozen=True)
class GammaSumReport:
    gamma: float
    radii: tuple
    sums: tuple
    counts: tuple
    exponent: float  # fitted e in S(R) = A - B (1-R^2)^e (e = 0 means logarithmic)
    ratio: float  # last / first partial sum of the sweep
    diagnosis: str  # "bounded" or "divergent"


def _fit_growth(t, S):
    """Least-squares ``e`` in ``S = A - B t^e`` (``log t`` at ``e = 0``)."""

    def resid(e):
        basis = np.log(t) if abs(e) < 1e-9 else t**e
        X = np.column_stack([np.ones_like(t), basis])
        coef, *_ = np.linalg.lstsq(X, S, rcond=None)
        return float(np.sum((X @ coef - S) ** 2))

    grid = np.linspace(-1.5, 2.5, 801)
    scores = [resid(e) for e in grid]
    best = float(grid[int(np.argmin(scores))])
    opt = minimize_scalar(resid, bounds=(best - 0.005, best + 0.005), method="bounded",
                          options={"xatol": 1e-8})
    return float(opt.x)


def rim_radius(R, r):
    """``R`` pulled toward the origin by pseudo-hyperbolic distance ``r``."""
    return (R - r) / (1.0 - r * R)


def growth_exponent(ss, gamma, samples=24):
    """Growth exponent of the cumulative sums of ``(1-|a_m|^2)^gamma`` inside one set.

    The outer shell of pseudo-hyperbolic width ``r`` is excluded: truncation
    makes the lattice denser there than in the interior.  Partial sums are
    taken over ``|a| <= rho_j`` for radii equally spaced in hyperbolic
    distance from a third of the way out to the rim radius.
    """
    top = rim_radius(ss.R_max, ss.r)
    if top <= 0.0:
        return math.nan
    rad2 = geo.norm_sq(ss.points)
    lo = math.tanh(math.atanh(top) / 3.0)
    rho = np.tanh(np.linspace(math.atanh(lo), math.atanh(top), samples))
    w = geo.one_minus_norm_sq(ss.points) ** gamma
    order = np.argsort(rad2)
    cum = np.concatenate([[0.0], np.cumsum(w[order])])
    S = cum[np.searchsorted(rad2[order], rho * rho, side="right")]
    if np.count_nonzero(np.diff(S)) < 4:
        return math.nan
    return _fit_growth((1.0 - rho) * (1.0 + rho), S)


def gamma_sum(gamma, radii, sets=None, n=2, r=0.3, seed=0):
    """Partial sums ``sum (1-|a_m|^2)^gamma`` along a truncation sweep.

    Each radius gets its own greedy lattice (one shared stream).  The
    diagnosis fits the growth exponent ``e`` of ``S(R) ~ A - B (1-R^2)^e`` on
    the interior profile of the largest set (see ``growth_exponent``):
    ``e > 0.125`` reads as bounded, ``e <= 0.125`` as divergent (``e = 0`` is
    logarithmic growth, ``e < 0`` power growth).  When the profile is too
    sparse the last-to-first ratio is compared with 1.25.
    """
    radii = tuple(sorted(float(R) for R in radii))
    if sets is None:
        top = radii[-1]
        sets = [greedy_lattice(n, r, R, seed=seed, stream_radius=top) for R in radii]
    sums = tuple(float(np.sum(ss.weights() ** gamma)) for ss in sets)
    counts = tuple(len(ss) for ss in sets)
    ratio = sums[-1] / sums[0]
    e = growth_exponent(sets[-1], gamma)
    if math.isnan(e):
        diagnosis = "bounded" if ratio < GAMMA_RATIO_THRESHOLD else "divergent"
    else:
        diagnosis = "bounded" if e > GAMMA_EXPONENT_THRESHOLD else "divergent"
    return GammaSumReport(float(gamma), radii, sums, counts, float(e), float(ratio), diagnosis)


# ---------------------------------------------------------------------------
# cache IO


def save_lattice(path, ss):
    header = {"kind": "lattice", "n": ss.n, "r": float(ss.r), "R_max": float(ss.R_max), "seed": ss.seed}
    write_frame(path, header, ss.points)


def load_lattice(path):
    from .errors import FramingError

    header, rows = read_frame(path)
    if header.get("kind") != "lattice":
        raise FramingError(f"expected a lattice cache, found kind={header.get('kind')!r}")
    try:
        n = int(header["n"])
        ss = SeparatedSet(points=rows.reshape(-1, n), r=float(header["r"]),
                          R_max=float(header["R_max"]), seed=int(header["seed"]))
    except (KeyError, ValueError) as exc:
        raise FramingError(f"lattice header incomplete: {exc}") from exc
    if rows.shape[1] != n:
        raise FramingError("lattice rows do not match the header dimension")
    return ss

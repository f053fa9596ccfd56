"""Toroidal metric, enclosing balls, ball/lens volumes and attachment regions.

Everything here is pure Euclidean/toroidal geometry.  Points on the unit
d-torus live in [0, 1)^d; ``nearest_image`` lifts them to a local Euclidean
chart so that ordinary predicates (enclosing balls, intersections) apply.
All ball comparisons are closed (``<=``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

# Chart guard: a lift is unambiguous only when the toroidal distance to the
# chart base is below a quarter period.
CHART_GUARD = 0.25

# Region flavors and connectivity rules.  CSV output uses the single letters.
CECH = "cech"
RIPS = "rips"
UP = "up"
DOWN = "down"

_FLAVOR_ALIASES = {"c": CECH, "cech": CECH, "r": RIPS, "rips": RIPS}
_CONN_ALIASES = {"u": UP, "up": UP, "d": DOWN, "down": DOWN}


class ChartGuardError(ValueError):
    """Raised when points are too far apart to share one Euclidean chart."""


def normalize_flavor(flavor: str) -> str:
    try:
        return _FLAVOR_ALIASES[flavor.lower()]
    except KeyError:
        raise ValueError(f"unknown flavor {flavor!r}; expected cech/rips") from None


def normalize_conn(conn: str) -> str:
    try:
        return _CONN_ALIASES[conn.lower()]
    except KeyError:
        raise ValueError(f"unknown connectivity {conn!r}; expected up/down") from None


def flavor_letter(flavor: str) -> str:
    return "C" if normalize_flavor(flavor) == CECH else "R"


def conn_letter(conn: str) -> str:
    return "U" if normalize_conn(conn) == UP else "D"


# ---------------------------------------------------------------------------
# Toroidal metric
# ---------------------------------------------------------------------------

def wrapped_delta(base: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-coordinate displacement x - base reduced to [-1/2, 1/2].

    Broadcasts over leading axes.  The minimizing integer shift decouples
    per coordinate on the unit torus, so the norm of this displacement is
    the toroidal distance.
    """
    delta = np.asarray(x, dtype=float) - np.asarray(base, dtype=float)
    return delta - np.rint(delta)


def torus_dist(x: np.ndarray, y: np.ndarray) -> float | np.ndarray:
    """Toroidal distance on the unit d-torus (broadcasts over leading axes)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    d = np.sqrt(np.sum(wrapped_delta(y, x) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def nearest_image(base: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lift ``x`` to the Euclidean representative nearest to ``base``.

    The lift equals ``x + z`` for the integer vector ``z`` minimizing
    ``||base - x + z||``; then ``||lift - base|| == torus_dist(base, x)``.
    Requires ``torus_dist(base, x) < 1/4`` so the chart is unambiguous.
    """
    base = np.asarray(base, dtype=float)
    delta = wrapped_delta(base, x)
    dist = np.sqrt(np.sum(delta**2, axis=-1))
    if np.any(dist >= CHART_GUARD):
        raise ChartGuardError(
            f"toroidal distance {float(np.max(dist)):.6g} >= {CHART_GUARD}; chart lift ambiguous"
        )
    return base + delta


# ---------------------------------------------------------------------------
# Smallest enclosing ball
# ---------------------------------------------------------------------------

_MINIBALL_SLACK = 1.0 + 1e-12


def _circumball(points: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Smallest ball with all of ``points`` on its boundary, or None.

    The center lies in the affine hull of the points; affinely dependent
    inputs return None (some strict subset determines the same sphere).
    """
    p0 = points[0]
    if len(points) == 1:
        return p0.copy(), 0.0
    if len(points) == 2:
        v = points[1] - p0
        return p0 + 0.5 * v, 0.5 * float(np.linalg.norm(v))
    span = points[1:] - p0
    gram = span @ span.T
    rhs = 0.5 * np.einsum("ij,ij->i", span, span)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    offset = lam @ span
    return p0 + offset, float(np.linalg.norm(offset))


def miniball(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Center and radius of the smallest enclosing ball of ``points``.

    Exact up to ~1e-12 relative error.  Enumerates candidate support sets
    for small inputs (the hot path here never exceeds d + 2 points) and
    falls back to a deterministic Welzl recursion for larger ones.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = pts.shape
    if m == 0:
        raise ValueError("miniball of empty point set")
    if m == 1:
        return pts[0].copy(), 0.0
    if m <= 10:
        return _miniball_subsets(pts, d)
    return _miniball_welzl(pts, d)


def _miniball_subsets(pts: np.ndarray, d: int) -> tuple[np.ndarray, float]:
    m = len(pts)
    best: tuple[np.ndarray, float] | None = None
    for size in range(1, min(m, d + 1) + 1):
        for subset in combinations(range(m), size):
            cb = _circumball(pts[list(subset)])
            if cb is None:
                continue
            center, radius = cb
            if best is not None and radius >= best[1]:
                continue
            limit = radius * _MINIBALL_SLACK + 1e-15
            if np.all(np.linalg.norm(pts - center, axis=1) <= limit):
                best = (center, radius)
    assert best is not None  # singleton subsets always yield candidates
    return best


def _miniball_welzl(pts: np.ndarray, d: int) -> tuple[np.ndarray, float]:
    def ball_with_boundary(idx: int, boundary: list[int]) -> tuple[np.ndarray, float]:
        ball = _circumball(pts[boundary]) if boundary else (pts[0] * 0.0, -1.0)
        if ball is None:
            ball = (pts[boundary[0]].copy(), 0.0)
        for i in range(idx):
            c, r = ball
            if np.linalg.norm(pts[i] - c) > r * _MINIBALL_SLACK + 1e-15:
                if len(boundary) == d + 1:
                    continue
                ball = ball_with_boundary(i, boundary + [i])
        return ball

    center, radius = ball_with_boundary(len(pts), [])
    return center, max(radius, 0.0)


def miniball_radius(points: np.ndarray) -> float:
    """Radius of the smallest ball containing ``points``."""
    return miniball(points)[1]


def enclosing_radius3_sq(q_ab: np.ndarray, q_ac: np.ndarray,
                         q_bc: np.ndarray) -> np.ndarray:
    """Squared smallest-enclosing-ball radius of a triple from squared sides.

    Obtuse (or right or degenerate) triangles are covered by the ball on
    their longest side; acute triangles need the circumball, whose squared
    radius is q1 q2 q3 / (2(q1 q2 + q1 q3 + q2 q3) - (q1^2 + q2^2 + q3^2)).
    """
    hi = np.maximum(np.maximum(q_ab, q_ac), q_bc)
    rest = q_ab + q_ac + q_bc - hi  # sum of the two smaller squared sides
    obtuse = rest <= hi * _MINIBALL_SLACK
    denom = 2.0 * (q_ab * q_ac + q_ab * q_bc + q_ac * q_bc) - (
        q_ab * q_ab + q_ac * q_ac + q_bc * q_bc)
    with np.errstate(divide="ignore", invalid="ignore"):
        circ = q_ab * q_ac * q_bc / denom
    return np.where(obtuse, 0.25 * hi, circ)


def miniball3_radius(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Vectorized smallest-enclosing-ball radius of point triples (..., d)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    q_ab = np.sum((a - b) ** 2, axis=-1)
    q_ac = np.sum((a - c) ** 2, axis=-1)
    q_bc = np.sum((b - c) ** 2, axis=-1)
    return np.sqrt(enclosing_radius3_sq(q_ab, q_ac, q_bc))


# ---------------------------------------------------------------------------
# Ball and lens volumes
# ---------------------------------------------------------------------------

def theta(d: int) -> float:
    """Volume of the unit ball in R^d."""
    if d < 0:
        raise ValueError("dimension must be >= 0")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def ball_volume(d: int, radius: float) -> float:
    return theta(d) * radius**d


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 60) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        half = tol / 2.0
        return recurse(a, m, fa, flm, fm, left, half, depth - 1) + recurse(
            m, b, fm, frm, fb, right, half, depth - 1
        )

    return recurse(a, b, fa, fm, fb, whole, tol, depth)


def lens_volume(d: int, R: float, sep: float) -> float:
    """Volume of the intersection of two radius-R balls with centers ``sep`` apart.

    Integrates the spherical-cap cross-section profile: each slice at axial
    offset u is a (d-1)-ball of radius sqrt(R^2 - u^2), giving exponent
    (d-1)/2 in the profile.  The substitution u = R sin(phi) removes the
    endpoint singularity so adaptive Simpson converges to 1e-10 absolute.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if R <= 0:
        raise ValueError("radius must be positive")
    if sep < 0 or sep > 2 * R:
        raise ValueError(f"separation {sep} outside [0, {2 * R}]")
    if sep == 0:
        return ball_volume(d, R)
    if sep == 2 * R:
        return 0.0
    phi0 = math.asin(min(1.0, sep / (2.0 * R)))
    integral = _adaptive_simpson(lambda p: math.cos(p) ** d, phi0, math.pi / 2.0, 1e-10)
    return 2.0 * theta(d - 1) * R**d * integral


def _lens_volume_cap_exponent(d: int, R: float, sep: float, exponent: float) -> float:
    """Lens volume with an explicit cap-profile exponent (validation helper).

    Uses the normalized form ``2^d theta_d (1 - (theta_{d-1}/theta_d)
    int_0^{s/2} (1 - t^2/4)^exponent dt)`` for radius-2 balls, rescaled to
    radius R.  With ``exponent=(d-1)/2`` this reproduces :func:`lens_volume`
    exactly; other exponents exist only so tests can demonstrate they fail
    the Monte Carlo cross-check for d >= 3.
    """
    if sep < 0 or sep > 2 * R:
        raise ValueError("separation outside [0, 2R]")
    s = 2.0 * sep / R  # separation rescaled to radius-2 balls
    integral = _adaptive_simpson(
        lambda t: (1.0 - t * t / 4.0) ** exponent, 0.0, s / 2.0, 1e-10
    )
    eta = 1.0 - theta(d - 1) / theta(d) * integral
    return (R / 2.0) ** d * 2.0**d * theta(d) * eta


# ---------------------------------------------------------------------------
# Attachment regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionSpec:
    """Set of locations whose addition would connect a face.

    ``centers`` are chart-lifted Euclidean coordinates of the face's k+1
    vertices; ``r`` is the ball radius and ``s`` the dilation radius.  The
    four (flavor, conn) combinations are:

    * cech/up:   s-neighbourhood of the common intersection of r-balls
    * cech/down: union of s-neighbourhoods of leave-one-out intersections
    * rips/up:   common intersection of (r+s)-balls
    * rips/down: union of leave-one-out intersections of (r+s)-balls
    """

    flavor: str
    conn: str
    centers: np.ndarray
    r: float
    s: float

    def __post_init__(self):
        object.__setattr__(self, "flavor", normalize_flavor(self.flavor))
        object.__setattr__(self, "conn", normalize_conn(self.conn))
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", centers)
        if self.r <= 0:
            raise ValueError("ball radius r must be positive")
        if self.s < 0:
            raise ValueError("dilation radius s must be nonnegative")
        if self.conn == DOWN and len(centers) < 2:
            raise ValueError("down regions need at least two centers")

    def spread_ok(self) -> bool:
        """Face-derived regions keep all centers within 2r of centers[0];
        wider specs are legal (their base intersections may be empty)."""
        spread = np.linalg.norm(self.centers - self.centers[0], axis=1)
        return bool(np.all(spread <= 2.0 * self.r * (1 + 1e-9)))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def k(self) -> int:
        return len(self.centers) - 1


def _dist_to_ball_intersection(centers: np.ndarray, r: float, y: np.ndarray) -> np.ndarray:
    """Euclidean distance from each row of ``y`` to the intersection of balls.

    Exact convex projection via enumeration of active constraint sets: the
    nearest point either is ``y`` itself or lies on the sphere intersection
    of some subset of at most ``d`` balls.  Returns +inf when the ball
    intersection is empty.
    """
    centers = np.atleast_2d(centers)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    t, d = centers.shape
    n = len(y)
    if miniball_radius(centers) > r * _MINIBALL_SLACK:
        return np.full(n, np.inf)

    dists_to_centers = np.linalg.norm(y[:, None, :] - centers[None, :, :], axis=2)
    inside = np.all(dists_to_centers <= r * _MINIBALL_SLACK, axis=1)
    best = np.where(inside, 0.0, np.inf)

    feas_tol = r * 1e-9 + 1e-12
    for size in range(1, min(t, d) + 1):
        for subset in combinations(range(t), size):
            sub = centers[list(subset)]
            rest = [i for i in range(t) if i not in subset]
            if size == 1:
                c = sub[0]
                diff = y - c
                norm = np.linalg.norm(diff, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    w = c + diff * (r / np.where(norm == 0, np.inf, norm))[:, None]
                cand_ok = norm > 0
            else:
                cb = _circumball(sub)
                if cb is None:
                    continue
                hub, rho = cb
                rad2 = r * r - rho * rho
                if rad2 < 0:
                    continue
                ring_r = math.sqrt(rad2)
                span = sub[1:] - sub[0]
                q, _ = np.linalg.qr(span.T)  # orthonormal basis of the span
                rel = y - hub
                par = rel @ q @ q.T
                perp = rel - par
                pn = np.linalg.norm(perp, axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    w = hub + perp * (ring_r / np.where(pn == 0, np.inf, pn))[:, None]
                cand_ok = pn > 0
            if rest:
                ok_rest = np.all(
                    np.linalg.norm(w[:, None, :] - centers[None, rest, :], axis=2)
                    <= r + feas_tol,
                    axis=1,
                )
            else:
                ok_rest = np.ones(n, dtype=bool)
            use = cand_ok & ok_rest
            if np.any(use):
                cand = np.linalg.norm(y[use] - w[use], axis=1)
                best[use] = np.minimum(best[use], cand)
    return best


def _dykstra_distance(centers: np.ndarray, r: float, y: np.ndarray,
                      tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Distance from ``y`` to the ball intersection via Dykstra's projections."""
    if miniball_radius(centers) > r * _MINIBALL_SLACK:
        return math.inf
    x = np.asarray(y, dtype=float).copy()
    corrections = np.zeros((len(centers), len(x)))
    for _ in range(max_iter):
        x_prev = x.copy()
        for i, c in enumerate(centers):
            z = x + corrections[i]
            diff = z - c
            norm = np.linalg.norm(diff)
            proj = z if norm <= r else c + diff * (r / norm)
            corrections[i] = z - proj
            x = proj
        if np.linalg.norm(x - x_prev) <= tol:
            break
    return float(np.linalg.norm(np.asarray(y, dtype=float) - x))


def region_contains(region: RegionSpec, y: np.ndarray) -> bool:
    """Exact membership of a chart-lifted point ``y`` in the region.

    For the counting case s == r the Cech tests reduce to smallest-enclosing
    -ball comparisons; general s uses iterated projections onto the convex
    ball intersection (1e-10 tolerance, 1e4 iteration cap).
    """
    y = np.asarray(y, dtype=float)
    c = region.centers
    rs = region.r + region.s
    if region.flavor == RIPS:
        dists = np.linalg.norm(c - y, axis=1)
        if region.conn == UP:
            return bool(np.all(dists <= rs))
        drop = np.argmax(dists)
        return bool(np.all(np.delete(dists, drop) <= rs))
    # Cech
    if region.conn == UP:
        groups = [c]
    else:
        groups = [np.delete(c, i, axis=0) for i in range(len(c))]
    for g in groups:
        hub, rho = miniball(g)
        if rho > region.r * (1.0 + 1e-9):
            continue  # empty base intersection
        if rho >= region.r * (1.0 - 1e-9):
            # tight group: the ball intersection is (numerically) the single
            # point hub, so the dilated region is exactly B(hub, s)
            if np.linalg.norm(y - hub) <= region.s:
                return True
        elif region.s == region.r:
            if miniball_radius(np.vstack([g, y])) <= region.r:
                return True
        else:
            if _dykstra_distance(g, region.r, y) <= region.s:
                return True
    return False


def region_contains_batch(region: RegionSpec, y: np.ndarray) -> np.ndarray:
    """Vectorized :func:`region_contains` over rows of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    c = region.centers
    rs = region.r + region.s
    if region.flavor == RIPS:
        dists = np.linalg.norm(y[:, None, :] - c[None, :, :], axis=2)
        if region.conn == UP:
            return np.all(dists <= rs, axis=1)
        total = np.sum(dists <= rs, axis=1)
        return total >= len(c) - 1
    def group_hits(g: np.ndarray) -> np.ndarray:
        hub, rho = miniball(g)
        if rho > region.r * (1.0 + 1e-9):
            return np.zeros(len(y), dtype=bool)  # empty base intersection
        if rho >= region.r * (1.0 - 1e-9):
            return np.linalg.norm(y - hub, axis=1) <= region.s
        return _dist_to_ball_intersection(g, region.r, y) <= region.s

    if region.conn == UP:
        return group_hits(c)
    out = np.zeros(len(y), dtype=bool)
    for i in range(len(c)):
        out |= group_hits(np.delete(c, i, axis=0))
    return out


def _region_bounding_box(region: RegionSpec) -> tuple[np.ndarray, np.ndarray] | None:
    """Axis-aligned box enclosing the region, or None when provably empty."""
    c = region.centers
    if region.flavor == RIPS:
        rad, dil = region.r + region.s, 0.0
    else:
        rad, dil = region.r, region.s

    def group_box(g):
        lo = np.max(g - rad, axis=0) - dil
        hi = np.min(g + rad, axis=0) + dil
        return (lo, hi) if np.all(hi > lo) else None

    if region.conn == UP:
        return group_box(c)
    boxes = [b for i in range(len(c)) if (b := group_box(np.delete(c, i, axis=0))) is not None]
    if not boxes:
        return None
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    return lo, hi


def mc_region_volume(region: RegionSpec, samples: int,
                     rng: np.random.Generator) -> tuple[float, float]:
    """Rejection-sampling volume estimate and its standard error.

    Samples uniformly in the region's axis-aligned bounding box; the
    estimate is unbiased with stderr box_vol * sqrt(p(1-p)/samples).
    A provably empty bounding box short-circuits to (0.0, 0.0).
    """
    if samples < 1000:
        raise ValueError("need at least 1000 samples")
    box = _region_bounding_box(region)
    if box is None:
        return 0.0, 0.0
    lo, hi = box
    vol_box = float(np.prod(hi - lo))
    if vol_box <= 0.0:
        return 0.0, 0.0
    pts = rng.random((samples, region.dim)) * (hi - lo) + lo
    hits = region_contains_batch(region, pts)
    p = float(np.mean(hits))
    return vol_box * p, vol_box * math.sqrt(p * (1.0 - p) / samples)


def mc_region_volume_from_uniforms(region: RegionSpec, u01: np.ndarray) -> tuple[float, float]:
    """Like :func:`mc_region_volume` but reusing a frozen uniform batch.

    Common random numbers keep the estimate a smooth function of the region
    geometry, which derivative-free optimizers and the implicit-rate solver
    rely on.
    """
    box = _region_bounding_box(region)
    if box is None:
        return 0.0, 0.0
    lo, hi = box
    vol_box = float(np.prod(hi - lo))
    if vol_box <= 0.0:
        return 0.0, 0.0
    pts = u01 * (hi - lo) + lo
    hits = region_contains_batch(region, pts)
    p = float(np.mean(hits))
    return vol_box * p, vol_box * math.sqrt(p * (1.0 - p) / len(u01))

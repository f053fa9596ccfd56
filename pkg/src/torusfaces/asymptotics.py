"""Geometric constants, radius schedules and expectation machinery.

The key objects: the configuration space of k-tuples forming a face with
the origin at radius 1 (volume ``A_vol``), the infimum/supremum ``m``/``M``
of the attachment-region volume over that space, the radius schedule
``r_n(c)`` that stabilizes the expected isolated-face count, the implicit
rate ``c_n`` matching the configuration integral to a single exponential,
and a numeric probe for the excess-volume separation bound used in the
Poisson-limit argument.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize

from .geometry import (
    CECH,
    DOWN,
    RIPS,
    UP,
    RegionSpec,
    conn_letter,
    flavor_letter,
    lens_volume,
    mc_region_volume,
    mc_region_volume_from_uniforms,
    miniball3_radius,
    miniball_radius,
    normalize_conn,
    normalize_flavor,
    theta,
)

CONFIG_BALL_RADIUS = 2.0  # face configurations with the origin live in B(0, 2)^k


# ---------------------------------------------------------------------------
# Configuration sampling
# ---------------------------------------------------------------------------

def _uniform_ball(rng: np.random.Generator, count: int, d: int,
                  radius: float = CONFIG_BALL_RADIUS) -> np.ndarray:
    vec = rng.standard_normal((count, d))
    vec /= np.linalg.norm(vec, axis=1, keepdims=True)
    return vec * (radius * rng.random(count) ** (1.0 / d))[:, None]


def face_condition_mask(flavor: str, configs: np.ndarray) -> np.ndarray:
    """Which k-tuples form a face with the origin at radius 1."""
    flavor = normalize_flavor(flavor)
    m, k, d = configs.shape
    pts = np.concatenate([np.zeros((m, 1, d)), configs], axis=1)
    dists = np.linalg.norm(pts[:, :, None, :] - pts[:, None, :, :], axis=3)
    ok = np.all(dists <= 2.0, axis=(1, 2))
    if flavor == CECH and k >= 2:
        if k == 2:
            tight = miniball3_radius(pts[:, 0], pts[:, 1], pts[:, 2]) <= 1.0
        else:
            tight = np.array([miniball_radius(p) <= 1.0 for p in pts])
        ok &= tight
    return ok


def sample_face_configs(flavor: str, k: int, d: int, count: int,
                        rng: np.random.Generator,
                        max_batches: int = 10_000) -> tuple[np.ndarray, float]:
    """Uniform samples from the origin-face configuration space.

    Rejection from B(0,2)^k conditioned on the face predicate at radius 1.
    Returns (configs of shape (count, k, d), acceptance fraction).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    keep: list[np.ndarray] = []
    total = 0
    accepted = 0
    batch = max(count, 1024)
    for _ in range(max_batches):
        cand = _uniform_ball(rng, batch * k, d).reshape(batch, k, d)
        ok = face_condition_mask(flavor, cand)
        total += batch
        accepted += int(np.count_nonzero(ok))
        keep.append(cand[ok])
        if accepted >= count:
            break
        if total >= 200_000 and accepted / total < 1e-6:
            raise RuntimeError("face-configuration acceptance below 1e-6")
    if accepted < count:
        raise RuntimeError("could not draw the requested configuration count")
    configs = np.concatenate(keep)[:count]
    return configs, accepted / total


def sample_A(flavor: str, k: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """One configuration forming a k-face with the origin at radius 1."""
    return sample_face_configs(flavor, k, d, 1, rng)[0][0]


def estimate_A_volume(flavor: str, k: int, d: int, samples: int,
                      rng: np.random.Generator) -> tuple[float, float]:
    """Volume of the origin-face configuration space, with stderr."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    box = (2.0**d * theta(d)) ** k
    cand = _uniform_ball(rng, samples * k, d).reshape(samples, k, d)
    ok = face_condition_mask(flavor, cand)
    p = float(np.mean(ok))
    return box * p, box * math.sqrt(p * (1.0 - p) / samples)


def regular_simplex_with_origin(k: int, d: int, side: float = 2.0) -> np.ndarray:
    """k+1 points (origin included) pairwise ``side`` apart, for k <= d."""
    if k > d:
        raise ValueError("a regular k-simplex needs k <= d")
    a = side / math.sqrt(2.0)
    b = a * (math.sqrt(1.0 + k) - 1.0) / k
    pts = np.zeros((k + 1, d))
    for i in range(k):
        pts[i + 1, :k] = b
        pts[i + 1, i] += a
    return pts


# ---------------------------------------------------------------------------
# Constants table
# ---------------------------------------------------------------------------

CLOSED_FORM = "closed_form"
ESTIMATED = "estimated"


@dataclass
class ConstantsEntry:
    """Geometric constants for one (flavor, conn, k, d) cell."""

    flavor: str
    conn: str
    k: int
    d: int
    m: float
    M: float
    A_vol: float
    m_provenance: str
    M_provenance: str
    A_provenance: str
    m_stderr: float = 0.0
    M_stderr: float = 0.0
    A_stderr: float = 0.0
    m_converged: bool = True
    M_converged: bool = True

    @property
    def key(self) -> str:
        return f"{flavor_letter(self.flavor)}/{conn_letter(self.conn)}/{self.k}/{self.d}"


def closed_form_m(flavor: str, conn: str, k: int, d: int) -> float | None:
    """The inf-volume constants with verified closed forms.

    Cech/up equals theta_d for every k: the region always contains a unit
    ball around any point of the common intersection, and a configuration
    whose enclosing ball is tight shrinks it to exactly that ball.
    Cech/down equals 2^d theta_d only for k = 1, where each leave-one-out
    piece is a full 2-ball; for k >= 2 spread configurations shrink the
    pieces below that (see the counterexample pinned in the test suite),
    so those cells stay estimated.
    """
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    if flavor == CECH:
        if conn == UP:
            return theta(d)
        return 2.0**d * theta(d) if k == 1 else None
    if conn == UP and k == 1:
        return lens_volume(d, 2.0, 2.0)
    return None


def region_volume_at(flavor: str, conn: str, config: np.ndarray, samples: int,
                     rng: np.random.Generator | None = None,
                     uniforms: np.ndarray | None = None) -> tuple[float, float]:
    """Attachment-region volume |Q(O, y)| at unit radius for one config."""
    d = config.shape[-1]
    centers = np.vstack([np.zeros(d), np.atleast_2d(config)])
    region = RegionSpec(flavor, conn, centers, 1.0, 1.0)
    if uniforms is not None:
        return mc_region_volume_from_uniforms(region, uniforms)
    return mc_region_volume(region, samples, rng)


def _optimize_extremum(flavor: str, conn: str, k: int, d: int, maximize: bool,
                       rng: np.random.Generator, starts: int = 32,
                       eval_samples: int = 20_000, maxiter: int = 120,
                       polish_samples: int = 400_000,
                       seed_configs: np.ndarray | None = None
                       ) -> tuple[float, float, bool]:
    """Multi-start Nelder-Mead on the region volume over face configurations.

    Infeasible iterates are pushed back by a penalty proportional to the
    face-condition violation; each start shares one frozen uniform batch so
    the objective is deterministic during the search.
    """
    sign = -1.0 if maximize else 1.0
    uniforms = rng.random((eval_samples, d))
    big = 1e6

    def objective(flat: np.ndarray) -> float:
        y = flat.reshape(k, d)
        pts = np.vstack([np.zeros(d), y])
        dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        violation = max(0.0, float(np.max(dists)) - 2.0)
        if flavor == CECH and k >= 2:
            violation = max(violation, miniball_radius(pts) - 1.0)
        if violation > 0.0:
            return big * (1.0 + violation)
        est, _ = region_volume_at(flavor, conn, y, 0, uniforms=uniforms)
        return sign * est

    init, _ = sample_face_configs(flavor, k, d, starts, rng)
    if seed_configs is not None:
        init = np.concatenate([np.atleast_2d(seed_configs).reshape(-1, k, d), init])
    best_val = math.inf
    best_x = None
    converged = False
    for start in init:
        res = minimize(objective, start.ravel(), method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-4})
        if res.fun < best_val:
            best_val, best_x = res.fun, res.x
            converged = bool(res.success) or converged
    # polish the winner with an independent large batch
    val, err = region_volume_at(flavor, conn, best_x.reshape(k, d),
                                polish_samples, rng)
    return val, err, converged


def estimate_extremum(flavor: str, conn: str, k: int, d: int, maximize: bool,
                      rng: np.random.Generator, **kwargs) -> tuple[float, float, bool]:
    """Generic optimizer entry point (value, stderr, converged flag).

    Used directly by validation runs that re-derive closed-form constants.
    """
    seeds = None
    if not maximize and normalize_flavor(flavor) == RIPS \
            and normalize_conn(conn) == UP and 2 <= k <= d:
        seeds = regular_simplex_with_origin(k, d)[1:]
    return _optimize_extremum(normalize_flavor(flavor), normalize_conn(conn),
                              k, d, maximize, rng, seed_configs=seeds, **kwargs)


def constants(flavor: str, conn: str, k: int, d: int,
              rng: np.random.Generator | None = None,
              budget: int = 3_000_000, A_samples: int = 200_000
              ) -> ConstantsEntry:
    """Build one constants-table entry, closed forms where known."""
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    if k < 1:
        raise ValueError("k must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)

    if k == 1:
        a_vol, a_se, a_prov = 2.0**d * theta(d), 0.0, CLOSED_FORM
    else:
        a_vol, a_se = estimate_A_volume(flavor, k, d, A_samples, rng)
        a_prov = ESTIMATED

    eval_samples = max(5_000, min(40_000, budget // (40 * 32)))
    maxiter = 120

    mcf = closed_form_m(flavor, conn, k, d)
    if mcf is not None:
        m_val, m_se, m_prov, m_conv = mcf, 0.0, CLOSED_FORM, True
    else:
        seeds = None
        if flavor == RIPS and conn == UP and 2 <= k <= d:
            # the minimizing configuration is the regular side-2 simplex
            seeds = regular_simplex_with_origin(k, d)[1:]
        m_val, m_se, m_conv = _optimize_extremum(
            flavor, conn, k, d, maximize=False, rng=rng,
            eval_samples=eval_samples, maxiter=maxiter, seed_configs=seeds)
        m_prov = ESTIMATED
    M_val, M_se, M_conv = _optimize_extremum(
        flavor, conn, k, d, maximize=True, rng=rng,
        eval_samples=eval_samples, maxiter=maxiter)
    return ConstantsEntry(
        flavor=flavor, conn=conn, k=k, d=d, m=m_val, M=M_val, A_vol=a_vol,
        m_provenance=m_prov, M_provenance=ESTIMATED, A_provenance=a_prov,
        m_stderr=m_se, M_stderr=M_se, A_stderr=a_se,
        m_converged=m_conv, M_converged=M_conv,
    )


def save_constants(entries, path) -> None:
    table = {e.key: asdict(e) for e in entries}
    with open(path, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)


def load_constants(path) -> dict[str, ConstantsEntry]:
    with open(path) as fh:
        raw = json.load(fh)
    return {key: ConstantsEntry(**val) for key, val in raw.items()}


def constants_key(flavor: str, conn: str, k: int, d: int) -> str:
    return f"{flavor_letter(flavor)}/{conn_letter(conn)}/{k}/{d}"


# ---------------------------------------------------------------------------
# Radius schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadiusSchedule:
    """Parameters of the stabilizing radius sequence."""

    k: int
    d: int
    alpha: float
    A_vol: float
    m: float
    c: float


def schedule_numerator(n: float, sched: RadiusSchedule) -> float:
    return (math.log(n) + sched.k * math.log(math.log(n)) + math.log(sched.A_vol)
            + sched.alpha - sched.k * math.log(sched.m)
            - math.lgamma(sched.k + 2))


def r_n_of_c(n: float, sched: RadiusSchedule) -> float:
    """The stabilizing radius ((log n + k loglog n + ...)/(n c))^(1/d)."""
    if sched.c <= 0:
        raise ValueError("rate constant c must be positive")
    num = schedule_numerator(n, sched)
    if num <= 0:
        raise ValueError(f"schedule numerator nonpositive at n={n}; increase n")
    return (num / (n * sched.c)) ** (1.0 / sched.d)


# ---------------------------------------------------------------------------
# Expected isolated-face count (configuration-integral Monte Carlo)
# ---------------------------------------------------------------------------

def expected_J_mc(n: float, r: float, flavor: str, conn: str, k: int, d: int,
                  samples: int, rng: np.random.Generator,
                  vol_samples: int = 20_000) -> tuple[float, float]:
    """Expectation of the isolated k-face count at intensity n, radius r.

    Integrates exp(-n r^d |Q(O, y)|) over the face-configuration space by
    rejection sampling, with each region volume itself estimated by Monte
    Carlo; the volume noise propagates into the stderr by the delta method.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    box = (2.0**d * theta(d)) ** k
    scale = n * r**d
    pref = n * scale**k / math.factorial(k + 1)

    cand = _uniform_ball(rng, samples * k, d).reshape(samples, k, d)
    ok = face_condition_mask(flavor, cand)
    vals = np.zeros(samples)
    var_prop = 0.0
    for i in np.nonzero(ok)[0]:
        v, se = region_volume_at(flavor, conn, cand[i], vol_samples, rng)
        f = math.exp(-scale * v)
        vals[i] = f
        var_prop += (scale * f * se) ** 2
    mean = float(np.mean(vals))
    est = pref * box * mean
    se_sample = float(np.std(vals)) / math.sqrt(samples)
    stderr = pref * box * math.sqrt(se_sample**2 + var_prop / samples**2)
    return est, stderr


# ---------------------------------------------------------------------------
# Implicit rate solver
# ---------------------------------------------------------------------------

class RateSolveError(RuntimeError):
    pass


@dataclass
class RateSolution:
    c: float
    residual_rel: float
    n: float
    numerator: float
    lo: float
    hi: float
    samples: int


def _radial_volume_profile(flavor: str, conn: str, d: int, grid: int,
                           vol_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """|Q(O, s e1)| on an s-grid (k = 1 regions are radially symmetric)."""
    ss = np.linspace(0.0, 2.0, grid)
    uniforms = rng.random((vol_samples, d))
    vols = np.empty(grid)
    for idx, s in enumerate(ss):
        cfg = np.zeros((1, d))
        cfg[0, 0] = s
        vols[idx], _ = region_volume_at(flavor, conn, cfg, 0, uniforms=uniforms)
    return ss, vols


def frozen_region_volumes(flavor: str, conn: str, k: int, d: int,
                          A_samples: int, rng: np.random.Generator,
                          vol_samples: int = 20_000,
                          profile_grid: int = 600) -> np.ndarray:
    """Frozen per-configuration attachment volumes for the rate equation.

    k = 1 uses a common-random-number radial profile with linear
    interpolation; higher k estimates each sampled configuration directly.
    """
    configs, _ = sample_face_configs(flavor, k, d, A_samples, rng)
    if k == 1:
        ss, vols = _radial_volume_profile(flavor, conn, d, profile_grid,
                                          vol_samples, rng)
        radii = np.linalg.norm(configs[:, 0, :], axis=1)
        return np.interp(radii, ss, vols)
    out = np.empty(len(configs))
    uniforms = rng.random((vol_samples, d))
    for i, cfg in enumerate(configs):
        out[i], _ = region_volume_at(flavor, conn, cfg, 0, uniforms=uniforms)
    return out


def solve_c_n(n: float, entry: ConstantsEntry, alpha: float = 0.0,
              volumes: np.ndarray | None = None,
              A_samples: int = 20_000, rng: np.random.Generator | None = None,
              tol: float = 1e-8) -> RateSolution:
    """Solve the matching equation mean(exp(-K v/c)) = exp(-K) for c.

    K is the schedule numerator at rate c (so n r_n(c)^d c = K identically)
    and v ranges over frozen attachment volumes on the configuration space.
    The left side is strictly increasing in c, so bisection on [m, M] is
    well posed; no sign change reports both endpoint residuals.
    """
    if volumes is None:
        if rng is None:
            raise ValueError("need either frozen volumes or an rng")
        volumes = frozen_region_volumes(entry.flavor, entry.conn, entry.k,
                                        entry.d, A_samples, rng)
    sched = RadiusSchedule(k=entry.k, d=entry.d, alpha=alpha,
                           A_vol=entry.A_vol, m=entry.m, c=1.0)
    K = schedule_numerator(n, sched)
    if K <= 0:
        raise RateSolveError(f"schedule numerator nonpositive at n={n}")
    target = math.exp(-K)

    def lhs(c: float) -> float:
        return float(np.mean(np.exp(-K * volumes / c)))

    lo, hi = entry.m, entry.M
    flo, fhi = lhs(lo) - target, lhs(hi) - target
    if flo > 0 or fhi < 0:
        raise RateSolveError(
            f"no sign change on [m, M]: residuals {flo:.3e} at m, {fhi:.3e} at M"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lhs(mid) - target > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * mid:
            break
    c = 0.5 * (lo + hi)
    residual = abs(lhs(c) - target) / target
    return RateSolution(c=c, residual_rel=residual, n=n, numerator=K,
                        lo=entry.m, hi=entry.M, samples=len(volumes))


# ---------------------------------------------------------------------------
# Excess-volume separation probe
# ---------------------------------------------------------------------------

@dataclass
class SeparationProbe:
    min_value: float
    stderr: float
    delta: float
    k: int
    d: int
    j: int
    feasible_trials: int
    config: np.ndarray


def canonical_separation_config(k: int, d: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """The tight two-face configuration with all constrained distances at 2.

    Starts from the regular side-2 simplex through the origin and reflects
    the dropped vertices through the centroid of the shared ones; the
    reflections sit exactly at distance 2 from every shared vertex and
    from each other, and at distance > 2 from everything dropped.
    """
    if not (1 <= j <= k <= d):
        raise ValueError("need 1 <= j <= k <= d")
    simplex = regular_simplex_with_origin(k, d)  # rows: O, x_2..x_{k+1}
    shared = simplex[k - j + 1:]
    dropped = simplex[: k - j + 1]
    centroid = shared.mean(axis=0)
    z = 2.0 * centroid - dropped
    x = simplex[1:]
    return x, z


def _separation_constraints_ok(x: np.ndarray, z: np.ndarray, j: int,
                               delta: float, eps: float = 1e-9) -> bool:
    # eps absorbs float dust on the closed boundary (the delta = 0 domain
    # pins every constrained distance to exactly 2)
    k, d = x.shape
    lo = 2.0 - delta - eps
    hi = 2.0 + eps
    origin = np.zeros((1, d))
    ox = np.vstack([origin, x])
    y = np.vstack([x[k - j:], z])
    # face conditions: all pairwise distances within each tuple at most 2
    for tup in (ox, y):
        dd = np.linalg.norm(tup[:, None, :] - tup[None, :, :], axis=2)
        if np.max(dd) > hi:
            return False
    # all constrained quantities at least 2 - delta
    norms_x = np.linalg.norm(x, axis=1)
    norms_z = np.linalg.norm(z, axis=1)
    if np.min(norms_x) < lo or np.min(norms_z) < lo:
        return False
    if np.max(norms_z) > 6.0 + eps:
        return False
    dx = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    if k > 1 and np.min(dx[np.triu_indices(k, 1)]) < lo:
        return False
    dz = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)
    if len(z) > 1 and np.min(dz[np.triu_indices(len(z), 1)]) < lo:
        return False
    dxz = np.linalg.norm(x[:, None, :] - z[None, :, :], axis=2)
    if np.min(dxz) < lo:
        return False
    return True


def _excess_volume(x: np.ndarray, z: np.ndarray, j: int,
                   uniforms: np.ndarray) -> float:
    """MC estimate of |Q(y) \\ Q(O, x)| for the up-attachment regions."""
    k, d = x.shape
    y = np.vstack([x[k - j:], z])
    ox = np.vstack([np.zeros((1, d)), x])
    lo = np.max(y - 2.0, axis=0)
    hi = np.min(y + 2.0, axis=0)
    if np.any(hi <= lo):
        return 0.0
    pts = uniforms * (hi - lo) + lo
    in_y = np.all(
        np.linalg.norm(pts[:, None, :] - y[None, :, :], axis=2) <= 2.0, axis=1)
    in_ox = np.all(
        np.linalg.norm(pts[:, None, :] - ox[None, :, :], axis=2) <= 2.0, axis=1)
    frac = float(np.mean(in_y & ~in_ox))
    return float(np.prod(hi - lo)) * frac


def probe_separation(k: int, d: int, j: int, delta: float, trials: int,
                     rng: np.random.Generator, mc_samples: int = 40_000,
                     refine_iters: int = 150) -> SeparationProbe:
    """Search the constrained two-face domain for the smallest excess volume.

    Randomized restarts around the canonical tight configuration plus a
    Nelder-Mead refinement; the reported minimum is an upper bound for the
    true infimum and is asserted positive by the calling tests.
    """
    x0, z0 = canonical_separation_config(k, d, j)
    uniforms = rng.random((mc_samples, d))

    candidates = [(x0, z0)]
    feasible = 1
    scale = delta / 6.0
    for _ in range(trials):
        x = x0 + rng.uniform(-scale, scale, size=x0.shape)
        z = z0 + rng.uniform(-scale, scale, size=z0.shape)
        if _separation_constraints_ok(x, z, j, delta):
            feasible += 1
            candidates.append((x, z))
    scored = sorted(
        ((_excess_volume(x, z, j, uniforms), x, z) for x, z in candidates),
        key=lambda t: t[0])

    nx = x0.size
    big = 1e3

    def objective(flat: np.ndarray) -> float:
        x = flat[:nx].reshape(x0.shape)
        z = flat[nx:].reshape(z0.shape)
        if not _separation_constraints_ok(x, z, j, delta):
            return big
        return _excess_volume(x, z, j, uniforms)

    best_val, best_x, best_z = scored[0]
    for _, x, z in scored[:3]:
        res = minimize(objective, np.concatenate([x.ravel(), z.ravel()]),
                       method="Nelder-Mead",
                       options={"maxiter": refine_iters, "xatol": 1e-4,
                                "fatol": 1e-5})
        if res.fun < best_val and res.fun < big:
            best_val = float(res.fun)
            best_x = res.x[:nx].reshape(x0.shape)
            best_z = res.x[nx:].reshape(z0.shape)

    # re-evaluate the winner with a fresh, larger batch
    count = 4 * mc_samples
    final_u = rng.random((count, d))
    y = np.vstack([best_x[k - j:], best_z])
    ox = np.vstack([np.zeros((1, d)), best_x])
    lo = np.max(y - 2.0, axis=0)
    hi = np.min(y + 2.0, axis=0)
    if np.any(hi <= lo):
        value, stderr = 0.0, 0.0
    else:
        pts = final_u * (hi - lo) + lo
        in_y = np.all(
            np.linalg.norm(pts[:, None, :] - y[None, :, :], axis=2) <= 2.0, axis=1)
        in_ox = np.all(
            np.linalg.norm(pts[:, None, :] - ox[None, :, :], axis=2) <= 2.0, axis=1)
        frac = float(np.mean(in_y & ~in_ox))
        box = float(np.prod(hi - lo))
        value = box * frac
        stderr = box * math.sqrt(frac * (1.0 - frac) / count)
    return SeparationProbe(min_value=value, stderr=stderr, delta=delta,
                           k=k, d=d, j=j, feasible_trials=feasible,
                           config=np.vstack([best_x, best_z]))

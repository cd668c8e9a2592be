"""Perfect sampling of linear self-exciting processes on a bounded interval.

A single-ancestor cluster rooted at 0 (offspring arrive as a Poisson process
with intensity h(., z) scaled by the parent's mark, each offspring spawning
its own independent subtree) has extinction time L = last point - ancestor.
Its CDF E(t) = P(L <= t) is the unique fixed point of

    (Phi g)(t) = sum_j w_j * exp( -nu_inf(z_j) + int_0^t g(t-s) h(s, z_j) ds ),

which is the probability-generating functional of the first generation: every
first-generation point at s must be <= t and its subtree must die out by
t - s.  The constant *total* offspring mass nu_inf(z) in the exponent is
essential: with the cumulative mass nu(t, z) instead, the map would return 1
at t = 0 for every argument, while the true E(0) = P(no offspring at all) =
sum_j w_j exp(-nu_inf(z_j)).  The Monte-Carlo containment check in the
validation suite discriminates the two forms.

F = 1 - E is the survival tail.  An ancestor a reversed distance t before
the window contributes iff its cluster survives past t - an event of
probability F(t) - so dominated candidate ancestors carrying uniform heights
are classified against rigorous sandwich bounds l_n <= F <= u_n without ever
evaluating F: quadrature is bracketed by staircase envelopes with exact
per-cell kernel mass, every step rounds outward by EPS_ROUND, and iterates
are clamped monotone, so the bounds stay valid on the grid by induction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .core import PointPattern, SamplerError, Window

__all__ = [
    "EPS_ROUND",
    "FertilityKernel",
    "ExponentialFertility",
    "PolynomialFertility",
    "PiecewiseConstantFertility",
    "GWCluster",
    "sample_gw_cluster",
    "PhiOperator",
    "phi_apply",
    "BoundPair",
    "Sandwich",
    "build_sandwich",
    "HawkesSampler",
    "mr_perfect_sample",
]

EPS_ROUND = 1e-10  # directed-rounding margin absorbing quadrature float error
POINT_CAP = 1_000_000
CONDITION_ATTEMPT_CAP = 1_000_000


def _validate_marks(marks):
    marks = tuple((float(w), float(z)) for (w, z) in marks)
    ws = np.array([w for w, _ in marks])
    zs = np.array([z for _, z in marks])
    if np.any(ws <= 0) or np.any(zs < 0):
        raise SamplerError("mark mixture needs positive weights and nonnegative values")
    if abs(ws.sum() - 1.0) > 1e-9:
        raise SamplerError("mark weights must sum to one")
    return marks, ws / ws.sum(), zs


class FertilityKernel:
    """Reproduction rate h(t, z) = z * h0(t), marks from a finite mixture.

    Marks scale the offspring intensity multiplicatively, so offspring counts
    are Poisson(z * nu0_inf) and displacement positions share one law with
    density h0 / nu0_inf.  Subclasses provide the base shape h0: its exact
    cumulative _nu0, total mass _nu0_inf, first moment _t_moment = int t h0,
    a suggested exponential decay rate for the dominating tail, and an exact
    displacement sampler.
    """

    def __init__(self, marks=((1.0, 1.0),)):
        self.marks, self._weights, self._zs = _validate_marks(marks)
        base = self._nu0_inf()
        if base < 0 or not np.isfinite(base):
            raise SamplerError("offspring mass must be finite and nonnegative")
        self.rho = float(np.sum(self._weights * self._zs) * base)
        if self.rho >= 1:
            raise SamplerError(
                f"branching ratio rho={self.rho:.6g} >= 1: supercritical, no finite clusters"
            )
        tm = self._t_moment()
        if not np.isfinite(tm):
            raise SamplerError("first moment of the fertility rate must be finite")
        self.m1 = float(np.sum(self._weights * self._zs) * tm)
        self.mean_mark = float(np.sum(self._weights * self._zs))

    # -- base-shape interface ----------------------------------------------
    def _h0(self, t):
        raise NotImplementedError

    def _nu0(self, t):
        raise NotImplementedError

    def _nu0_inf(self):
        raise NotImplementedError

    def _t_moment(self):
        raise NotImplementedError

    def sample_displacement(self, n, rng):
        raise NotImplementedError

    def suggested_decay(self):
        raise NotImplementedError

    # -- derived quantities --------------------------------------------------
    def h(self, t, z):
        t = np.asarray(t, dtype=float)
        return np.where(t < 0, 0.0, z * self._h0(np.maximum(t, 0.0)))

    def nu(self, t, z):
        t = np.asarray(t, dtype=float)
        return z * self._nu0(np.maximum(t, 0.0))

    def nu_inf(self, z):
        return z * self._nu0_inf()

    def components(self):
        """(weight, z) pairs of the mark mixture."""
        return self.marks

    def mean_cluster_size(self):
        return 1.0 / (1.0 - self.rho)

    def sample_mark(self, n, rng):
        idx = rng.choice(self._zs.size, size=n, p=self._weights)
        return self._zs[idx]


class ExponentialFertility(FertilityKernel):
    """h(t, z) = z * beta * exp(-gamma t); displacements are Exp(gamma)."""

    def __init__(self, beta, gamma, marks=((1.0, 1.0),)):
        if beta < 0 or gamma <= 0:
            raise SamplerError("need beta >= 0 and gamma > 0")
        self.beta = float(beta)
        self.gamma = float(gamma)
        super().__init__(marks)

    def _h0(self, t):
        return self.beta * np.exp(-self.gamma * t)

    def _nu0(self, t):
        return self.beta * (-np.expm1(-self.gamma * t)) / self.gamma

    def _nu0_inf(self):
        return self.beta / self.gamma

    def _t_moment(self):
        return self.beta / self.gamma**2

    def sample_displacement(self, n, rng):
        return rng.exponential(1.0 / self.gamma, size=int(n))

    def suggested_decay(self):
        return self.gamma * (1.0 - self.rho)


class PolynomialFertility(FertilityKernel):
    """h0(t) = max(poly(t), 0-checked) on [0, support], zero beyond.

    The polynomial must be nonnegative on its support (checked at the
    derivative's real roots and the endpoints, so the check is exact).
    Displacements are drawn by rejection under the exact polynomial maximum.
    """

    def __init__(self, coeffs, support, marks=((1.0, 1.0),)):
        if support <= 0:
            raise SamplerError("support must be positive")
        self.coeffs = tuple(float(c) for c in coeffs)
        self.support = float(support)
        self._poly = np.polynomial.Polynomial(self.coeffs)
        crit = [0.0, self.support]
        for r in self._poly.deriv().roots():
            if abs(r.imag) < 1e-12 and 0 <= r.real <= self.support:
                crit.append(float(r.real))
        vals = self._poly(np.array(crit))
        if np.min(vals) < 0:
            raise SamplerError("fertility polynomial is negative on its support")
        self._h_max = float(np.max(vals))
        super().__init__(marks)

    def _h0(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.support, np.maximum(self._poly(t), 0.0), 0.0)

    def _nu0(self, t):
        integ = self._poly.integ()
        t = np.minimum(np.asarray(t, dtype=float), self.support)
        return integ(t) - integ(0.0)

    def _nu0_inf(self):
        integ = self._poly.integ()
        return float(integ(self.support) - integ(0.0))

    def _t_moment(self):
        shifted = self._poly * np.polynomial.Polynomial([0.0, 1.0])
        integ = shifted.integ()
        return float(integ(self.support) - integ(0.0))

    def sample_displacement(self, n, rng):
        out = np.empty(int(n))
        have = 0
        while have < n:
            m = max(int(2.2 * (n - have)) + 8, 16)
            cand = rng.random(m) * self.support
            keep = rng.random(m) * self._h_max < self._h0(cand)
            got = cand[keep][: n - have]
            out[have : have + got.size] = got
            have += got.size
        return out

    def suggested_decay(self):
        return -math.log(max(self.rho, 1e-12)) / self.support


class PiecewiseConstantFertility(FertilityKernel):
    """User-table shape: h0 constant on each cell of a breakpoint grid."""

    def __init__(self, breaks, values, marks=((1.0, 1.0),)):
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
            raise SamplerError("breaks must be strictly increasing with >= 2 entries")
        if breaks[0] != 0.0:
            raise SamplerError("table must start at t=0")
        if values.shape != (breaks.size - 1,) or np.any(values < 0):
            raise SamplerError("need one nonnegative value per cell")
        self.breaks = breaks
        self.values = values
        self._cell_mass = values * np.diff(breaks)
        self._cum = np.concatenate([[0.0], np.cumsum(self._cell_mass)])
        super().__init__(marks)

    def _h0(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, self.values.size - 1)
        return np.where(t <= self.breaks[-1], self.values[idx], 0.0)

    def _nu0(self, t):
        t = np.minimum(np.asarray(t, dtype=float), self.breaks[-1])
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, self.values.size - 1)
        return self._cum[idx] + self.values[idx] * (t - self.breaks[idx])

    def _nu0_inf(self):
        return float(self._cum[-1])

    def _t_moment(self):
        lo, hi = self.breaks[:-1], self.breaks[1:]
        return float(np.sum(self.values * (hi**2 - lo**2) / 2.0))

    def sample_displacement(self, n, rng):
        total = self._cum[-1]
        r = rng.random(int(n)) * total
        idx = np.clip(np.searchsorted(self._cum, r, side="right") - 1, 0, self.values.size - 1)
        frac = (r - self._cum[idx]) / np.where(self._cell_mass[idx] > 0, self._cell_mass[idx], 1.0)
        return self.breaks[idx] + frac * (self.breaks[idx + 1] - self.breaks[idx])

    def suggested_decay(self):
        return -math.log(max(self.rho, 1e-12)) / self.breaks[-1]


# -- single-ancestor clusters ----------------------------------------------------


@dataclass(frozen=True)
class GWCluster:
    """All points of a single-ancestor cluster with their generation labels."""

    points: np.ndarray
    generations: np.ndarray
    ancestor: float
    ancestor_mark: float

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def extinction_time(self):
        """Last point minus ancestor (0 for a childless ancestor)."""
        return float(self.points.max() - self.ancestor)

    @property
    def offsets(self):
        return self.points - self.ancestor


def sample_gw_cluster(kernel, ancestor, rng, point_cap=POINT_CAP):
    """Generation-by-generation draw of a single-ancestor cluster.

    Each point with mark z spawns Poisson(nu_inf(z)) children displaced by the
    kernel's normalized shape; the recursion terminates a.s. (rho < 1) with
    mean total size 1/(1-rho).
    """
    pts = [np.array([float(ancestor)])]
    gens = [np.zeros(1, dtype=np.int64)]
    marks = kernel.sample_mark(1, rng)
    anc_mark = float(marks[0])
    cur = pts[0]
    total = 1
    g = 0
    while cur.size:
        counts = rng.poisson(kernel.nu_inf(marks))
        n_next = int(counts.sum())
        total += n_next
        if total > point_cap:
            raise SamplerError(
                f"cluster exceeded {point_cap} points (rho={kernel.rho:.4g}; "
                "near-critical configurations grow huge clusters)"
            )
        if n_next == 0:
            break
        parents = np.repeat(cur, counts)
        cur = parents + kernel.sample_displacement(n_next, rng)
        g += 1
        pts.append(cur)
        gens.append(np.full(n_next, g, dtype=np.int64))
        marks = kernel.sample_mark(n_next, rng)
    return GWCluster(np.concatenate(pts), np.concatenate(gens), float(ancestor), anc_mark)


# -- the fixed-point operator on a uniform grid -----------------------------------


class PhiOperator:
    """Phi on grid functions with bracketed staircase quadrature.

    The integral int_0^{tau_i} g(tau_i - s) h(s, z) ds is bracketed per cell
    [tau_k, tau_{k+1}] between g at the two relevant nodes times the exact
    cell mass of h(., z); for CDF-like nondecreasing g the node values are the
    true cell extrema, so "up"/"down" rounding yields rigorous one-sided
    results (plus/minus EPS_ROUND absorbing float error).  Both alignments
    are single convolutions.
    """

    def __init__(self, kernel, step, n_nodes, eps=EPS_ROUND):
        if step <= 0 or n_nodes < 2:
            raise SamplerError("need a positive step and at least two grid nodes")
        self.kernel = kernel
        self.step = float(step)
        self.n_nodes = int(n_nodes)
        self.eps = float(eps)
        self.taus = np.arange(self.n_nodes) * self.step
        self._fft_len = sp_fft.next_fast_len(2 * self.n_nodes - 2)
        self._dnu = []
        self._dnu_fft = []
        self._nu_inf = []
        self._w = []
        for w, z in kernel.components():
            nu_nodes = kernel.nu(self.taus, z)
            dnu = np.diff(nu_nodes)
            self._dnu.append(dnu)
            self._dnu_fft.append(sp_fft.rfft(dnu, self._fft_len) if np.any(dnu) else None)
            self._nu_inf.append(float(kernel.nu_inf(z)))
            self._w.append(float(w))
        self.last_width = 0.0
        self.max_width = 0.0

    def _integrals(self, f):
        """Per-component (I_down, I_up) staircase quadratures as arrays."""
        out = []
        n = self.n_nodes
        f_fft = None
        for dnu, dnu_fft in zip(self._dnu, self._dnu_fft):
            if dnu_fft is None:
                zero = np.zeros(n)
                out.append((zero, zero))
                continue
            if f_fft is None:
                f_fft = sp_fft.rfft(f, self._fft_len)
            c = sp_fft.irfft(f_fft * dnu_fft, self._fft_len)
            i_up = c[:n].copy()
            i_up[:-1] -= f[0] * dnu
            i_down = np.concatenate([[0.0], c[: n - 1]])
            out.append((i_down, i_up))
        return out

    def apply(self, f, rounding):
        """Phi(f) on the grid; rounding in {'down', 'up', 'nearest'}."""
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_nodes,):
            raise SamplerError("grid function has the wrong length")
        if np.any(f < -1e-12) or np.any(f > 1 + 1e-12):
            raise SamplerError("grid function must take values in [0, 1]")
        out = np.zeros(self.n_nodes)
        width = 0.0
        for (i_down, i_up), nu_inf, w in zip(self._integrals(f), self._nu_inf, self._w):
            if rounding == "up":
                integral = i_up
            elif rounding == "down":
                integral = i_down
            else:
                integral = 0.5 * (i_down + i_up)
            width = max(width, w * float(np.max(i_up - i_down)))
            out += w * np.exp(np.minimum(-nu_inf + integral, 0.0))
        self.last_width = width
        self.max_width = max(self.max_width, width)
        if rounding == "up":
            out += self.eps
        elif rounding == "down":
            out -= self.eps
        return np.clip(out, 0.0, 1.0)


def phi_apply(f, kernel, step, rounding="nearest", quad_tol=0.25):
    """One application of Phi to a grid function on {0, step, 2*step, ...}.

    The staircase bracket width is the quadrature error estimate; raise when
    it exceeds quad_tol rather than return silently bad values.
    """
    f = np.asarray(f, dtype=float)
    op = PhiOperator(kernel, step, f.size)
    out = op.apply(f, rounding)
    if op.last_width > quad_tol:
        raise SamplerError(
            f"grid too coarse: staircase quadrature width {op.last_width:.3g} "
            f"exceeds {quad_tol:.3g}"
        )
    return out


# -- sandwich bounds ----------------------------------------------------------------


@dataclass(frozen=True)
class BoundPair:
    """Rigorous node bounds ell <= F <= upp on the survival tail F = 1 - E."""

    taus: np.ndarray
    ell: np.ndarray
    upp: np.ndarray
    n: int

    def __post_init__(self):
        if np.any(self.ell > self.upp + 1e-15):
            raise SamplerError("lower bound exceeded upper bound: rigor leak")

    @property
    def step(self):
        return float(self.taus[1] - self.taus[0])

    @property
    def width(self):
        return float(np.max(self.upp - self.ell))

    def lower_at(self, ts):
        """Valid lower bound off-grid: F is nonincreasing, so use the right node
        (zero beyond the grid)."""
        ts = np.asarray(ts, dtype=float)
        idx = np.ceil(ts / self.step - 1e-12).astype(np.int64)
        out = np.zeros(ts.shape)
        inside = idx < self.taus.size
        out[inside] = self.ell[np.clip(idx[inside], 0, self.taus.size - 1)]
        return out

    def upper_at(self, ts):
        """Valid upper bound off-grid: left node; frozen at the last node beyond."""
        ts = np.asarray(ts, dtype=float)
        idx = np.clip(np.floor(ts / self.step + 1e-12).astype(np.int64), 0, self.taus.size - 1)
        return self.upp[idx]


@dataclass
class Sandwich:
    """Monotone sandwich state: CDF-side iterates e_lo <= E <= e_hi on the grid.

    e_hi starts at 1 and is iterated with up-rounded quadrature; e_lo starts
    at the zero-started certified iterate (everything below E stays below E
    under down-rounding), optionally lifted by a user CDF G once G is
    certified <= E.  Both paths are clamped monotone in n and tightened
    monotone in t, so every BoundPair invariant holds by construction.
    """

    kernel: object
    phi: PhiOperator
    e_lo: np.ndarray
    e_hi: np.ndarray
    n: int = 0
    gap0: float = 1.0
    gaps: list = field(default_factory=list)
    cert_ok: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def taus(self):
        return self.phi.taus

    @property
    def gap(self):
        return float(np.max(self.e_hi - self.e_lo))

    def bounds(self):
        return BoundPair(self.taus, 1.0 - self.e_hi, 1.0 - self.e_lo, self.n)

    def certificate_bound(self, n=None):
        """Geometric certificate rho^n/(1-rho) * initial residual."""
        n = self.n if n is None else n
        rho = self.kernel.rho
        return rho**n / (1.0 - rho) * self.gap0

    def advance(self, steps=1):
        for _ in range(steps):
            hi = self.phi.apply(self.e_hi, "up")
            hi = np.minimum.accumulate(hi[::-1])[::-1]  # suffix-min: E nondecreasing
            self.e_hi = np.minimum(self.e_hi, hi)
            lo = self.phi.apply(self.e_lo, "down")
            lo = np.maximum.accumulate(lo)  # prefix-max: E nondecreasing
            self.e_lo = np.maximum(self.e_lo, lo)
            if np.any(self.e_lo > self.e_hi + 1e-15):
                raise SamplerError("sandwich sides crossed: rigor leak")
            self.n += 1
            g = self.gap
            self.gaps.append(g)
            self.cert_ok.append(bool(g <= self.certificate_bound()))
        return self.gap

    def drive(self, tol, n_max):
        """Iterate until the sup gap reaches tol; error with the achieved gap."""
        while self.gap > tol:
            if self.n >= n_max:
                raise SamplerError(
                    f"sandwich did not reach tolerance {tol:.3g} within {n_max} "
                    f"iterations; achieved gap {self.gap:.3g}"
                )
            self.advance(1)
        return self.bounds()


def _certified_floor(phi, n_nodes, cert_max=160, stall=0.25 * EPS_ROUND):
    """Zero-started down-rounded iterates: always <= E, driven to their stall."""
    z = np.zeros(n_nodes)
    used = 0
    for _ in range(cert_max):
        nxt = phi.apply(z, "down")
        nxt = np.maximum.accumulate(nxt)
        nxt = np.maximum(z, nxt)
        moved = float(np.max(nxt - z))
        z = nxt
        used += 1
        if moved < stall:
            break
    return z, used


def build_sandwich(
    kernel,
    G=None,
    n_max=200,
    tol=1e-3,
    t_max=None,
    step=1e-4,
    quad_tol=0.25,
):
    """Certified sandwich driven to tolerance on a uniform grid.

    G, when given, must be a CDF with G <= E; it is certified against the
    zero-started floor and then initializes the lower CDF path (the floor
    itself is used when it is tighter, and always when G is None).
    """
    if t_max is None:
        t_max = 30.0 / max(kernel.suggested_decay() / 2.0, 1e-6)
    n_nodes = max(int(math.ceil(t_max / step)) + 1, 8)
    phi = PhiOperator(kernel, step, n_nodes)
    floor, cert_iters = _certified_floor(phi, n_nodes)
    if phi.max_width > quad_tol:
        raise SamplerError(
            f"grid too coarse: staircase quadrature width {phi.max_width:.3g} "
            f"exceeds {quad_tol:.3g}"
        )
    e_lo = floor
    if G is not None:
        g_nodes = np.asarray(G(phi.taus), dtype=float)
        if np.any(g_nodes < -1e-12) or np.any(g_nodes > 1 + 1e-12) or np.any(np.diff(g_nodes) < -1e-12):
            raise SamplerError("G must be a nondecreasing CDF with values in [0, 1]")
        if np.any(g_nodes > floor + 1e-12):
            raise SamplerError("supplied G does not bracket the fixed point")
        e_lo = np.maximum(floor, g_nodes)
    sw = Sandwich(
        kernel=kernel,
        phi=phi,
        e_lo=e_lo,
        e_hi=np.ones(n_nodes),
        meta={"t_max": float(t_max), "step": float(step), "cert_iterations": cert_iters},
    )
    sw.gap0 = sw.gap
    sw.drive(tol, n_max)
    sw.meta["n_at_tol"] = sw.n
    sw.meta["gap_at_tol"] = sw.gap
    return sw


# -- the perfect sampler ---------------------------------------------------------------


def _moment_tail_bound(kernel, t_max):
    """Assumption-free (Markov) bound on int_{t_max}^inf P(L > t) dt.

    L is at most the sum S of all displacements in the cluster tree, whose
    first two moments are closed-form Wald-type recursions; then
    E[(S - T)^+] <= E[S^2]/T.
    """
    base = kernel._nu0_inf()
    if base == 0:
        return 0.0
    m_d = kernel._t_moment() / base
    # crude second moment of one displacement: bounded by support for compact
    # shapes; for the exponential shape it is 2/gamma^2 exactly.
    if isinstance(kernel, ExponentialFertility):
        q_d = 2.0 / kernel.gamma**2
    elif isinstance(kernel, PolynomialFertility):
        q_d = kernel.support**2
    else:
        q_d = float(kernel.breaks[-1]) ** 2 if hasattr(kernel, "breaks") else np.inf
    rho = kernel.rho
    w, z = np.array([m for m, _ in kernel.components()]), np.array(
        [z for _, z in kernel.components()]
    )
    rho2 = float(np.sum(w * (z * base) ** 2))
    s1 = rho * m_d / (1.0 - rho)
    s2 = (rho * (q_d + 2.0 * m_d * s1) + rho2 * (m_d + s1) ** 2) / (1.0 - rho)
    return s2 / t_max


class HawkesSampler:
    """Exact draws of a self-exciting process on [0, a] via sandwich thinning.

    Candidate pre-window ancestors are a Poisson process under a certified
    staircase envelope of the survival tail; uniform heights classify each
    candidate against the sandwich (retain strictly below the lower curve,
    discard strictly above the upper).  Unresolved candidates trigger more
    iterations, then a grid refinement, and finally the configured fallback:

    - "cluster-coin" (default): decide by simulating one cluster and keeping
      the candidate iff it survives past the candidate's distance (the
      successful cluster doubles as the conditioned cluster).  The decision
      replaces a conditional probability it differs from by at most the
      terminal band width, and fires with probability at most that width -
      the documented deviation from perfection, bounded by ~1e-5 per draw.
    - "error": raise carrying the offending points.

    Retained ancestors get clusters conditioned to reach the window by
    rejection; immigrants inside the window carry unconditioned clusters.
    """

    def __init__(
        self,
        kernel,
        mu,
        a,
        mu_bound=None,
        G=None,
        tol=1e-3,
        n_max=200,
        step=1e-4,
        t_max=None,
        refine_levels=1,
        classify_fallback="cluster-coin",
        point_cap=POINT_CAP,
    ):
        if a <= 0:
            raise SamplerError("window length must be positive")
        if classify_fallback not in ("cluster-coin", "error"):
            raise SamplerError("classify_fallback must be 'cluster-coin' or 'error'")
        self.kernel = kernel
        self.a = float(a)
        if callable(mu):
            if mu_bound is None:
                raise SamplerError("a callable immigrant intensity needs mu_bound")
            self.mu, self.mu_bound = mu, float(mu_bound)
        else:
            self.mu, self.mu_bound = None, float(mu)
            if self.mu_bound < 0:
                raise SamplerError("immigrant intensity must be nonnegative")
        self.tol = float(tol)
        self.n_max = int(n_max)
        self.refine_levels = int(refine_levels)
        self.classify_fallback = classify_fallback
        self.point_cap = int(point_cap)
        self._G = G
        self._step0 = float(step)
        self._t_max = t_max
        self.stats = {
            "fallback_coins": 0,
            "condition_attempts": 0,
            "grid_levels_built": 0,
            "extra_iterations": 0,
        }
        self.sandwich = build_sandwich(
            kernel, G=G, n_max=n_max, tol=tol, t_max=t_max, step=step
        )
        self._install_envelope()

    # -- envelope over the survival tail ------------------------------------
    def _install_envelope(self):
        sw = self.sandwich
        upp = (1.0 - sw.e_lo)[:-1]  # left-node staircase dominates F on each cell
        self._env_vals = upp
        self._env_step = sw.phi.step  # frozen: refinement must not move the envelope
        cell = upp * self._env_step * self.mu_bound
        self._env_cum = np.concatenate([[0.0], np.cumsum(cell)])
        self._env_mass = float(self._env_cum[-1])
        t_max = sw.meta["t_max"]
        delta = max(self.kernel.suggested_decay() / 2.0, 1e-6)
        assumed = self.mu_bound * math.exp(-delta * t_max) / delta
        retained = float(np.sum(sw.bounds().ell) * sw.phi.step * self.mu_bound)
        self.meta = {
            **sw.meta,
            "candidate_mass": self._env_mass,
            "retained_mass_estimate": retained,
            "tail_bound_assumed_decay": assumed,
            "tail_bound_moment": self.mu_bound * _moment_tail_bound(self.kernel, t_max),
            "tail_audit_ok": bool(assumed <= 1e-12 * max(retained, 1e-300)),
        }

    def _sample_candidates(self, rng):
        k = rng.poisson(self._env_mass)
        if k == 0:
            return np.empty(0)
        r = np.sort(rng.random(k)) * self._env_mass
        idx = np.clip(np.searchsorted(self._env_cum, r, side="right") - 1, 0, self._env_vals.size - 1)
        cell_mass = np.diff(self._env_cum)
        frac = (r - self._env_cum[idx]) / np.where(cell_mass[idx] > 0, cell_mass[idx], 1.0)
        ts = (idx + frac) * self._env_step
        if self.mu is not None:  # thin a bounded variable immigrant intensity
            accept = rng.random(k) * self.mu_bound < np.asarray(self.mu(-ts), dtype=float)
            ts = ts[accept]
        return ts

    def _env_at(self, ts):
        idx = np.clip(np.floor(ts / self._env_step).astype(np.int64), 0, self._env_vals.size - 1)
        return self._env_vals[idx]

    def _refine_grid(self):
        self.stats["grid_levels_built"] += 1
        self.sandwich = build_sandwich(
            self.kernel,
            G=self._G,
            n_max=self.n_max,
            tol=self.tol,
            t_max=self._t_max,
            step=self.sandwich.phi.step / 2.0,
        )
        # the frozen envelope stays: it is valid for any certified sandwich

    def _classify(self, ts, scores, rng):
        """True/False per candidate; exact except for the documented fallback."""
        retain = np.zeros(ts.size, dtype=bool)
        pending = np.ones(ts.size, dtype=bool)
        witnesses = {}
        levels_left = self.refine_levels
        while True:
            b = self.sandwich.bounds()
            lo, up = b.lower_at(ts), b.upper_at(ts)
            newly = pending & (scores < lo)
            retain[newly] = True
            pending &= ~(scores < lo) & ~(scores > up)
            if not pending.any():
                return retain, witnesses
            if self.sandwich.n < self.n_max:
                before = self.sandwich.gap
                self.sandwich.advance(3)
                self.stats["extra_iterations"] += 3
                if self.sandwich.gap < 0.98 * before:
                    continue
            if levels_left > 0:
                levels_left -= 1
                self._refine_grid()
                continue
            break
        stuck = np.flatnonzero(pending)
        if self.classify_fallback == "error":
            pts = ", ".join(f"(t={ts[i]:.6g}, height={scores[i]:.6g})" for i in stuck)
            raise SamplerError(
                f"{stuck.size} dominated points left unclassified between the bounds "
                f"after refinement: {pts}"
            )
        for i in stuck:
            self.stats["fallback_coins"] += 1
            cl = sample_gw_cluster(self.kernel, 0.0, rng, self.point_cap)
            if cl.extinction_time > ts[i]:
                retain[i] = True
                witnesses[int(i)] = cl
        return retain, witnesses

    def _conditioned_cluster(self, t, rng):
        """Cluster given that it reaches past t, by rejection."""
        floor = max(float(self.sandwich.bounds().lower_at(np.array([t]))[0]), 1e-6)
        cap = min(int(math.ceil(60.0 / floor)), CONDITION_ATTEMPT_CAP)
        for _ in range(cap):
            self.stats["condition_attempts"] += 1
            cl = sample_gw_cluster(self.kernel, 0.0, rng, self.point_cap)
            if cl.extinction_time > t:
                return cl
        raise SamplerError(
            f"conditioned-cluster rejection exhausted {cap} attempts at distance "
            f"{t:.4g} (success probability is the survival tail there)"
        )

    def sample(self, rng):
        """One exact draw on [0, a] as a sorted 1-D pattern."""
        ts = self._sample_candidates(rng)
        heights = rng.random(ts.size)
        scores = heights * self._env_at(ts)
        retain, witnesses = self._classify(ts, scores, rng)
        pieces = []
        for i in np.flatnonzero(retain):
            cl = witnesses.get(int(i))
            if cl is None:
                cl = self._conditioned_cluster(ts[i], rng)
            pieces.append(-ts[i] + cl.points)
        if self.mu is None:
            k = rng.poisson(self.mu_bound * self.a)
            imm = np.sort(rng.random(k)) * self.a
        else:
            k = rng.poisson(self.mu_bound * self.a)
            cand = np.sort(rng.random(k)) * self.a
            imm = cand[rng.random(k) * self.mu_bound < np.asarray(self.mu(cand), dtype=float)]
        for x in imm:
            cl = sample_gw_cluster(self.kernel, 0.0, rng, self.point_cap)
            pieces.append(x + cl.points)
        if pieces:
            pts = np.concatenate(pieces)
        else:
            pts = np.empty(0)
        window = Window((0.0,), (self.a,))
        return PointPattern(np.sort(pts).reshape(-1, 1), dim=1).restrict(window)


def mr_perfect_sample(mu, kernel, a, rng, G=None, tol=1e-3, **kwargs):
    """One-shot exact draw on [0, a]; build a HawkesSampler once for many draws."""
    return HawkesSampler(kernel, mu, a, G=G, tol=tol, **kwargs).sample(rng)

"""Bisection and linear interpolation (BLI) proposals for one real variable.

A random bisection search around a bracketed maximum of a log-density
``f`` visits a handful of points; the proposal is the normalised
piecewise-linear interpolation of ``exp(f)`` through them.  Because the
visited points depend only on ``f`` and fresh randomness, never on the
current value, the Metropolis-Hastings ratio needs only the interpolated
density at the proposed and the current value.
"""

import math
from bisect import bisect_right
from dataclasses import dataclass

from ._rng import as_stream
from .exceptions import NumericalError

__all__ = [
    "BLIConfig",
    "PiecewiseLinearDensity",
    "bli_points",
    "bli_propose",
    "bli_maximize",
    "grid_log_prob",
    "grid_sample",
    "candidate_probs",
]


@dataclass
class BLIConfig:
    bisection_min: int = 4
    bisection_max: int = 4
    epsilon_bracket: float = 200.0  # log-margin required at the bracket ends
    epsilon_stop: float = 1e-3  # log-margin below which bisection may stop early
    max_expand: int = 64


class PiecewiseLinearDensity:
    """Normalised density interpolating ``exp(logf)`` linearly between ``xs``."""

    def __init__(self, xs, logf):
        pts = sorted(zip(xs, logf))
        x, lf = [], []
        for a, b in pts:
            if x and a == x[-1]:
                continue
            x.append(float(a))
            lf.append(float(b))
        if len(x) < 2:
            raise NumericalError("interpolation needs at least two distinct points")
        top = max(lf)
        if top == -math.inf:
            raise NumericalError("log-density is -inf at every interpolation point")
        y = [math.exp(v - top) for v in lf]
        masses = [0.5 * (y[k] + y[k + 1]) * (x[k + 1] - x[k]) for k in range(len(x) - 1)]
        total = math.fsum(masses)
        if not total > 0:
            raise NumericalError("interpolated density has zero mass")
        self.x = x
        self.y = [v / total for v in y]
        self.cum = [0.0]
        acc = 0.0
        for m in masses:
            acc += m / total
            self.cum.append(acc)
        self.cum[-1] = 1.0

    @property
    def support(self):
        return self.x[0], self.x[-1]

    def _seg(self, v):
        k = bisect_right(self.x, v) - 1
        return min(max(k, 0), len(self.x) - 2)

    def pdf(self, v):
        x = self.x
        if v < x[0] or v > x[-1]:
            return 0.0
        k = self._seg(v)
        h = x[k + 1] - x[k]
        t = (v - x[k]) / h
        return self.y[k] * (1.0 - t) + self.y[k + 1] * t

    def logpdf(self, v):
        p = self.pdf(v)
        return math.log(p) if p > 0 else -math.inf

    def cdf(self, v):
        x = self.x
        if v <= x[0]:
            return 0.0
        if v >= x[-1]:
            return 1.0
        k = self._seg(v)
        h = x[k + 1] - x[k]
        t = v - x[k]
        y0, y1 = self.y[k], self.y[k + 1]
        return min(1.0, self.cum[k] + y0 * t + 0.5 * (y1 - y0) * t * t / h)

    def mass(self, lo, hi):
        return max(0.0, self.cdf(hi) - self.cdf(lo))

    def ppf(self, u):
        k = bisect_right(self.cum, u) - 1
        k = min(max(k, 0), len(self.x) - 2)
        c = u - self.cum[k]
        x0 = self.x[k]
        h = self.x[k + 1] - x0
        y0, y1 = self.y[k], self.y[k + 1]
        a = 0.5 * (y1 - y0) / h
        disc = y0 * y0 + 4.0 * a * c
        if disc < 0:
            disc = 0.0
        den = y0 + math.sqrt(disc)
        t = 2.0 * c / den if den > 0 else 0.0
        return x0 + min(max(t, 0.0), h)

    def sample(self, rng):
        return self.ppf(rng.random())


def _margin(fb, fa, fc):
    m = max(fa, fc)
    if m == -math.inf:
        return math.inf
    return fb - m


def bli_points(f, a, c, rng, config=None, optimize=False):
    """Run the bracketing and random bisection; return the visited points.

    Returns ``(xs, fs, b)`` where ``xs``/``fs`` are the evaluated points
    inside the final bracket and ``b`` the final midpoint.
    """
    cfg = config or BLIConfig()
    rng = as_stream(rng)
    if not a < c:
        raise NumericalError("initial bracket must satisfy a < c")
    seen = {}

    def ev(x):
        v = seen.get(x)
        if v is None:
            v = f(x)
            if v != v:  # nan
                v = -math.inf
            seen[x] = v
        return v

    b = 0.5 * (a + c) if optimize else rng.uniform(a, c)
    fa, fb, fc = ev(a), ev(b), ev(c)
    for _ in range(cfg.max_expand):
        if fb >= fa and fb >= fc and (fb > fa or fb > fc or fb > -math.inf):
            if fb > fa and fb > fc and _margin(fb, fa, fc) >= cfg.epsilon_bracket:
                break
            # bracketed but ends not negligible yet: push the higher end outwards
            if fa >= fc:
                a = b - 2.0 * (b - a)
                fa = ev(a)
            else:
                c = b + 2.0 * (c - b)
                fc = ev(c)
            continue
        if fa > fb or (fa == fb and fa >= fc):
            # shift left: the old left end is the better point
            c, fc = b, fb
            b, fb = a, fa
            a = b - 2.0 * (c - b)
            fa = ev(a)
        else:
            a, fa = b, fb
            b, fb = c, fc
            c = b + 2.0 * (b - a)
            fc = ev(c)
        if fb == -math.inf and fa == -math.inf and fc == -math.inf:
            continue
    else:
        raise NumericalError("could not bracket a maximum of the target")

    n = 0
    while n < cfg.bisection_max:
        if n >= cfg.bisection_min and _margin(fb, fa, fc) < cfg.epsilon_stop:
            break
        left = (b - a) >= (c - b)
        lo, hi = (a, b) if left else (b, c)
        y = 0.5 * (lo + hi) if optimize else rng.uniform(lo, hi)
        if y <= lo or y >= hi:
            break
        fy = ev(y)
        if fy > fb:
            if left:
                c, fc = b, fb
            else:
                a, fa = b, fb
            b, fb = y, fy
        elif left:
            a, fa = y, fy
        else:
            c, fc = y, fy
        n += 1
    xs = [x for x in seen if a <= x <= c]
    return xs, [seen[x] for x in xs], b


def bli_density(f, a, c, rng, config=None):
    xs, fs, _ = bli_points(f, a, c, rng, config)
    return PiecewiseLinearDensity(xs, fs)


def bli_propose(f, w_current, config=None, rng=None, a=-1.0, c=1.0):
    """Draw a new value from the BLI proposal built on log-density ``f``.

    Returns ``(w_new, log_q_forward, log_q_reverse)`` where the reverse term
    is the density of ``w_current`` under the same interpolation.
    """
    rng = as_stream(rng)
    dens = bli_density(f, a, c, rng, config)
    w_new = dens.sample(rng)
    return w_new, dens.logpdf(w_new), dens.logpdf(w_current)


def bli_maximize(f, a=-1.0, c=1.0, tol=1e-6, max_iter=200):
    """Deterministic bracketing plus bisection; returns ``(x_max, f(x_max))``."""
    max_expand = BLIConfig.max_expand
    seen = {}

    def ev(x):
        v = seen.get(x)
        if v is None:
            v = f(x)
            if v != v:
                v = -math.inf
            seen[x] = v
        return v

    b = 0.5 * (a + c)
    fa, fb, fc = ev(a), ev(b), ev(c)
    for _ in range(max_expand):
        if fb >= fa and fb >= fc:
            break
        if fa > fc:
            c, fc, b, fb = b, fb, a, fa
            a = b - 2.0 * (c - b)
            fa = ev(a)
        else:
            a, fa, b, fb = b, fb, c, fc
            c = b + 2.0 * (b - a)
            fc = ev(c)
    else:
        raise NumericalError("could not bracket a maximum of the target")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    it = 0
    while (c - a) > tol * (1.0 + abs(b)) and it < max_iter:
        if (b - a) > (c - b):
            y = b - (1.0 - invphi) * (b - a)
            fy = ev(y)
            if fy > fb:
                c, fc, b, fb = b, fb, y, fy
            else:
                a, fa = y, fy
        else:
            y = b + (1.0 - invphi) * (c - b)
            fy = ev(y)
            if fy > fb:
                a, fa, b, fb = b, fb, y, fy
            else:
                c, fc = y, fy
        it += 1
    return b, fb


# -- discretisation on a grid --------------------------------------------------


def _cell(dens, g, delta):
    return dens.mass((g - 0.5) * delta, (g + 0.5) * delta)


def grid_log_prob(dens, g, delta, exclude=()):
    """Log-probability of grid index ``g`` when cells in ``exclude`` are removed."""
    if g in exclude:
        return -math.inf
    p = _cell(dens, g, delta)
    if p <= 0:
        return -math.inf
    rest = 1.0 - math.fsum(_cell(dens, h, delta) for h in exclude)
    if rest <= 0:
        return -math.inf
    return math.log(p) - math.log(rest)


def grid_sample(dens, delta, exclude, rng, max_tries=64):
    """Sample a grid index from ``dens`` restricted to cells not in ``exclude``.

    Returns ``None`` when the excluded cells carry all the mass.
    """
    holes = sorted(exclude)
    spans = []
    for h in holes:
        lo = dens.cdf((h - 0.5) * delta)
        hi = dens.cdf((h + 0.5) * delta)
        if hi > lo:
            spans.append((lo, hi))
    rest = 1.0 - math.fsum(hi - lo for lo, hi in spans)
    if rest <= 0:
        return None
    ex = set(holes)
    for _ in range(max_tries):
        u = rng.random() * rest
        for lo, hi in spans:
            if u < lo:
                break
            u += hi - lo
        g = round(dens.ppf(min(u, 1.0)) / delta)
        if g not in ex:
            return int(g)
    return None


def candidate_probs(dens, cands, delta):
    """Probabilities over a finite list of grid indices (cell masses, or uniform)."""
    w = [_cell(dens, g, delta) for g in cands]
    tot = math.fsum(w)
    if not tot > 0:
        return [1.0 / len(cands)] * len(cands)
    return [v / tot for v in w]

"""Transfer operators, Gibbs measures, and cylinder thermodynamics for k-ary maps.

Potentials live on k-adic cylinder cells of a fixed depth m.  On that grid the
transfer operator of x -> kx mod 1 is an exact N x N matrix (N = k^m): cells
map onto unions of cells, so no discretization error enters anywhere in this
module.  Everything downstream -- pressure, entropy, the normalized potential,
invariant cylinder weights, measures of balls -- is exact up to float
round-off and the declared eigensolver tolerance.

Deep cylinder weights follow the product formula

    W(d_1..d_q) = h(head) * exp(sum_t g(window_t)) * nu(tail) / (lambda^(q-m) Z)

with h, nu the right/left Perron eigendata, head/tail the first/last m digits,
and window_t the m-digit windows d_{t+1}..d_{t+m} for t < q - m.  Weights are
kept in log space; a depth-10^4 cylinder is routine.  Interval masses
decompose the interval into maximal cylinders hanging off the two boundary
digit paths, so a ball mass costs O(depth * k) weight evaluations.

The asymptotic variance is the Green-Kubo sum sigma^2 = c_0 + 2 sum c_n over
autocorrelations of the centered log-weight observable, computed by iterating
the normalized operator; correlations decay at the subdominant eigenvalue
rate and the truncation tail is bounded from the observed decay ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .precision import SeededRng

__all__ = [
    "PotentialSpec",
    "TransferData",
    "ThermoSummary",
    "GibbsMeasure",
    "BallMass",
    "transfer_matrix",
    "transfer_data",
    "thermo_summary",
    "lil_statistic",
    "digits_to_fraction",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Potential for x -> kx mod 1, constant on depth-m k-adic cells."""

    branch_count: int
    depth: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.branch_count < 2:
            raise ValueError("branch_count must be at least 2")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if len(self.values) != self.branch_count**self.depth:
            raise ValueError("values must have length branch_count**depth")

    @classmethod
    def bernoulli(cls, probs: Sequence[float]) -> "PotentialSpec":
        """g = log p_b on branch b; the Gibbs state has iid base-k digits."""
        if any(p <= 0 for p in probs):
            raise ValueError("probabilities must be positive")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        return cls(branch_count=len(probs), depth=1, values=tuple(math.log(p) for p in probs))

    @classmethod
    def constant(cls, branch_count: int, value: float = 0.0) -> "PotentialSpec":
        """Constant potential; the Gibbs state is Lebesgue."""
        return cls(branch_count=branch_count, depth=1, values=(value,) * branch_count)

    @property
    def n_cells(self) -> int:
        return self.branch_count**self.depth

    def values_at_depth(self, q: int) -> np.ndarray:
        """g as a vector on depth-q cells, q >= depth, by repetition."""
        if q < self.depth:
            raise ValueError("cannot coarsen a potential")
        g = np.asarray(self.values, dtype=np.float64)
        return np.repeat(g, self.branch_count ** (q - self.depth))


def transfer_matrix(g_cells: np.ndarray, k: int) -> np.ndarray:
    """Matrix of (L phi)(x) = sum_{ky=x mod 1} e^{g(y)} phi(y) on the g-grid.

    Column j is the preimage cell: f maps cell j onto the k cells
    (kj + t) mod N, t = 0..k-1, each receiving weight e^{g_j}.
    """
    g_cells = np.asarray(g_cells, dtype=np.float64)
    n = g_cells.shape[0]
    mat = np.zeros((n, n))
    w = np.exp(g_cells)
    for j in range(n):
        for t in range(k):
            mat[(k * j + t) % n, j] += w[j]
    return mat


def _power_iteration(mat: np.ndarray, tol: float = 1e-15, max_iter: int = 50_000):
    """Perron eigenpair of a primitive nonnegative matrix; deterministic start."""
    n = mat.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 1.0
    for _ in range(max_iter):
        w = mat @ v
        lam_new = w.sum()
        w /= lam_new
        if abs(lam_new - lam) <= tol * abs(lam_new) and np.max(np.abs(w - v)) <= tol:
            v, lam = w, lam_new
            break
        v, lam = w, lam_new
    else:
        raise ArithmeticError("power iteration did not converge")
    w = mat @ v
    lam = float(np.sum(w) / np.sum(v))
    return lam, v / v.sum()


@dataclass
class TransferData:
    """Perron eigendata of the transfer operator on the potential's grid."""

    spec: PotentialSpec
    lam: float  # leading eigenvalue
    pressure: float  # ln lam
    h: np.ndarray  # right eigenfunction on depth-m cells, Lebesgue mean 1
    nu: np.ndarray  # conformal measure weights on depth-m cells, total 1
    z: float  # sum h_j nu_j
    mu: np.ndarray  # Gibbs weights on depth-m cells
    ghat: np.ndarray  # normalized potential on depth-(m+1) cells
    mu_fine: np.ndarray  # Gibbs weights on depth-(m+1) cells

    @property
    def entropy(self) -> float:
        g = np.asarray(self.spec.values)
        return float(self.pressure - np.dot(g, self.mu))

    @property
    def lyapunov(self) -> float:
        return math.log(self.spec.branch_count)

    @property
    def dimension(self) -> float:
        return self.entropy / self.lyapunov


def transfer_data(spec: PotentialSpec) -> TransferData:
    k = spec.branch_count
    n = spec.n_cells
    mat = transfer_matrix(np.asarray(spec.values), k)
    lam, h = _power_iteration(mat)
    _, nu = _power_iteration(mat.T)
    h = h / h.mean()
    z = float(np.dot(h, nu))
    mu = h * nu / z
    pressure = math.log(lam)

    # the normalized potential lives one level deeper: a depth-(m+1) cell j
    # has parent j // k, and f maps it onto the depth-m cell j mod n
    j = np.arange(k * n)
    g_parent = np.asarray(spec.values)[j // k]
    ghat = g_parent + np.log(h[j // k]) - np.log(h[j % n]) - pressure
    mu_fine = h[j // k] * np.exp(g_parent) * nu[j % n] / (lam * z)
    return TransferData(
        spec=spec, lam=lam, pressure=pressure, h=h, nu=nu, z=z, mu=mu, ghat=ghat, mu_fine=mu_fine
    )


@dataclass(frozen=True)
class ThermoSummary:
    pressure: float
    entropy: float
    lyapunov: float
    dimension: float
    sigma2: float
    sigma: float
    lil_limit: float  # sigma / sqrt(lyapunov)
    degenerate: bool  # sigma2 clamped to zero
    gk_terms: int
    gk_tail_bound: float


def thermo_summary(
    spec: PotentialSpec,
    n_max: int = 200,
    tol_sigma: float = 1e-6,
) -> ThermoSummary:
    """Pressure, entropy, dimension, and the Green-Kubo variance of the potential.

    The variance is for the centered observable psi = -ghat - entropy, whose
    Birkhoff sums track |ln mu(cylinder)| - entropy * depth.  The conformal
    family g = -t ln k + const gives sigma2 = 0 exactly; anything below
    tol_sigma is reported as degenerate.
    """
    td = transfer_data(spec)
    k = spec.branch_count
    psi = -td.ghat - td.entropy
    mat = transfer_matrix(td.ghat, k)
    mu_fine = td.mu_fine

    c0 = float(np.dot(mu_fine, psi * psi))
    cs: list[float] = []
    phi = psi.copy()
    tail = 0.0
    atol = max(1e-17, 1e-16 * max(c0, 1.0))
    for _ in range(n_max):
        phi = mat @ phi
        cn = float(np.dot(mu_fine, phi * psi))
        cs.append(cn)
        if abs(cn) < atol:
            tail = 0.0
            break
    else:
        ratios = [
            abs(cs[i + 1]) / abs(cs[i])
            for i in range(max(0, len(cs) - 5), len(cs) - 1)
            if abs(cs[i]) > 0
        ]
        theta = min(max(ratios, default=0.5), 0.95)
        tail = 2.0 * abs(cs[-1]) * theta / (1.0 - theta)
    sigma2 = c0 + 2.0 * sum(cs)
    degenerate = sigma2 < tol_sigma
    sigma2_out = 0.0 if degenerate else sigma2
    sigma = math.sqrt(sigma2_out)
    return ThermoSummary(
        pressure=td.pressure,
        entropy=td.entropy,
        lyapunov=td.lyapunov,
        dimension=td.dimension,
        sigma2=sigma2_out,
        sigma=sigma,
        lil_limit=sigma / math.sqrt(td.lyapunov),
        degenerate=degenerate,
        gk_terms=len(cs),
        gk_tail_bound=tail,
    )


@dataclass(frozen=True)
class BallMass:
    log_lower: float
    log_upper: float

    @property
    def exact(self) -> bool:
        return self.log_lower == self.log_upper

    @property
    def log_mid(self) -> float:
        if math.isinf(self.log_lower):
            return self.log_upper
        return 0.5 * (self.log_lower + self.log_upper)


def _logsumexp_list(terms: list[float]) -> float:
    if not terms:
        return -math.inf
    arr = np.asarray(terms, dtype=np.float64)
    hi = float(np.max(arr))
    if math.isinf(hi):
        return -math.inf
    return hi + math.log(float(np.sum(np.exp(arr - hi))))


def digits_to_fraction(digits: Iterable[int], k: int) -> Fraction:
    num = 0
    n = 0
    for d in digits:
        num = num * k + int(d)
        n += 1
    return Fraction(num, k**n)


class GibbsMeasure:
    """Invariant Gibbs state of a cylinder potential, with exact cylinder calculus.

    Provides log weights of arbitrary-depth cylinders, inner/outer masses of
    intervals and balls (exact when the endpoints are k-adic at the working
    depth), marginal cell weights, and a vectorized sampler of digit strings.
    """

    def __init__(self, spec: PotentialSpec):
        self.spec = spec
        self.td = transfer_data(spec)
        self.k = spec.branch_count
        self.m = spec.depth
        n = spec.n_cells
        self._log_h = np.log(self.td.h)
        self._log_nu = np.log(self.td.nu)
        self._log_lam = self.td.pressure
        self._log_z = math.log(self.td.z)
        self._g = np.asarray(spec.values, dtype=np.float64)
        # marginal cell weights at depths 0..m
        self._marg: list[np.ndarray] = [np.zeros(0)] * (self.m + 1)
        self._marg[self.m] = self.td.mu.copy()
        for d in range(self.m - 1, -1, -1):
            self._marg[d] = self._marg[d + 1].reshape(self.k**d, self.k).sum(axis=1)
        # digit transition kernel on m-digit windows: P(b | w)
        tail_next = (np.arange(n)[:, None] % self.k ** (self.m - 1)) * self.k + np.arange(self.k)[None, :]
        trans = np.exp(self._g)[:, None] * self.td.nu[tail_next] / (self.td.lam * self.td.nu[:, None])
        self._trans_cum = np.cumsum(trans, axis=1)
        self._mu_cum = np.cumsum(self.td.mu)

    @property
    def dimension(self) -> float:
        return self.td.dimension

    # -- cylinder weights ------------------------------------------------------

    def cell_log_weights(self, depth: int) -> np.ndarray:
        """Log Gibbs weights of all depth-q cells (array of length k^q)."""
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        if depth <= self.m:
            with np.errstate(divide="ignore"):
                return np.log(self._marg[depth])
        k, n = self.k, self.spec.n_cells
        with np.errstate(divide="ignore"):
            logw = np.log(self.td.mu)
        for q in range(self.m, depth):
            j = np.arange(k**q, dtype=np.int64)
            tail = j % n
            tail_head = (j % (n // k)) * k  # tail digits 2..m of the extended string
            ratios = np.empty((k**q, k))
            for b in range(k):
                ratios[:, b] = (
                    self._g[tail] + self._log_nu[tail_head + b] - self._log_lam - self._log_nu[tail]
                )
            logw = (logw[:, None] + ratios).reshape(-1)
        return logw

    def log_cylinder_weight(self, digits: Sequence[int]) -> float:
        """Log Gibbs weight of the cylinder with the given digit string."""
        q = len(digits)
        k, m = self.k, self.m
        if any(not 0 <= d < k for d in digits):
            raise ValueError("digit out of range")
        if q <= m:
            idx = 0
            for d in digits:
                idx = idx * k + int(d)
            val = self._marg[q][idx] if q > 0 else 1.0
            return math.log(val) if val > 0 else -math.inf
        d = np.asarray(digits, dtype=np.int64)
        win, gsum, _ = self._path_arrays(d)
        return self._path_cell_logw(win, gsum, q)

    def _path_arrays(self, d: np.ndarray):
        """Rolling m-digit windows, prefix g-sums, and short prefix values of a path."""
        q = len(d)
        k, m = self.k, self.m
        pows = k ** np.arange(m - 1, -1, -1, dtype=np.int64)
        win = np.lib.stride_tricks.sliding_window_view(d, m) @ pows if q >= m else np.zeros(0, np.int64)
        # gsum[t] = windows fully inside the first t digits; only windows not
        # touching digit t-1 enter, so a sibling in the last digit reuses gsum
        gsum = np.zeros(q + 1)
        if q >= m + 1:
            gsum[m : q + 1] = np.concatenate([[0.0], np.cumsum(self._g[win[: q - m]])])
        pv = [0] * (min(q, self.m) + 1)
        for i in range(min(q, self.m)):
            pv[i + 1] = pv[i] * k + int(d[i])
        return win, gsum, pv

    def _path_cell_logw(self, win, gsum, q: int) -> float:
        m = self.m
        return float(
            self._log_h[int(win[0])]
            + gsum[q]
            + self._log_nu[int(win[q - m])]
            - (q - m) * self._log_lam
            - self._log_z
        )

    def _sibling_logw(self, win, gsum, pv, level: int, c: int) -> float:
        """Log weight of the cylinder (path digits d_1..d_{level-1}, c)."""
        k, m = self.k, self.m
        if level <= m:
            idx = pv[level - 1] * k + c
            val = self._marg[level][idx]
            return math.log(val) if val > 0 else -math.inf
        head = int(win[0])
        tp = int(win[level - m]) // k  # tail digits minus the swapped last one
        return float(
            self._log_h[head]
            + gsum[level]
            + self._log_nu[tp * k + c]
            - (level - m) * self._log_lam
            - self._log_z
        )

    # -- interval and ball masses ------------------------------------------------

    def interval_log_mass(self, a: Fraction, b: Fraction, depth: int) -> BallMass:
        """Inner/outer log mass of [a, b) from the depth-q cylinder cover.

        Exact (lower == upper) when both endpoints are k-adic of depth <= q.
        """
        if not (0 <= a <= 1 and 0 <= b <= 1):
            raise ValueError("endpoints must lie in [0, 1]")
        if b <= a:
            return BallMass(-math.inf, -math.inf)
        k, m = self.k, self.m
        q = depth
        scale = k**q
        if q < m + 1:
            logw = self.cell_log_weights(q)
            ai, ar = divmod((a * scale).numerator, (a * scale).denominator)
            bi, br = divmod((b * scale).numerator, (b * scale).denominator)
            inner = [float(logw[j]) for j in range(ai + (1 if ar else 0), bi)]
            outer = list(inner)
            if ar:
                outer.append(float(logw[ai]))
            if br:
                outer.append(float(logw[bi]))
            return BallMass(_logsumexp_list(inner), _logsumexp_list(outer))

        ai, ar = divmod((a * scale).numerator, (a * scale).denominator)
        bi, br = divmod((b * scale).numerator, (b * scale).denominator)
        a_exact = ar == 0
        # b == 1 covers the last cell fully; step the boundary path back onto it
        right_full = False
        if bi == scale:
            bi, br = scale - 1, 0
            right_full = True
        if ai == bi:
            cell_w = self.log_cylinder_weight(self._digits_of(ai, q))
            if a_exact and right_full:
                return BallMass(cell_w, cell_w)
            return BallMass(-math.inf, cell_w)

        da = np.asarray(self._digits_of(ai, q), dtype=np.int64)
        db = np.asarray(self._digits_of(bi, q), dtype=np.int64)
        win_a, gsum_a, pv_a = self._path_arrays(da)
        win_b, gsum_b, pv_b = self._path_arrays(db)
        lstar = 0
        while da[lstar] == db[lstar]:
            lstar += 1

        terms: list[float] = []
        # right-siblings along a's path below the split level
        for level in range(lstar + 2, q + 1):
            for c in range(int(da[level - 1]) + 1, k):
                terms.append(self._sibling_logw(win_a, gsum_a, pv_a, level, c))
        # middle siblings at the split level
        for c in range(int(da[lstar]) + 1, int(db[lstar])):
            terms.append(self._sibling_logw(win_a, gsum_a, pv_a, lstar + 1, c))
        # left-siblings along b's path below the split level
        for level in range(lstar + 2, q + 1):
            for c in range(0, int(db[level - 1])):
                terms.append(self._sibling_logw(win_b, gsum_b, pv_b, level, c))

        a_cell = self._path_cell_logw(win_a, gsum_a, q)
        b_cell = self._path_cell_logw(win_b, gsum_b, q)
        inner = list(terms)
        outer = list(terms)
        if a_exact:
            inner.append(a_cell)
        outer.append(a_cell)
        if right_full:
            inner.append(b_cell)
            outer.append(b_cell)
        elif br:
            outer.append(b_cell)
        return BallMass(_logsumexp_list(inner), _logsumexp_list(outer))

    def _digits_of(self, cell: int, depth: int) -> list[int]:
        out = [0] * depth
        for i in range(depth - 1, -1, -1):
            cell, out[i] = divmod(cell, self.k)
        return out

    def ball_log_mass(self, x: Fraction, r: Fraction, depth: Optional[int] = None) -> BallMass:
        """Inner/outer log mass of the metric ball B(x, r) on the circle."""
        x = Fraction(x) % 1
        r = Fraction(r)
        if r < 0:
            raise ValueError("r must be nonnegative")
        if 2 * r >= 1:
            return BallMass(0.0, 0.0)
        if depth is None:
            depth = self._auto_depth(x, r)
        a, b = x - r, x + r
        if a < 0:
            pieces = [(a % 1, Fraction(1)), (Fraction(0), b)]
        elif b > 1:
            pieces = [(a, Fraction(1)), (Fraction(0), b % 1)]
        else:
            pieces = [(a, b)]
        los, his = [], []
        for lo_f, hi_f in pieces:
            bm = self.interval_log_mass(lo_f, hi_f, depth)
            los.append(bm.log_lower)
            his.append(bm.log_upper)
        return BallMass(_logsumexp_list(los), _logsumexp_list(his))

    def _auto_depth(self, x: Fraction, r: Fraction) -> int:
        depth = self.m + 1
        for f in (x - r, x + r):
            den = (f % 1).denominator
            d, p = 0, 1
            while p < den:
                p *= self.k
                d += 1
                if d > 20_000:
                    raise ValueError("endpoint needs too deep a grid; pass depth explicitly")
            depth = max(depth, d + 1)
        return depth

    # -- sampling -----------------------------------------------------------------

    def sample_digits(
        self,
        rng: SeededRng,
        sample_indices: np.ndarray,
        n_digits: int,
        channel: int = 0,
    ) -> np.ndarray:
        """Stationary digit strings, one per sample index, via the window chain.

        Sample i draws from stream (channel << 48) | i, so results do not
        depend on how indices are batched across workers.
        """
        if n_digits < self.m:
            raise ValueError("need at least depth-many digits")
        idxs = np.asarray(sample_indices, dtype=np.int64)
        s = len(idxs)
        n_draws = n_digits - self.m + 1
        u = np.empty((s, n_draws))
        for row, idx in enumerate(idxs):
            sub = rng.child((int(channel) << 48) | int(idx))
            u[row] = sub.generator().random(n_draws)
        k, m = self.k, self.m
        out = np.empty((s, n_digits), dtype=np.int8)
        w = np.searchsorted(self._mu_cum, u[:, 0], side="right")
        w = np.minimum(w, self.spec.n_cells - 1).astype(np.int64)
        ww = w.copy()
        for i in range(m - 1, -1, -1):
            out[:, i] = ww % k
            ww //= k
        for j in range(m, n_digits):
            uu = u[:, j - m + 1]
            digit = (self._trans_cum[w] < uu[:, None]).sum(axis=1)
            digit = np.minimum(digit, k - 1)
            out[:, j] = digit
            w = (w % k ** (m - 1)) * k + digit
        return out


def lil_statistic(log_mass: float, log_delta: float, dimension: float) -> float:
    """(|ln mu(B(x, delta))| - d |ln delta|) / sqrt(2 |ln delta| ln ln |ln delta|)."""
    t = -log_delta
    if t <= math.e:
        raise ValueError("delta too large for the iterated-logarithm normalization")
    return (-log_mass - dimension * t) / math.sqrt(2.0 * t * math.log(math.log(t)))

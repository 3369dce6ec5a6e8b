"""Iterate hierarchy of the power-series (in data) solution.

The k-th iterate feeds the degree-(2 sigma + 1) multilinear product of lower
iterates through the free flow and a time integral; only k = 1 mod 2 sigma
occurs.  This module computes the iterates by nested Gauss-Legendre
quadrature of the time integrals, sums the truncated series with an
algebra-norm tail bound, and turns the two-sided norm estimates on the
iterates into executable audits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .norms import lattice_weight_sum, ma_norm, weight_lp_on_grid
from .spectral import (
    SpectralField,
    field,
    free_propagate,
    product_fields,
    support_node_count,
    zero_field,
)

INF = math.inf


class ParityError(ValueError):
    """Requested iterate index is not congruent to 1 mod 2*sigma."""


class BudgetError(RuntimeError):
    """Composition enumeration or truncation depth exceeds the budget."""


class SummabilityError(RuntimeError):
    """Series smallness condition violated; the tail bound does not apply."""


@dataclass(frozen=True)
class PicardConfig:
    """Knobs of the truncated series computation."""

    sigma: int
    mu: int = 1
    l_max: int = 2
    duhamel_nodes: int = 17
    rho_cap: float = 0.5
    max_compositions: int = 20_000

    def __post_init__(self):
        if self.sigma < 1:
            raise ValueError("sigma must be a positive integer")
        if self.mu not in (1, -1):
            raise ValueError("mu must be +1 or -1")
        if self.l_max < 2:
            raise ValueError("l_max must be >= 2 (at least three nonzero terms)")
        if self.duhamel_nodes < 9:
            raise ValueError("duhamel_nodes must be >= 9")

    @property
    def degree(self) -> int:
        return 2 * self.sigma + 1

    @property
    def k_max(self) -> int:
        return 2 * self.sigma * self.l_max + 1


def mu_sigma(fields_in, sigma: int) -> SpectralField:
    """Multilinear product: sigma+1 plain factors then sigma conjugated."""
    if len(fields_in) != 2 * sigma + 1:
        raise ValueError(f"expected {2 * sigma + 1} factors, got {len(fields_in)}")
    conj = [False] * (sigma + 1) + [True] * sigma
    return product_fields(fields_in, conjugate=conj)


@lru_cache(maxsize=128)
def compositions(k: int, sigma: int) -> tuple:
    """Ordered tuples of admissible indices (k_j = 1 mod 2 sigma) summing to k."""
    slots = 2 * sigma + 1
    admissible = tuple(range(1, k + 1, 2 * sigma))
    out = []
    for combo in itertools.product(admissible, repeat=slots):
        if sum(combo) == k:
            out.append(combo)
    return tuple(sorted(out))


@lru_cache(maxsize=32)
def _gl_nodes(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _quantize(t):
    return round(float(t), 12)


class PicardExpansion:
    """Memoized iterate computations for one datum and configuration."""

    def __init__(self, psi0: SpectralField, cfg: PicardConfig):
        self.psi0 = psi0
        self.cfg = cfg
        self._memo = {}

    def iterate(self, k: int, t: float) -> SpectralField:
        """U_k at time t; raises ParityError for inadmissible k."""
        cfg = self.cfg
        if k < 1:
            raise ParityError(f"iterate index must be >= 1, got {k}")
        if (k - 1) % (2 * cfg.sigma) != 0:
            raise ParityError(
                f"U_{k} vanishes identically: k = 1 mod {2 * cfg.sigma} required"
            )
        if k == 1:
            return free_propagate(self.psi0, t)
        key = (k, _quantize(t))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        comps = compositions(k, cfg.sigma)
        if len(comps) > cfg.max_compositions:
            raise BudgetError(
                f"{len(comps)} compositions for k={k} exceed the budget "
                f"{cfg.max_compositions}"
            )
        if t == 0.0:
            out = zero_field(self.psi0.grid)
            self._memo[key] = out
            return out
        x, w = _gl_nodes(cfg.duhamel_nodes)
        taus = 0.5 * t * (x + 1.0)
        weights = 0.5 * t * w
        acc = np.zeros(self.psi0.grid.shape, dtype=np.complex128)
        for comp in comps:
            for tau, wt in zip(taus, weights):
                inner = [self.iterate(kj, tau) for kj in comp]
                prod = mu_sigma(inner, cfg.sigma)
                acc += wt * free_propagate(prod, t - tau).values
        out = field(self.psi0.grid, (-1j * cfg.mu) * acc)
        self._memo[key] = out
        return out

    def terms(self, t: float) -> dict:
        """All series terms U_{2 sigma l + 1}(t), l = 0..l_max."""
        cfg = self.cfg
        return {
            2 * cfg.sigma * l + 1: self.iterate(2 * cfg.sigma * l + 1, t)
            for l in range(cfg.l_max + 1)
        }


def support_measure(f: SpectralField) -> float:
    """Lattice measure (node count times dxi^d) of the exact support."""
    g = f.grid
    return support_node_count(f) * g.dxi**g.d


@dataclass(frozen=True)
class PicardSumResult:
    total: SpectralField
    terms: dict
    a_cube: float
    m_a_data: float  # algebra norm of the datum
    c_emp: float  # measured algebra-bound constant on the computed terms
    c_used: float  # c_emp times the safety factor used for reporting
    ratio: float  # geometric ratio of the reported tail
    tail_ma: float  # bound on the algebra norm of the neglected tail
    first_neglected_ma: float
    rho_value: float


def picard_sum(
    psi0: SpectralField,
    t: float,
    cfg: PicardConfig,
    a_cube: float,
    rho_value: float | None = None,
    expansion: PicardExpansion | None = None,
) -> PicardSumResult:
    """Truncated series sum with an analytic tail bound in the algebra norm.

    ``rho_value`` is the regime smallness parameter when the datum comes from
    an inflation construction; otherwise the admission check falls back on
    the measured algebra norm of the datum.  Refuses when the smallness cap
    is violated, since the geometric tail bound is then unsupported.
    """
    sig = cfg.sigma
    m_a = ma_norm(psi0, a_cube)
    if m_a == 0.0:
        zero = zero_field(psi0.grid)
        return PicardSumResult(zero, {1: zero}, a_cube, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    admission = rho_value if rho_value is not None else t ** (1.0 / (2 * sig)) * a_cube ** (
        psi0.grid.d / 2.0
    ) * m_a
    if admission >= cfg.rho_cap:
        raise SummabilityError(
            f"smallness parameter {admission:.3g} >= cap {cfg.rho_cap}; "
            "the geometric tail bound does not apply"
        )
    exp = expansion if expansion is not None else PicardExpansion(psi0, cfg)
    terms = exp.terms(t)
    total = zero_field(psi0.grid).values
    for k in sorted(terms):
        total = total + terms[k].values
    total_field = field(psi0.grid, total)

    # empirical algebra-bound constant from the computed nonlinear terms
    d = psi0.grid.d
    c_emp = 0.0
    for k, fk in terms.items():
        if k == 1:
            continue
        nk = ma_norm(fk, a_cube)
        if nk <= 0:
            continue
        base = nk / (t ** ((k - 1) / (2.0 * sig)) * m_a**k * a_cube ** (d * (k - 1) / 2.0))
        c_emp = max(c_emp, base ** (1.0 / (k - 1)))
    c_used = 2.0 * c_emp
    r = t ** (1.0 / (2.0 * sig)) * c_used * a_cube ** (d / 2.0) * m_a
    k_first = 2 * sig * (cfg.l_max + 1) + 1
    first = m_a * r ** (k_first - 1)
    step = r ** (2 * sig)
    tail = first / (1.0 - step) if step < 1.0 else INF
    return PicardSumResult(
        total_field, terms, a_cube, m_a, c_emp, c_used, step, tail, first, admission
    )


# ---------------------------------------------------------------------------
# direct-evaluation oracle for the first nonlinear iterate
# ---------------------------------------------------------------------------

def _time_phase_integral(phi, t):
    """Closed form of int_0^t e^{i tau phi / 2} d tau, stable near phi = 0."""
    phi = np.asarray(phi, dtype=np.float64)
    z = 0.5 * t * phi
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    out = t * (np.exp(1j * z) - 1.0) / (1j * zs)
    ser = t * (1.0 + 0.5j * z - z * z / 6.0)
    return np.where(small, ser, out)


def direct_first_iterate(
    psi0: SpectralField, t: float, sigma: int, mu: int, targets
) -> np.ndarray:
    """U_{2 sigma + 1}(t, xi) at selected nodes by direct lattice summation.

    Independent of the FFT convolution and Gauss-Legendre machinery: the
    (2 sigma)-fold frequency sum runs over the nonzero support and the time
    integral uses its closed form.  ``targets`` is a sequence of index
    tuples; returns the complex values at those nodes.
    """
    g = psi0.grid
    d = g.d
    ax = g.axis_freqs()
    nz = np.nonzero(psi0.values)
    coords = np.stack([ax[nz[a]] for a in range(d)], axis=1)  # (n, d)
    vals = psi0.values[nz]
    n = vals.size
    slots = 2 * sigma + 1
    i0 = g.center_index

    out = np.zeros(len(targets), dtype=np.complex128)
    free = slots - 1
    for ti, tgt in enumerate(targets):
        tgt = tuple(tgt)
        xi = np.array([ax[tgt[a]] for a in range(d)])
        xi_sq = float(xi @ xi)
        total = 0.0 + 0.0j
        # iterate over the first 2*sigma factors; the last (conjugated) one
        # is pinned by the frequency constraint
        for combo in itertools.product(range(n), repeat=free - 1):
            # vectorize the innermost free index
            base_sum = np.zeros(d)
            base_prod = 1.0 + 0.0j
            base_sq = 0.0
            ok = True
            for slot, idx in enumerate(combo):
                c = coords[idx]
                v = vals[idx]
                if slot < sigma + 1:
                    base_sum = base_sum + c
                    base_prod *= v
                    base_sq += float(c @ c)
                else:
                    base_sum = base_sum - c
                    base_prod *= np.conj(v)
                    base_sq -= float(c @ c)
            # innermost slot index: it is slot free-1; decide its conjugation
            slot_last_free = free - 1
            if slot_last_free < sigma + 1:
                sum_grid = base_sum[None, :] + coords
                prod_grid = base_prod * vals
                sq_grid = base_sq + np.sum(coords**2, axis=1)
            else:
                sum_grid = base_sum[None, :] - coords
                prod_grid = base_prod * np.conj(vals)
                sq_grid = base_sq - np.sum(coords**2, axis=1)
            # pinned last factor (always conjugated: slot index 2 sigma)
            pin = sum_grid - xi[None, :]
            pin_idx = np.rint(pin / g.dxi).astype(int) + i0
            good = np.all((pin_idx >= 0) & (pin_idx < g.m), axis=1)
            off = np.max(np.abs(pin - (pin_idx - i0) * g.dxi), axis=1)
            good &= off < 1e-9
            if not np.any(good):
                continue
            pin_vals = psi0.values[tuple(pin_idx[good].T)]
            pin_sq = np.sum(pin[good] ** 2, axis=1)
            phi = xi_sq - (sq_grid[good] - pin_sq)
            tint = _time_phase_integral(phi, t)
            total += np.sum(prod_grid[good] * np.conj(pin_vals) * tint)
        out[ti] = -1j * mu * np.exp(-0.5j * t * xi_sq) * total * g.dxi ** (d * free)
    return out


# ---------------------------------------------------------------------------
# phase condition and norm audits
# ---------------------------------------------------------------------------

def zero_sum_center_tuples(sigma: int, n_freq: float, d: int):
    """Center tuples from {N e_d, -N e_d, 2N e_d} with vanishing block sum."""
    e_d = np.zeros(d)
    e_d[-1] = 1.0
    centers = [n_freq * e_d, -n_freq * e_d, 2 * n_freq * e_d]
    out = []
    for combo in itertools.product(range(3), repeat=2 * sigma + 1):
        vs = [centers[c] for c in combo]
        tot = sum(vs[: sigma + 1]) - sum(vs[sigma + 1 :])
        if np.allclose(tot, 0.0):
            out.append(tuple(combo))
    return out, centers

def phase_condition_min_real(
    n_freq: float, a_cube: float, t: float, sigma: int, d: int
) -> float:
    """Min over sampled on-support phase mismatches of Re int_0^T e^{it phi/2}.

    Samples the corners of the frequency cubes entering the first nonlinear
    iterate on the central target cube; the time-integral real part must
    stay >= T/2 for the pointwise lower bound to hold.
    """
    tuples, centers = zero_sum_center_tuples(sigma, n_freq, d)
    half = a_cube / 2.0
    cube_corners = [np.array(c) for c in itertools.product((-half, half), repeat=d)]
    tgt_half = half / (2 * sigma + 1)
    tgt_corners = [np.zeros(d)] + [
        np.array(c) for c in itertools.product((-tgt_half, tgt_half), repeat=d)
    ]
    slots = 2 * sigma + 1
    min_real = INF
    for combo in tuples:
        for corner_pick in itertools.product(range(len(cube_corners)), repeat=slots):
            sq_sum = 0.0
            for slot, (ci, cor) in enumerate(zip(combo, corner_pick)):
                vec = centers[ci] + cube_corners[cor]
                sgn = 1.0 if slot < sigma + 1 else -1.0
                sq_sum += sgn * float(vec @ vec)
            for tgt in tgt_corners:
                phi = float(tgt @ tgt) - sq_sum
                val = float(np.real(_time_phase_integral(np.array([phi]), t))[0])
                min_real = min(min_real, val)
    return min_real


@dataclass(frozen=True)
class AuditRow:
    k: int
    norm_label: str
    measured: float
    lemma_rhs: float
    ratio: float

    def as_dict(self):
        return {
            "k": self.k,
            "norm_spec": self.norm_label,
            "measured": self.measured,
            "lemma_rhs": self.lemma_rhs,
            "ratio": self.ratio,
        }


def lemma_rhs(
    k: int,
    branch: str,
    r_amp: float,
    a_cube: float,
    n_freq: float,
    t: float,
    s: float,
    sigma: int,
    grid,
    p: float = 2.0,
    q: float = 2.0,
) -> float:
    """Right-hand side (constants set to 1) of the iterate norm estimates.

    ``branch`` selects the space family: "fl" uses the weighted-L^p cube
    factor and rho_1; "mod_low"/"mod_high" use the lattice weight sum with
    the q-dependent smallness parameter.
    """
    d = grid.d
    tp = t ** (1.0 / (2.0 * sigma))
    if branch == "fl":
        rho = r_amp * n_freq ** (-s) * a_cube ** (d * (1.0 - (0.0 if p == INF else 1.0 / p))) * tp
        if k == 1:
            return r_amp
        wf = weight_lp_on_grid(grid, a_cube, p, s)
        ap = 1.0 if p == INF else a_cube ** (-d / p)
        return rho ** (k - 1) * ap * r_amp * n_freq ** (-s) * wf
    if branch == "mod_low":
        rho = r_amp * n_freq ** (-s) * a_cube ** (d / 2.0) * tp
        if k == 1:
            return r_amp
        wq = lattice_weight_sum(a_cube, q, s, d)
        return rho ** (k - 1) * a_cube ** (-d / 2.0) * r_amp * n_freq ** (-s) * wq
    if branch == "mod_high":
        rho = r_amp * n_freq ** (-s) * a_cube ** (d * (1.0 - (0.0 if q == INF else 1.0 / q))) * tp
        if k == 1:
            return r_amp
        wq = lattice_weight_sum(a_cube, q, s, d)
        aq = 1.0 if q == INF else a_cube ** (-d / q)
        return rho ** (k - 1) * aq * r_amp * n_freq ** (-s) * wq
    raise ValueError(f"unknown audit branch {branch!r}")


def bound_audit(
    terms: dict,
    norm_fn,
    norm_label: str,
    branch: str,
    r_amp: float,
    a_cube: float,
    n_freq: float,
    t: float,
    s: float,
    sigma: int,
    grid,
    p: float = 2.0,
    q: float = 2.0,
) -> list:
    """Measured-norm / lemma-RHS ratios for every computed iterate."""
    rows = []
    for k in sorted(terms):
        measured = norm_fn(terms[k])
        rhs = lemma_rhs(k, branch, r_amp, a_cube, n_freq, t, s, sigma, grid, p, q)
        ratio = measured / rhs if rhs > 0 else INF
        rows.append(AuditRow(k, norm_label, measured, rhs, ratio))
    return rows

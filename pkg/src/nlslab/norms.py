"""Norm calculators on the frequency lattice.

Implements the weighted Fourier-Lebesgue norms, modulation norms via the
frequency-uniform decomposition (with a short-time-Fourier-transform
cross-oracle), the cube-partition algebra norm used to sum the iterate
series, and the analytic weight profiles with their quadrature companions.

Infinity exponents are passed as ``math.inf`` and every L^p / l^q reduction
branches on them explicitly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import (
    FrequencyGrid,
    SpectralField,
    _cinv,
    to_frequency,
    to_physical,
)

INF = math.inf


class NormError(ValueError):
    """Invalid norm parameters or unmet preconditions."""


def _check_exponent(p, name="p"):
    if p == INF:
        return
    if not (1.0 <= p < INF):
        raise NormError(f"{name} must lie in [1, inf], got {p}")


def japanese_bracket(sq):
    """<xi>^1 = (1 + |xi|^2)^(1/2), vectorized on |xi|^2."""
    return np.sqrt(1.0 + sq)


# ---------------------------------------------------------------------------
# Fourier-Lebesgue family
# ---------------------------------------------------------------------------

def fourier_lebesgue_norm(f: SpectralField, p: float, s: float) -> float:
    """Rectangle-rule ||fhat <.>^s||_{L^p} over the lattice (max for p=inf)."""
    _check_exponent(p)
    g = f.grid
    w = np.abs(f.values) * (1.0 + g.freq_sq()) ** (s / 2.0)
    if p == INF:
        return float(w.max())
    return float((np.sum(w**p) * g.dxi**g.d) ** (1.0 / p))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """H^s norm in the lattice quadrature, i.e. the p=2 Fourier-Lebesgue norm."""
    return fourier_lebesgue_norm(f, 2.0, s)


# ---------------------------------------------------------------------------
# frequency-uniform partition of unity
# ---------------------------------------------------------------------------

def _smoothstep(t):
    # quintic transition, exact 0/1 endpoints: S(0)=0, S(1)=1, C^2 joins
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def bump_profile(x):
    """Tensor factor of the partition bump: 1 on [-1/2,1/2], 0 outside (-1,1)."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    out = np.zeros_like(x)
    out[x <= 0.5] = 1.0
    trans = (x > 0.5) & (x < 1.0)
    out[trans] = _smoothstep(2.0 * (1.0 - x[trans]))
    return out


def bump_denominator(x):
    """Sum over integers m of ``bump_profile(x - m)``; always in [1, 2]."""
    x = np.asarray(x, dtype=np.float64)
    m0 = np.floor(x)
    return bump_profile(x - m0) + bump_profile(x - m0 - 1.0)


class Partition:
    """Per-axis tables of the normalized frequency-uniform bumps.

    The family sigma_n(xi) = prod_a phi(xi_a - n_a) / D(xi_a) satisfies the
    partition-of-unity identities exactly on every lattice node: sigma_n >= c
    on the unit cube at n, supp sigma_n inside |xi - n|_inf <= 1, and
    sum_n sigma_n = 1 (the denominator tensorizes).
    """

    def __init__(self, grid: FrequencyGrid):
        self.grid = grid
        ax = grid.axis_freqs()
        self._denom = bump_denominator(ax)
        self._ax = ax

    def axis_factor(self, n_a: int) -> np.ndarray:
        """sigma's tensor factor phi(xi - n_a)/D(xi) along one axis."""
        return bump_profile(self._ax - n_a) / self._denom

    def axis_patch(self, n_a: int):
        """(index slice, factor values) where the factor is nonzero."""
        g = self.grid
        lo = int(np.ceil((n_a - 1 - (-g.xi_max)) / g.dxi - 1e-12))
        hi = int(np.floor((n_a + 1 - (-g.xi_max)) / g.dxi + 1e-12))
        lo = max(lo, 0)
        hi = min(hi, g.m - 1)
        if lo > hi:
            return slice(0, 0), np.zeros(0)
        vals = bump_profile(self._ax[lo : hi + 1] - n_a) / self._denom[lo : hi + 1]
        return slice(lo, hi + 1), vals

    def unity_deviation(self) -> float:
        """Max deviation of sum_n sigma_n from 1 over all lattice nodes."""
        g = self.grid
        n_lo = int(np.floor(-g.xi_max)) - 1
        n_hi = int(np.ceil(g.xi_max)) + 1
        total = np.zeros(g.m)
        for n_a in range(n_lo, n_hi + 1):
            total += self.axis_factor(n_a)
        # tensor structure: the d-dim sum at a node is the product of the
        # per-axis sums, so the worst node pairs the extreme axis values
        hi = float(np.max(total)) ** g.d - 1.0
        lo = 1.0 - float(np.min(total)) ** g.d
        return max(abs(hi), abs(lo))


@lru_cache(maxsize=16)
def _partition_for(grid: FrequencyGrid) -> Partition:
    return Partition(grid)


def _contributing_cells(f):
    """Integer n-cells whose bump touches the nonzero support of fhat."""
    g = f.grid
    nz = np.nonzero(f.values)
    if nz[0].size == 0:
        return np.zeros((0, g.d), dtype=np.int64)
    ax = g.axis_freqs()
    coords = np.stack([ax[nz[a]] for a in range(g.d)], axis=1)
    base = np.floor(coords).astype(np.int64)
    cells = []
    for corner in range(1 << g.d):
        offs = np.array([(corner >> a) & 1 for a in range(g.d)], dtype=np.int64)
        cells.append(base + offs)
    cells = np.unique(np.concatenate(cells, axis=0), axis=0)
    if cells.shape[0] > 200_000:
        raise NormError("partition window exceeds the cell budget (200000 cells)")
    return cells


def _patch_resolution(grid):
    # envelope spectrum per axis spans (-1, 1); oversample its samples; on
    # small grids refine the physical lattice itself so lattice translations
    # permute the quadrature nodes exactly
    width = int(math.ceil(2.0 / grid.dxi)) + 1
    p = max(32, 4 * width)
    if grid.m <= 256:
        p = grid.m * int(math.ceil(p / grid.m))
    if p % 2:
        p += 1
    return min(p, 1024)


def _block_lp(grid, offsets, coeffs, p, pres):
    """L^p over the physical box of delta-xi^d * sum_k c_k e^{i x.(off_k dxi)}.

    ``offsets`` are integer node offsets relative to the cell center; the
    envelope is evaluated by a zero-padded centered inverse FFT at a fixed
    resolution, so every norm call quadratures |.| the same way.
    """
    arr = np.zeros((pres,) * grid.d, dtype=np.complex128)
    idx = tuple(offsets[:, a] + pres // 2 for a in range(grid.d))
    np.add.at(arr, idx, coeffs)
    h = _cinv(arr) * grid.dxi**grid.d
    mag = np.abs(h)
    L = grid.box_length
    if p == INF:
        return float(mag.max())
    dv = (L / pres) ** grid.d
    return float((np.sum(mag**p) * dv) ** (1.0 / p))


def modulation_norm_ud(f: SpectralField, p: float, q: float, s: float) -> float:
    """Modulation norm via the frequency-uniform decomposition.

    For each lattice cell n the block ``sigma_n fhat`` is inverted to physical
    space and its L^p computed by quadrature (a Parseval shortcut handles
    p = 2 exactly); the blocks are combined in a (1+|n|)^s-weighted l^q.
    """
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    g = f.grid
    cells = _contributing_cells(f)
    if cells.shape[0] == 0:
        return 0.0
    part = _partition_for(g)
    pres = _patch_resolution(g)
    terms = np.zeros(cells.shape[0])
    for row, n_vec in enumerate(cells):
        sls, facs = [], []
        for a in range(g.d):
            sl, fac = part.axis_patch(int(n_vec[a]))
            sls.append(sl)
            facs.append(fac)
        block = f.values[tuple(sls)]
        if block.size == 0 or not np.any(block):
            continue
        sig = facs[0]
        for a in range(1, g.d):
            sig = np.multiply.outer(sig, facs[a])
        coeffs = sig * block
        if p == 2.0:
            # ||block||_{L^2(x)} = (2 pi)^{d/2} ||sigma_n fhat||_{L^2(xi)}
            terms[row] = (2.0 * np.pi) ** (g.d / 2.0) * math.sqrt(
                float(np.sum(np.abs(coeffs) ** 2)) * g.dxi**g.d
            )
        else:
            nz = np.nonzero(coeffs)
            if nz[0].size == 0:
                continue
            # offsets relative to a reference lattice node near n; the
            # reference only contributes a unit-modulus carrier
            refs = [int(round((int(n_vec[a]) + g.xi_max) / g.dxi)) for a in range(g.d)]
            offs = np.stack(
                [sls[a].start + nz[a] - refs[a] for a in range(g.d)], axis=1
            )
            terms[row] = _block_lp(g, offs, coeffs[nz], p, pres)
    weights = (1.0 + np.sqrt(np.sum(cells.astype(np.float64) ** 2, axis=1))) ** s
    if q == INF:
        return float(np.max(terms * weights))
    return float((np.sum((terms * weights) ** q)) ** (1.0 / q))


def modulation_norm_stft(
    f: SpectralField, p: float, q: float, s: float, window_width: float = 1.0
) -> float:
    """Modulation norm by direct double quadrature of the windowed transform.

    Used as a cross-oracle for :func:`modulation_norm_ud` on small grids; the
    window is a unit-mass Gaussian of the given width.  Raises if the
    windowed transform has not decayed below 1e-10 at the lattice boundary.
    """
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    g = f.grid
    if g.size > 1 << 16:
        raise NormError("stft norm is an oracle for small grids (<= 2^16 nodes)")
    x = g.axis_coords()
    win = np.exp(-(x**2) / (2.0 * window_width**2))
    win /= (2.0 * np.pi * window_width**2) ** (g.d / 2.0)
    w = win
    for a in range(1, g.d):
        w = np.multiply.outer(w, win)
    u = to_physical(f)
    m = g.m
    # accumulate over window positions x_j; acc is indexed by the y lattice
    acc = np.zeros(g.shape)
    vmax = 0.0
    bmax = 0.0
    for flat in range(g.size):
        jidx = np.unravel_index(flat, g.shape)
        wsh = w
        for a in range(g.d):
            if jidx[a] != m // 2:
                wsh = np.roll(wsh, jidx[a] - m // 2, axis=a)
        mag = np.abs(to_frequency(g, u * np.conj(wsh)).values) * (2.0 * np.pi) ** g.d
        vmax = max(vmax, float(mag.max()))
        for a in range(g.d):
            sl = [slice(None)] * g.d
            sl[a] = 0
            bmax = max(bmax, float(mag[tuple(sl)].max()))
        if p == INF:
            np.maximum(acc, mag, out=acc)
        else:
            acc += mag**p
    if vmax > 0 and bmax > 1e-10 * vmax:
        raise NormError(
            "windowed transform does not decay below 1e-10 at the lattice boundary"
        )
    inner = acc if p == INF else (acc * g.dx**g.d) ** (1.0 / p)
    ybr = (1.0 + g.freq_sq()) ** (s / 2.0)
    if q == INF:
        return float(np.max(inner * ybr))
    return float((np.sum((inner * ybr) ** q) * g.dxi**g.d) ** (1.0 / q))


# ---------------------------------------------------------------------------
# cube-partition algebra norm
# ---------------------------------------------------------------------------

def _is_dyadic(a):
    if a <= 0:
        return False
    e = math.log2(a)
    return abs(e - round(e)) < 1e-12


def ma_norm(f: SpectralField, a_cube: float) -> float:
    """Sum over A-spaced half-open cubes of the local L^2 of fhat.

    ``a_cube`` must be a positive dyadic that is an integer multiple of the
    lattice spacing, so cube assignment is exact integer arithmetic.
    """
    g = f.grid
    if not _is_dyadic(a_cube):
        raise NormError(f"A must be a positive dyadic number, got {a_cube}")
    ratio = a_cube / g.dxi
    m_sub = int(round(ratio))
    if abs(ratio - m_sub) > 1e-9 or m_sub < 1:
        raise NormError(f"A={a_cube} is not an integer multiple of dxi={g.dxi}")
    idx = np.arange(g.m) - g.center_index
    # node xi = i' dxi lies in cube k <=> -A/2 <= xi - kA < A/2
    cube_1d = (2 * idx + m_sub) // (2 * m_sub)
    cube_1d = cube_1d - cube_1d.min()
    n_cubes = cube_1d.max() + 1
    key = cube_1d[(np.s_[:],) + (None,) * (g.d - 1)]
    ones = np.ones(g.shape, dtype=np.int64)
    key = key * ones
    for a in range(1, g.d):
        shape = [1] * g.d
        shape[a] = g.m
        key = key * n_cubes + cube_1d.reshape(shape) * ones
    power = np.abs(f.values) ** 2
    sums = np.bincount(key.reshape(-1), weights=power.reshape(-1))
    return float(np.sum(np.sqrt(sums * g.dxi**g.d)))


# ---------------------------------------------------------------------------
# analytic weight profiles and quadrature companions
# ---------------------------------------------------------------------------

def weight_profile_fl(a_cube: float, p: float, s: float, d: int) -> float:
    """Analytic growth profile of ||<.>^s||_{L^p(Q_A)} for s < 0.

    Branches: 1 when s < -d/p, (log A)^{1/p} at the critical index,
    A^{d/p + s} above it; the p = inf profile is 1.
    """
    _check_exponent(p)
    if a_cube < 2:
        raise NormError("profile defined for A >= 2")
    if s >= 0:
        raise NormError("profile defined for s < 0")
    if p == INF:
        return 1.0
    crit = -d / p
    if s < crit:
        return 1.0
    if s == crit:
        return math.log(a_cube) ** (1.0 / p)
    return a_cube ** (d / p + s)


def weight_quad_fl(a_cube: float, p: float, s: float, d: int, n_sub: int = 256) -> float:
    """Midpoint quadrature of ||<.>^s||_{L^p(Q_A)} (companion to the profile)."""
    _check_exponent(p)
    pts = (np.arange(n_sub) + 0.5) / n_sub * a_cube - a_cube / 2.0
    if d == 1:
        sq = pts**2
    elif d == 2:
        sq = np.add.outer(pts**2, pts**2)
    elif d == 3:
        sq = np.add.outer(np.add.outer(pts**2, pts**2), pts**2)
    else:
        raise NormError("d must be 1..3")
    w = (1.0 + sq) ** (s / 2.0)
    if p == INF:
        return float(w.max())
    dv = (a_cube / n_sub) ** d
    return float((np.sum(w**p) * dv) ** (1.0 / p))


def weight_lp_on_grid(grid: FrequencyGrid, a_cube: float, p: float, s: float) -> float:
    """||<.>^s||_{L^p(Q_A)} by the lattice's own rectangle rule."""
    _check_exponent(p)
    ax = grid.axis_freqs()
    inside = (ax >= -a_cube / 2.0) & (ax < a_cube / 2.0)
    pts = ax[inside]
    sq = pts**2
    for _ in range(grid.d - 1):
        sq = np.add.outer(sq, pts**2)
    w = (1.0 + sq) ** (s / 2.0)
    if p == INF:
        return float(w.max()) if w.size else 0.0
    return float((np.sum(w**p) * grid.dxi**grid.d) ** (1.0 / p))


def weight_profile_mod(a_cube: float, q: float, s: float, d: int) -> float:
    """Analytic profile of the lattice sum ||(1+|n|)^s||_{l^q(0<=|n|<=A)}.

    Branches: 1 when -sq > d, (log A)^{1/q} at -sq = d, A^{d/q + s} when
    -sq < d (the polynomial branch exponent follows the integral test).
    """
    _check_exponent(q, "q")
    if a_cube < 2:
        raise NormError("profile defined for A >= 2")
    if s >= 0:
        raise NormError("profile defined for s < 0")
    if q == INF:
        return 1.0
    crit = -s * q
    if crit > d:
        return 1.0
    if crit == d:
        return math.log(a_cube) ** (1.0 / q)
    return a_cube ** (d / q + s)


def lattice_weight_sum(a_cube: float, q: float, s: float, d: int) -> float:
    """Exact enumeration of ||(1+|n|)^s||_{l^q(n in Z^d, 0 <= |n| <= A)}."""
    _check_exponent(q, "q")
    r = int(math.floor(a_cube))
    if d == 1:
        n = np.arange(-r, r + 1)
        mags = np.abs(n).astype(np.float64)
    elif d == 2:
        if r > 1024:
            raise NormError("enumeration capped at A <= 1024 in d=2")
        n = np.arange(-r, r + 1)
        mags = np.sqrt(np.add.outer(n**2, n**2)).reshape(-1)
    elif d == 3:
        if r > 128:
            raise NormError("enumeration capped at A <= 128 in d=3")
        n = np.arange(-r, r + 1)
        sq = np.add.outer(np.add.outer(n**2, n**2), n**2)
        mags = np.sqrt(sq).reshape(-1)
    else:
        raise NormError("d must be 1..3")
    mags = mags[mags <= a_cube + 1e-12]
    w = (1.0 + mags) ** s
    if q == INF:
        return float(w.max())
    return float(np.sum(w**q) ** (1.0 / q))


# ---------------------------------------------------------------------------
# dilation envelopes
# ---------------------------------------------------------------------------

def _dilation_index(p, q, starred):
    ip = 0.0 if p == INF else 1.0 / p
    iq = 0.0 if q == INF else 1.0 / q
    ipp = 1.0 - ip
    tol = 1e-12
    if starred:
        in1 = min(ip, ipp) >= iq - tol
        in2 = min(iq, 0.5) >= ipp - tol
        in3 = min(iq, 0.5) >= ip - tol
    else:
        in1 = max(ip, ipp) <= iq + tol
        in2 = max(iq, 0.5) <= ipp + tol
        in3 = max(iq, 0.5) <= ip + tol
    if in1:
        return -ip
    if in2:
        return iq - 1.0
    if in3:
        return -2.0 * ip + iq
    raise NormError(f"(1/p,1/q)=({ip},{iq}) not covered by the dilation index regions")


def dilation_envelopes(lam: float, p: float, q: float, s: float, d: int):
    """Lower/upper dilation envelopes for ||f(lam .)|| with 0 < lam <= 1.

    Returns (lo, hi) with lo = lam^{d mu1} min(1, lam^s) and
    hi = lam^{d mu2} max(1, lam^s), the two-sided scaling envelope of the
    modulation norm under dilation, up to a single constant.
    """
    if not 0 < lam <= 1:
        raise NormError("envelopes stated for 0 < lam <= 1")
    mu1 = _dilation_index(p, q, starred=True)
    mu2 = _dilation_index(p, q, starred=False)
    lo = lam ** (d * mu1) * min(1.0, lam**s)
    hi = lam ** (d * mu2) * max(1.0, lam**s)
    return lo, hi


# ---------------------------------------------------------------------------
# tagged norm specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormSpec:
    """Tagged description of a target norm, JSON round-trippable."""

    kind: str  # fl | mod | sobolev | ma | x
    p: float = 2.0
    q: float = 2.0
    s: float = 0.0
    a_cube: float = 1.0
    method: str = "ud"  # ud | stft
    variant: str = "fl1-flinf"  # fl1-flinf | fl1-m11

    def __post_init__(self):
        if self.kind not in ("fl", "mod", "sobolev", "ma", "x"):
            raise NormError(f"unknown norm kind {self.kind!r}")
        if self.kind in ("fl", "mod"):
            _check_exponent(self.p, "p")
        if self.kind == "mod":
            _check_exponent(self.q, "q")
        if self.kind == "mod" and self.method not in ("ud", "stft"):
            raise NormError(f"unknown modulation method {self.method!r}")
        if self.kind == "x" and self.variant not in ("fl1-flinf", "fl1-m11"):
            raise NormError(f"unknown x-norm variant {self.variant!r}")
        if self.kind == "ma" and not _is_dyadic(self.a_cube):
            raise NormError("ma norm requires a positive dyadic A")

    def to_json(self) -> str:
        def enc(v):
            return "inf" if v == INF else v

        payload = {"kind": self.kind}
        if self.kind in ("fl", "mod"):
            payload["p"] = enc(self.p)
            payload["s"] = self.s
        if self.kind == "mod":
            payload["q"] = enc(self.q)
            payload["method"] = self.method
        if self.kind == "sobolev":
            payload["s"] = self.s
        if self.kind == "ma":
            payload["A"] = self.a_cube
        if self.kind == "x":
            payload["variant"] = self.variant
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "NormSpec":
        payload = json.loads(text)

        def dec(v, default):
            if v is None:
                return default
            return INF if v == "inf" else float(v)

        return NormSpec(
            kind=payload["kind"],
            p=dec(payload.get("p"), 2.0),
            q=dec(payload.get("q"), 2.0),
            s=float(payload.get("s", 0.0)),
            a_cube=float(payload.get("A", 1.0)),
            method=payload.get("method", "ud"),
            variant=payload.get("variant", "fl1-flinf"),
        )

    def label(self) -> str:
        def show(v):
            return "inf" if v == INF else f"{v:g}"

        if self.kind == "fl":
            return f"FL^{show(self.p)}_{self.s:g}"
        if self.kind == "mod":
            return f"M^{show(self.p)},{show(self.q)}_{self.s:g}[{self.method}]"
        if self.kind == "sobolev":
            return f"H^{self.s:g}"
        if self.kind == "ma":
            return f"M_A[A={self.a_cube:g}]"
        return f"X[{self.variant}]"


def x_norm(f: SpectralField, variant: str) -> float:
    """Max of the two constituent norms of the chosen X space."""
    fl1 = fourier_lebesgue_norm(f, 1.0, 0.0)
    if variant == "fl1-flinf":
        return max(fl1, fourier_lebesgue_norm(f, INF, 0.0))
    if variant == "fl1-m11":
        return max(fl1, modulation_norm_ud(f, 1.0, 1.0, 0.0))
    raise NormError(f"unknown x-norm variant {variant!r}")


def norm_eval(f: SpectralField, spec: NormSpec) -> float:
    """Evaluate any tagged norm on a field."""
    if spec.kind == "fl":
        return fourier_lebesgue_norm(f, spec.p, spec.s)
    if spec.kind == "sobolev":
        return sobolev_norm(f, spec.s)
    if spec.kind == "mod":
        if spec.method == "stft":
            return modulation_norm_stft(f, spec.p, spec.q, spec.s)
        return modulation_norm_ud(f, spec.p, spec.q, spec.s)
    if spec.kind == "ma":
        return ma_norm(f, spec.a_cube)
    return x_norm(f, spec.variant)

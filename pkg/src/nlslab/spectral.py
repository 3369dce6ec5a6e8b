"""Frequency-lattice fields, transforms and symmetry operations.

Everything in this package works on a uniform frequency lattice: a field is
stored as complex samples of its Fourier transform on the nodes

    xi_i = -Xi + i * dxi,   i in {0, ..., M-1}^d,   dxi = 2*Xi/M.

The physical side is the dual periodic box of period 2*pi/dxi with M points
per axis.  The Fourier convention carries the 1/(2*pi)^d factor on the
forward transform, so a pointwise product in physical space corresponds to a
plain (unweighted) convolution of the frequency samples with quadrature
weight dxi^d.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

NLSF_MAGIC = b"NLSF"
NLSF_VERSION = 1


class GridError(ValueError):
    """Invalid grid parameters or mismatched grids."""


class AliasingError(RuntimeError):
    """A product would wrap around the frequency lattice."""


class OffLatticeError(ValueError):
    """A frequency shift does not land on the lattice."""


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency lattice on R^d truncated to [-Xi, Xi)^d.

    Attributes
    ----------
    d : int
        Space dimension, 1 to 3.
    xi_max : float
        Half-width of the lattice per axis (max resolved frequency).
    m : int
        Points per axis; must be even and >= 8.
    """

    d: int
    xi_max: float
    m: int

    @property
    def dxi(self) -> float:
        return 2.0 * self.xi_max / self.m

    @property
    def dx(self) -> float:
        # dual grid spacing; dx * dxi = 2*pi/m
        return 2.0 * np.pi / (self.m * self.dxi)

    @property
    def box_length(self) -> float:
        return 2.0 * np.pi / self.dxi

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.d

    @property
    def size(self) -> int:
        return self.m**self.d

    @property
    def center_index(self) -> int:
        return self.m // 2

    def axis_freqs(self) -> np.ndarray:
        return _axis_freqs(self.d, self.xi_max, self.m)

    def axis_coords(self) -> np.ndarray:
        return _axis_coords(self.d, self.xi_max, self.m)

    def freq_sq(self) -> np.ndarray:
        """|xi|^2 on every node, shape ``self.shape``."""
        return _freq_sq(self.d, self.xi_max, self.m)


@lru_cache(maxsize=64)
def _axis_freqs(d, xi_max, m):
    f = -xi_max + (2.0 * xi_max / m) * np.arange(m)
    f.flags.writeable = False
    return f


@lru_cache(maxsize=64)
def _axis_coords(d, xi_max, m):
    dxi = 2.0 * xi_max / m
    dx = 2.0 * np.pi / (m * dxi)
    x = (np.arange(m) - m // 2) * dx
    x.flags.writeable = False
    return x


@lru_cache(maxsize=64)
def _freq_sq(d, xi_max, m):
    f = _axis_freqs(d, xi_max, m)
    sq = f**2
    out = sq
    for _ in range(d - 1):
        out = np.add.outer(out, sq)
    out = np.ascontiguousarray(out)
    out.flags.writeable = False
    return out


def make_grid(d: int, xi_max: float, m: int) -> FrequencyGrid:
    """Build a frequency lattice, validating the invariants."""
    if d not in (1, 2, 3):
        raise GridError(f"dimension must be 1, 2 or 3, got {d}")
    if not xi_max > 0:
        raise GridError(f"xi_max must be positive, got {xi_max}")
    if m % 2 != 0 or m < 8:
        raise GridError(f"m must be even and >= 8, got {m}")
    return FrequencyGrid(d, float(xi_max), int(m))


@dataclass(frozen=True)
class SpectralField:
    """Complex Fourier-side samples of a field on a frequency lattice."""

    grid: FrequencyGrid
    values: np.ndarray

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.values.copy())


def field(grid: FrequencyGrid, values: np.ndarray) -> SpectralField:
    """Wrap frequency samples as a field, checking shape and finiteness."""
    values = np.asarray(values, dtype=np.complex128)
    if values.shape != grid.shape:
        raise GridError(f"values shape {values.shape} != grid shape {grid.shape}")
    if not np.all(np.isfinite(values.view(np.float64))):
        raise ValueError("field values must be finite")
    return SpectralField(grid, values)


def zero_field(grid: FrequencyGrid) -> SpectralField:
    return SpectralField(grid, np.zeros(grid.shape, dtype=np.complex128))


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridError("fields live on different grids")
    return g


# ---------------------------------------------------------------------------
# transform pair
# ---------------------------------------------------------------------------

def _cinv(a):
    # unnormalized centered inverse DFT: sum_i e^{+i x_j.xi_i} style kernel
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(a))) * a.size


def _cfwd(a):
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(a)))


def to_physical(f: SpectralField) -> np.ndarray:
    """Physical samples u(x_j) = sum_i e^{i x_j.xi_i} fhat(xi_i) dxi^d."""
    g = f.grid
    return _cinv(f.values) * g.dxi**g.d


def to_frequency(grid: FrequencyGrid, u: np.ndarray) -> SpectralField:
    """Inverse of :func:`to_physical`; carries the (2*pi)^-d convention."""
    vals = _cfwd(np.asarray(u, dtype=np.complex128)) / (grid.m * grid.dxi) ** grid.d
    return field(grid, vals)


def physical_l2(f: SpectralField) -> float:
    """L2 norm of the physical-side samples by rectangle-rule quadrature."""
    g = f.grid
    u = to_physical(f)
    return float(np.sqrt(np.sum(np.abs(u) ** 2) * g.dx**g.d))


def frequency_l2(f: SpectralField) -> float:
    g = f.grid
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * g.dxi**g.d))


# ---------------------------------------------------------------------------
# support bookkeeping
# ---------------------------------------------------------------------------

def support_mask(f: SpectralField) -> np.ndarray:
    return f.values != 0


def support_node_count(f: SpectralField) -> int:
    return int(np.count_nonzero(f.values))


def support_bounds(mask: np.ndarray):
    """Per-axis (min, max) index of the nonzero set, or None if empty."""
    if not mask.any():
        return None
    bounds = []
    for axis in range(mask.ndim):
        other = tuple(a for a in range(mask.ndim) if a != axis)
        proj = mask.any(axis=other) if other else mask
        idx = np.nonzero(proj)[0]
        bounds.append((int(idx[0]), int(idx[-1])))
    return bounds


def _reflect_mask(mask):
    # index map i -> (M - i) mod M, the lattice image of xi -> -xi
    out = mask
    for axis in range(mask.ndim):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def _check_product_fits(grid, bounds_list):
    i0 = grid.center_index
    q = len(bounds_list)
    for axis in range(grid.d):
        lo = sum(b[axis][0] for b in bounds_list) - (q - 1) * i0
        hi = sum(b[axis][1] for b in bounds_list) - (q - 1) * i0
        if lo < 0 or hi > grid.m - 1:
            raise AliasingError(
                f"product support [{lo}, {hi}] exceeds grid axis range "
                f"[0, {grid.m - 1}]; enlarge xi_max or band-limit the inputs"
            )


def _product_mask(grid, masks):
    # Minkowski sum of supports via an integer convolution of indicators;
    # counts are integers, so rounding is safe at FFT accuracy.
    acc = _cinv(masks[0].astype(np.float64))
    for mk in masks[1:]:
        acc = acc * _cinv(mk.astype(np.float64))
    counts = np.real(_cfwd(acc)) / grid.size
    return counts > 0.5


def multiply_fields(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product in physical space (frequency-side convolution).

    The caller must have provisioned the grid so the Minkowski sum of the
    supports fits without wrap-around; otherwise :class:`AliasingError`.
    """
    return product_fields([f, g], conjugate=[False, False])


def conjugate_field(f: SpectralField) -> SpectralField:
    """Field of the complex-conjugate function.

    Reflects the frequency support, so the -Xi Nyquist row must be empty.
    """
    mask = support_mask(f)
    _check_nyquist_empty(f.grid, mask)
    u = np.conj(to_physical(f))
    out = to_frequency(f.grid, u)
    vals = out.values.copy()
    vals[~_reflect_mask(mask)] = 0.0
    return field(f.grid, vals)


def _check_nyquist_empty(grid, mask):
    for axis in range(grid.d):
        sl = [slice(None)] * grid.d
        sl[axis] = 0
        if mask[tuple(sl)].any():
            raise AliasingError(
                "conjugation reflects the support; the -Xi Nyquist row must be empty"
            )


def product_fields(fields_in, conjugate) -> SpectralField:
    """Product of several fields in physical space, with optional conjugation.

    ``conjugate[i]`` marks factor i as entering as its complex conjugate.
    Support masks are propagated exactly: the result is zeroed outside the
    Minkowski sum of the (possibly reflected) input supports.
    """
    grid = _check_same_grid(*fields_in)
    masks = []
    bounds_list = []
    for f, cj in zip(fields_in, conjugate):
        mask = support_mask(f)
        if not mask.any():
            return zero_field(grid)
        if cj:
            _check_nyquist_empty(grid, mask)
            mask = _reflect_mask(mask)
        masks.append(mask)
        bounds_list.append(support_bounds(mask))
    _check_product_fits(grid, bounds_list)

    u = np.ones(grid.shape, dtype=np.complex128)
    for f, cj in zip(fields_in, conjugate):
        phys = to_physical(f)
        u = u * (np.conj(phys) if cj else phys)
    out = to_frequency(grid, u)
    vals = out.values.copy()
    vals[~_product_mask(grid, masks)] = 0.0
    return field(grid, vals)


def sparsify(f: SpectralField, rel_tol: float = 1e-13) -> SpectralField:
    """Zero nodes below ``rel_tol * max|values|`` (exact-support recovery).

    Dense solver output carries a round-off floor on nodes that are
    mathematically zero; dropping it changes any of the lattice norms by at
    most ``rel_tol * size`` relative and restores exact support queries.
    """
    peak = np.max(np.abs(f.values)) if f.values.size else 0.0
    if peak == 0.0:
        return f
    vals = f.values.copy()
    vals[np.abs(vals) < rel_tol * peak] = 0.0
    return SpectralField(f.grid, vals)


def mass_sparsify(f: SpectralField, rel_tail: float = 1e-9) -> SpectralField:
    """Keep the smallest node set carrying all but ``rel_tail`` of the l1 mass.

    The dropped coefficients sum to at most ``rel_tail * sum|values|``, which
    bounds the induced change of any of the lattice norms used here by the
    same relative amount (they are all monotone in |values| with l1-dominated
    cell contributions).
    """
    mags = np.abs(f.values).reshape(-1)
    total = mags.sum()
    if total == 0.0:
        return f
    order = np.argsort(mags)
    cum = np.cumsum(mags[order])
    drop = order[: int(np.searchsorted(cum, rel_tail * total))]
    vals = f.values.copy().reshape(-1)
    vals[drop] = 0.0
    return SpectralField(f.grid, vals.reshape(f.grid.shape))


def band_limit(f: SpectralField, xi_cut: float) -> SpectralField:
    """Zero all nodes with |xi|_inf > xi_cut (exact support control)."""
    g = f.grid
    ax = np.abs(g.axis_freqs())
    keep = ax <= xi_cut
    mask = keep
    for _ in range(g.d - 1):
        mask = np.logical_and.outer(mask, keep)
    vals = f.values.copy()
    vals[~mask] = 0.0
    return field(g, vals)


# ---------------------------------------------------------------------------
# free propagator and symmetries
# ---------------------------------------------------------------------------

def free_propagate(f: SpectralField, t: float) -> SpectralField:
    """Free Schrodinger flow: multiply each node by e^{-i(t/2)|xi|^2}."""
    if t == 0.0:
        return f
    g = f.grid
    phase = np.exp(-0.5j * t * g.freq_sq())
    return SpectralField(g, f.values * phase)


@dataclass(frozen=True)
class Scaling:
    lam: float
    sigma: int
    resample: bool = False


@dataclass(frozen=True)
class Galilean:
    v: tuple
    t: float


@dataclass(frozen=True)
class PlaneWaveTwist:
    k: tuple


@dataclass(frozen=True)
class Translate:
    k: tuple


def _as_vec(k, d):
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    if k.shape != (d,):
        raise GridError(f"expected a length-{d} vector, got shape {k.shape}")
    return k


def _lattice_steps(grid, k):
    steps = np.asarray(k) / grid.dxi
    rounded = np.rint(steps)
    if np.max(np.abs(steps - rounded)) > 1e-9:
        raise OffLatticeError(f"shift {k} is not an integer multiple of dxi={grid.dxi}")
    return rounded.astype(int)


def _shift_field(f, steps):
    # exact lattice translation of the frequency samples; refuse wrap-around
    g = f.grid
    mask = support_mask(f)
    bounds = support_bounds(mask)
    vals = f.values
    if bounds is not None:
        for axis, s in enumerate(steps):
            lo, hi = bounds[axis]
            if lo + s < 0 or hi + s > g.m - 1:
                raise AliasingError("frequency shift pushes support off the lattice")
    for axis, s in enumerate(steps):
        if s:
            vals = np.roll(vals, s, axis=axis)
    return SpectralField(g, np.array(vals, copy=True))


def plane_wave_twist(f: SpectralField, k) -> SpectralField:
    """Multiply by e^{ik.x}: exact lattice shift of the frequency support."""
    g = f.grid
    k = _as_vec(k, g.d)
    return _shift_field(f, _lattice_steps(g, k))


def translate(f: SpectralField, k) -> SpectralField:
    """Shift by k in physical space: values pick up e^{-i xi.k}."""
    g = f.grid
    k = _as_vec(k, g.d)
    ax = g.axis_freqs()
    phase = np.exp(-1j * ax * k[0])
    for a in range(1, g.d):
        phase = np.multiply.outer(phase, np.exp(-1j * ax * k[a]))
    return SpectralField(g, f.values * phase)


def _apply_scaling(f, sym):
    # g(x) = lam^{1/sigma} f(lam x) has ghat(lam xi') = lam^{1/sigma - d} fhat(xi'),
    # a push-forward of the support nodes xi' -> lam xi'
    g = f.grid
    lam = sym.lam
    if lam <= 0:
        raise GridError("scaling factor must be positive")
    if not sym.resample:
        amp = lam ** (1.0 / sym.sigma - g.d)
        i0 = g.center_index
        src = np.nonzero(f.values)
        vals = np.zeros(g.shape, dtype=np.complex128)
        if src[0].size:
            tgt = []
            for axis in range(g.d):
                t = lam * (src[axis].astype(np.float64) - i0)
                tr = np.rint(t)
                if np.max(np.abs(t - tr)) > 1e-9:
                    raise OffLatticeError(
                        f"scaling by lam={lam} maps support nodes off the lattice; "
                        "enable resample mode"
                    )
                ti = tr.astype(int) + i0
                if ti.min() < 0 or ti.max() > g.m - 1:
                    raise AliasingError("scaled support leaves the lattice; enlarge xi_max")
                tgt.append(ti)
            vals[tuple(tgt)] = amp * f.values[src]
        return field(g, vals)
    return _resample_scaling(f, lam, sym.sigma)


def _resample_scaling(f, lam, sigma):
    # band-limited evaluation of f(lam x) on the physical nodes via the
    # spectral representation; O(M^2) per axis, so guard against large grids
    # (resample mode is excluded from acceptance runs)
    g = f.grid
    if g.size > 1 << 16:
        raise GridError("resampling mode supports at most 2^16 nodes")
    freqs = g.axis_freqs()
    coords = g.axis_coords()
    kern = np.exp(1j * np.outer(lam * coords, freqs))
    vals = f.values
    for axis in range(g.d):
        vals = np.tensordot(kern, vals, axes=([1], [axis]))
        vals = np.moveaxis(vals, 0, axis)
    u_scaled = vals * g.dxi**g.d * lam ** (1.0 / sigma)
    return to_frequency(g, u_scaled)


def apply_symmetry(f: SpectralField, sym) -> SpectralField:
    """Apply one of the equation's symmetry transforms to a field."""
    g = f.grid
    if isinstance(sym, Scaling):
        return _apply_scaling(f, sym)
    if isinstance(sym, Galilean):
        v = _as_vec(sym.v, g.d)
        out = f
        if np.any(v * sym.t != 0):
            out = translate(out, v * sym.t)
        if np.any(v != 0):
            out = plane_wave_twist(out, v)
        phase = np.exp(-0.5j * float(v @ v) * sym.t)
        return SpectralField(g, out.values * phase)
    if isinstance(sym, PlaneWaveTwist):
        return plane_wave_twist(f, sym.k)
    if isinstance(sym, Translate):
        return translate(f, sym.k)
    raise TypeError(f"unknown symmetry {sym!r}")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_field(f: SpectralField, path) -> None:
    """Write the binary .nlsf form: NLSF header + row-major complex64."""
    g = f.grid
    header = NLSF_MAGIC + struct.pack("<III", NLSF_VERSION, g.d, g.m)
    header += struct.pack("<d", g.xi_max)
    data = np.ascontiguousarray(f.values).astype("<c8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


def load_field(path) -> SpectralField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != NLSF_MAGIC:
        raise ValueError("not an NLSF field file")
    version, d, m = struct.unpack("<III", raw[4:16])
    if version != NLSF_VERSION:
        raise ValueError(f"unsupported NLSF version {version}")
    (xi_max,) = struct.unpack("<d", raw[16:24])
    grid = make_grid(d, xi_max, m)
    vals = np.frombuffer(raw[24:], dtype="<c8").astype(np.complex128)
    if vals.size != grid.size:
        raise ValueError("field payload size does not match header")
    return field(grid, vals.reshape(grid.shape))


def field_to_json(f: SpectralField) -> str:
    """JSON debug form for small grids: node list plus re/im pairs."""
    g = f.grid
    if g.size > 4096:
        raise ValueError("JSON debug form is limited to 4096 nodes")
    ax = g.axis_freqs()
    idx = np.indices(g.shape).reshape(g.d, -1).T
    nodes = [[float(ax[i]) for i in row] for row in idx]
    flat = f.values.reshape(-1)
    payload = {
        "d": g.d,
        "m": g.m,
        "xi_max": g.xi_max,
        "nodes": nodes,
        "re": [float(v) for v in flat.real],
        "im": [float(v) for v in flat.imag],
    }
    return json.dumps(payload)


def field_from_json(text: str) -> SpectralField:
    payload = json.loads(text)
    grid = make_grid(payload["d"], payload["xi_max"], payload["m"])
    vals = np.array(payload["re"], dtype=np.float64) + 1j * np.array(
        payload["im"], dtype=np.float64
    )
    return field(grid, vals.reshape(grid.shape))

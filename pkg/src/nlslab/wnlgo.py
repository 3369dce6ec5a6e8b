"""Multiphase weakly-nonlinear geometric optics on the frequency lattice.

Oscillatory data sum_j alpha_j(x) e^{i j.x/eps} evolves, to leading order,
as a system of transported profiles coupled through resonant frequency
tuples.  This module enumerates the resonance sets exactly in integer
arithmetic, solves the profile system by fixed-point iteration of its
Duhamel form, assembles the approximate solution, and runs the error and
loss-of-regularity experiments against the split-step solver.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .norms import fourier_lebesgue_norm, modulation_norm_ud, x_norm
from .picard import _time_phase_integral
from .solver import split_step
from .spectral import (
    FrequencyGrid,
    SpectralField,
    _cfwd,
    field,
    make_grid,
    mass_sparsify,
    physical_l2,
    sparsify,
    to_physical,
    zero_field,
)

log = logging.getLogger(__name__)


class ResonanceBudgetError(RuntimeError):
    """Window enumeration exceeds the configured tuple budget."""


class ContractionError(RuntimeError):
    """Profile fixed-point iteration failed to contract."""


class OverlapError(RuntimeError):
    """Shifted profile supports overlap on the target grid."""


class WindowError(ValueError):
    """No admissible expansion exponent for the given (sigma, s)."""


# ---------------------------------------------------------------------------
# resonance sets
# ---------------------------------------------------------------------------

def _signed(l_index):
    # 0-based slot l carries sign (-1)^l under the alternating convention
    return 1 if l_index % 2 == 0 else -1


def resonance_set(j, sigma: int, window: int, d: int, budget: int = 10_000_000):
    """All tuples (k_1..k_{2 sigma + 1}) with |k_l|_inf <= window satisfying
    the two alternating-sum identities (frequency and squared length), in
    lexicographic order.  Exact integer arithmetic throughout.
    """
    j = tuple(int(c) for c in np.atleast_1d(j))
    if len(j) != d:
        raise ValueError(f"j must have dimension {d}")
    slots = 2 * sigma + 1
    rng = range(-window, window + 1)
    n_vecs = (2 * window + 1) ** d
    if n_vecs ** (slots - 1) > budget:
        raise ResonanceBudgetError(
            f"enumeration needs {n_vecs ** (slots - 1)} tuples, over budget {budget}"
        )
    vecs = [tuple(v) for v in itertools.product(rng, repeat=d)]
    out = []
    j_arr = np.array(j)
    j_sq = int(j_arr @ j_arr)
    for free in itertools.product(vecs, repeat=slots - 1):
        acc = np.zeros(d, dtype=np.int64)
        acc_sq = 0
        for l, k in enumerate(free):
            sgn = _signed(l)
            ka = np.array(k, dtype=np.int64)
            acc += sgn * ka
            acc_sq += sgn * int(ka @ ka)
        # last slot has sign (-1)^{2 sigma} = +1
        last = j_arr - acc
        if np.max(np.abs(last)) > window:
            continue
        if acc_sq + int(last @ last) == j_sq:
            out.append(free + (tuple(int(c) for c in last),))
    return sorted(out)


def resonance_cubic_oracle(j, window: int, d: int):
    """Cubic resonance tuples from the rectangle characterization (d >= 2).

    Generates the two degenerate families (j, l, l) and (l, l, j) plus the
    non-degenerate rectangles having the middle entry opposite j; must agree
    with :func:`resonance_set` as a set.
    """
    if d < 2:
        raise ValueError("the rectangle characterization requires d >= 2")
    j = tuple(int(c) for c in np.atleast_1d(j))
    rng = range(-window, window + 1)
    vecs = [tuple(v) for v in itertools.product(rng, repeat=d)]
    out = set()
    for l in vecs:
        out.add((j, l, l))
        out.add((l, l, j))
    j_arr = np.array(j, dtype=np.int64)
    for k1 in vecs:
        k1a = np.array(k1, dtype=np.int64)
        if np.array_equal(k1a, j_arr):
            continue
        for k3 in vecs:
            k3a = np.array(k3, dtype=np.int64)
            if np.array_equal(k3a, j_arr):
                continue
            if int((k1a - j_arr) @ (k3a - j_arr)) != 0:
                continue
            k2a = k1a + k3a - j_arr
            if np.max(np.abs(k2a)) > window:
                continue
            out.add((k1, tuple(int(c) for c in k2a), k3))
    return sorted(out)


# ---------------------------------------------------------------------------
# profile system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProfileSet:
    """Finite resonant-mode truncation of the profile transport system."""

    grid: FrequencyGrid
    sigma: int
    mu: int
    eps: float
    bigj: float  # expansion exponent J in (1, 2)
    profiles: dict  # mode tuple -> SpectralField at a common time
    time: float = 0.0

    @property
    def coupling(self) -> float:
        return self.mu * self.eps ** (self.bigj - 1.0)

    def modes(self):
        return sorted(self.profiles)


def first_generation_closure(initial_modes, sigma: int, d: int):
    """Initial modes plus every j resonantly reachable from them.

    Returns (active_modes, sources) where sources[j] lists the resonance
    tuples with entries drawn from the active set.
    """
    init = [tuple(int(c) for c in m) for m in initial_modes]
    reachable = set(init)
    slots = 2 * sigma + 1
    for combo in itertools.product(init, repeat=slots):
        acc = np.zeros(d, dtype=np.int64)
        acc_sq = 0
        for l, k in enumerate(combo):
            sgn = _signed(l)
            ka = np.array(k, dtype=np.int64)
            acc += sgn * ka
            acc_sq += sgn * int(ka @ ka)
        if acc_sq == int(acc @ acc):
            reachable.add(tuple(int(c) for c in acc))
    active = sorted(reachable)
    return active, tracked_sources(active, sigma, d)


def tracked_sources(active, sigma: int, d: int):
    """Resonance tuples with all entries in the tracked set, keyed by target."""
    act = [tuple(int(c) for c in m) for m in active]
    act_set = set(act)
    slots = 2 * sigma + 1
    sources = {j: [] for j in act}
    for combo in itertools.product(act, repeat=slots):
        acc = np.zeros(d, dtype=np.int64)
        acc_sq = 0
        for l, k in enumerate(combo):
            sgn = _signed(l)
            ka = np.array(k, dtype=np.int64)
            acc += sgn * ka
            acc_sq += sgn * int(ka @ ka)
        j = tuple(int(c) for c in acc)
        if j in act_set and acc_sq == int(acc @ acc):
            sources[j].append(combo)
    return sources


def make_initial_profiles(
    grid: FrequencyGrid,
    sigma: int,
    mu: int,
    eps: float,
    bigj: float,
    initial_modes,
    alpha: SpectralField,
) -> ProfileSet:
    """Profile set with the same envelope on each initial mode, zero elsewhere."""
    active, _ = first_generation_closure(initial_modes, sigma, grid.d)
    init = {tuple(int(c) for c in m) for m in initial_modes}
    profiles = {}
    for j in active:
        profiles[j] = alpha.copy() if j in init else zero_field(grid)
    return ProfileSet(grid, sigma, mu, eps, bigj, profiles, 0.0)


@dataclass(frozen=True)
class ProfilePath:
    """Profile trajectories on a uniform time grid."""

    grid: FrequencyGrid
    sigma: int
    mu: int
    eps: float
    bigj: float
    times: np.ndarray
    values: dict  # mode tuple -> array (len(times),) + grid.shape

    def at(self, t: float) -> ProfileSet:
        k = int(round((t - self.times[0]) / (self.times[1] - self.times[0])))
        if not (0 <= k < len(self.times)) or abs(self.times[k] - t) > 1e-9 * max(
            1.0, abs(t)
        ):
            raise ValueError(f"t={t} is not on the stored time grid")
        profiles = {j: field(self.grid, v[k]) for j, v in self.values.items()}
        return ProfileSet(self.grid, self.sigma, self.mu, self.eps, self.bigj, profiles, t)


def _profile_product(phys_list, conj_flags, grid, clip_mask):
    prod = np.ones(grid.shape, dtype=np.complex128)
    for u, cj in zip(phys_list, conj_flags):
        prod = prod * (np.conj(u) if cj else u)
    vals = _cfwd(prod) / (grid.m * grid.dxi) ** grid.d
    vals[~clip_mask] = 0.0
    return vals


def _fl1(grid, vals):
    return float(np.sum(np.abs(vals)) * grid.dxi**grid.d)


def evolve_profiles(
    ps: ProfileSet,
    t_final: float,
    n_steps: int = 64,
    tol: float = 1e-10,
    max_iter: int = 50,
    contraction_cap: float = 0.45,
    align_multiple: int = 1,
) -> ProfilePath:
    """Solve the profile system on [0, t_final] by segmented fixed-point
    iteration of its Duhamel form in the moving frames.

    Translations are exact spectral phases; the time integral uses the
    trapezoid rule on the stored grid.  The horizon is split into segments
    sized from the coupling strength so each fixed-point map contracts;
    iteration stops when successive differences fall below ``tol`` in the
    summed FL^1 norm, and a non-decreasing difference raises
    :class:`ContractionError` advising a smaller horizon.
    """
    g = ps.grid
    active = ps.modes()
    sources = tracked_sources(active, ps.sigma, g.d)
    slots = 2 * ps.sigma + 1
    conj_flags = [l % 2 == 1 for l in range(slots)]

    # products of `slots` clipped spectra stay on-grid with this cap
    clip = g.xi_max / slots * 0.999
    ax = np.abs(g.axis_freqs())
    keep = ax <= clip
    clip_mask = keep
    for _ in range(g.d - 1):
        clip_mask = np.logical_and.outer(clip_mask, keep)

    y_init = sum(_fl1(g, ps.profiles[j].values) for j in active)
    n_tuples = max(1, sum(len(v) for v in sources.values()))
    lip = abs(ps.coupling) * slots * max(y_init, 1e-30) ** (2 * ps.sigma) * t_final
    lip *= n_tuples / max(len(active), 1)
    n_seg = min(64, max(1, int(math.ceil(lip / contraction_cap))))
    k_per = max(2, int(math.ceil(n_steps / n_seg)))
    # keep the requested alignment times exactly on the stored grid
    while (n_seg * k_per) % align_multiple:
        k_per += 1

    freqs = g.axis_freqs()
    times_all = [0.0]
    vals_all = {j: [ps.profiles[j].values.copy()] for j in active}
    cur = {j: ps.profiles[j].values.copy() for j in active}
    lam = 1j * ps.coupling  # -i mu eps^{J-1} with the overall i sign folded
    seg_len = t_final / n_seg

    def mode_phase(j, dt):
        ph = np.exp(-1j * freqs * (j[0] * dt))
        for a in range(1, g.d):
            ph = np.multiply.outer(ph, np.exp(-1j * freqs * (j[a] * dt)))
        return ph

    for seg in range(n_seg):
        dt = seg_len / k_per
        tloc = np.arange(k_per + 1) * dt
        base = {j: cur[j] for j in active}
        # transported segment data: base_j(. - j t)
        transported = {
            j: [base[j] * mode_phase(j, t) for t in tloc] for j in active
        }
        guess = {j: [v.copy() for v in transported[j]] for j in active}
        prev_diff = math.inf
        for it in range(max_iter):
            phys = {
                j: [to_physical(field(g, guess[j][k])) for k in range(k_per + 1)]
                for j in active
            }
            srcsum = {}
            for j in active:
                if not sources[j]:
                    continue
                acc = [np.zeros(g.shape, dtype=np.complex128) for _ in range(k_per + 1)]
                for tup in sources[j]:
                    for k in range(k_per + 1):
                        acc[k] += _profile_product(
                            [phys[m][k] for m in tup], conj_flags, g, clip_mask
                        )
                srcsum[j] = acc
            diff = 0.0
            new_guess = {}
            for j in active:
                ph_dt = mode_phase(j, dt)
                rows = [transported[j][0]]
                integ = np.zeros(g.shape, dtype=np.complex128)
                src = srcsum.get(j)
                for k in range(1, k_per + 1):
                    if src is not None:
                        integ = ph_dt * (integ + 0.5 * dt * src[k - 1]) + 0.5 * dt * src[k]
                    rows.append(transported[j][k] - lam * integ if src is not None else transported[j][k])
                new_guess[j] = rows
                for k in range(k_per + 1):
                    diff += _fl1(g, rows[k] - guess[j][k])
            guess = new_guess
            if diff < tol:
                break
            if diff >= prev_diff and it > 2:
                raise ContractionError(
                    f"profile iteration not contracting on segment {seg} "
                    f"(diff {diff:.3g} >= {prev_diff:.3g}); reduce the horizon"
                )
            prev_diff = diff
        else:
            raise ContractionError(
                f"profile iteration did not reach tol={tol} in {max_iter} sweeps"
            )
        for k in range(1, k_per + 1):
            times_all.append(seg * seg_len + tloc[k])
            for j in active:
                vals_all[j].append(guess[j][k])
        cur = {j: guess[j][k_per] for j in active}

    times = np.array(times_all)
    values = {j: np.stack(vals_all[j]) for j in active}
    return ProfilePath(g, ps.sigma, ps.mu, ps.eps, ps.bigj, times, values)

# ---------------------------------------------------------------------------
# approximate solution assembly
# ---------------------------------------------------------------------------

def assemble_uapp(
    ps: ProfileSet,
    target: FrequencyGrid,
    allow_overlap: bool = False,
) -> SpectralField:
    """Sum of profile spectra shifted to j/eps with the eikonal time phases.

    Requires every shift j/eps to be an exact lattice translation of the
    target grid and the profile spacing to match the target spacing.  By
    default overlapping shifted supports raise :class:`OverlapError`; the
    assembly itself is linear, so overlap can be allowed explicitly when the
    per-mode decoupled lower bounds are not needed.
    """
    g = ps.grid
    if abs(g.dxi - target.dxi) > 1e-12:
        raise OverlapError("profile grid spacing must match the target grid")
    t = ps.time
    vals = np.zeros(target.shape, dtype=np.complex128)
    occupied = []
    half = g.m // 2
    t0 = target.center_index
    for j in ps.modes():
        prof = ps.profiles[j]
        if not prof.values.any():
            continue
        steps = []
        for a in range(g.d):
            sh = (j[a] / ps.eps) / target.dxi
            if abs(sh - round(sh)) > 1e-9:
                raise OverlapError(
                    f"mode {j}: shift {j[a] / ps.eps} is not a lattice translation"
                )
            steps.append(int(round(sh)))
        lo = [t0 + s - half for s in steps]
        hi = [t0 + s + half for s in steps]  # exclusive
        if any(l < 0 or h > target.m for l, h in zip(lo, hi)):
            raise OverlapError(f"mode {j} leaves the target lattice; enlarge xi_max")
        box = tuple(slice(l, h) for l, h in zip(lo, hi))
        if not allow_overlap:
            for other in occupied:
                if all(
                    sl.start < so.stop and so.start < sl.stop
                    for sl, so in zip(box, other)
                ):
                    raise OverlapError(
                        "shifted profile supports overlap; pass allow_overlap=True "
                        "to assemble anyway"
                    )
            occupied.append(box)
        j_arr = np.array(j, dtype=np.float64)
        phase = np.exp(-1j * t * float(j_arr @ j_arr) / (2.0 * ps.eps))
        vals[box] += phase * prof.values
    return field(target, vals)


def zero_mode_block(f: SpectralField, eps: float) -> SpectralField:
    """Restrict to the non-oscillatory block |xi|_inf <= 1/(2 eps)."""
    g = f.grid
    cut = 1.0 / (2.0 * eps)
    ax = np.abs(g.axis_freqs())
    keep = ax <= cut
    mask = keep
    for _ in range(g.d - 1):
        mask = np.logical_and.outer(mask, keep)
    vals = f.values.copy()
    vals[~mask] = 0.0
    return field(g, vals)


# ---------------------------------------------------------------------------
# zero-mode creation rate
# ---------------------------------------------------------------------------

def resonant_source_count(initial_modes, sigma: int, d: int, target=None) -> int:
    """Number of resonance tuples over the initial modes landing on target."""
    target = tuple([0] * d) if target is None else tuple(int(c) for c in target)
    init = [tuple(int(c) for c in m) for m in initial_modes]
    slots = 2 * sigma + 1
    count = 0
    t_arr = np.array(target, dtype=np.int64)
    for combo in itertools.product(init, repeat=slots):
        acc = np.zeros(d, dtype=np.int64)
        acc_sq = 0
        for l, k in enumerate(combo):
            sgn = _signed(l)
            ka = np.array(k, dtype=np.int64)
            acc += sgn * ka
            acc_sq += sgn * int(ka @ ka)
        if np.array_equal(acc, t_arr) and acc_sq == int(t_arr @ t_arr):
            count += 1
    return count


def zero_mode_rate_check(
    grid: FrequencyGrid,
    sigma: int,
    mu: int,
    eps: float,
    bigj: float,
    initial_modes,
    alpha: SpectralField,
    h: float = 1e-4,
) -> dict:
    """Finite-difference check of the zero-mode creation rate.

    Evolves the profile system to h and compares a_0(h)/h against the exact
    Duhamel source -i mu eps^{J-1} c0 |alpha|^{2 sigma} alpha, with c0 the
    enumerated count of resonant tuples over the initial modes.
    """
    ps = make_initial_profiles(grid, sigma, mu, eps, bigj, initial_modes, alpha)
    zero = tuple([0] * grid.d)
    if not np.all(ps.profiles[zero].values == 0):
        raise ValueError("zero mode must start empty for the creation check")
    path = evolve_profiles(ps, h, n_steps=8)
    a0_h = path.values[zero][-1]
    fd = field(grid, a0_h / h)
    c0 = resonant_source_count(initial_modes, sigma, grid.d)
    ua = to_physical(alpha)
    src_phys = (-1j * mu * eps ** (bigj - 1.0) * c0) * (np.abs(ua) ** (2 * sigma)) * ua
    predicted = field(
        grid, _cfwd(src_phys) / (grid.m * grid.dxi) ** grid.d
    )
    num = physical_l2(field(grid, fd.values - predicted.values))
    den = physical_l2(predicted)
    return {
        "c0": c0,
        "rel_err": num / den if den > 0 else math.inf,
        "fd": fd,
        "predicted": predicted,
    }


# ---------------------------------------------------------------------------
# expansion-exponent window and scalings
# ---------------------------------------------------------------------------

def j_window(sigma: int, s: float):
    """Open interval of admissible expansion exponents J for given (sigma, s).

    The data-smallness constraint needs |s| > (2 - J)/(2 sigma); divergence
    of the evolved norm needs J < (2 sigma + 2)/(2 sigma + 1); expansion
    requires 1 < J < 2.
    """
    if s >= 0:
        raise WindowError("loss-of-regularity experiments require s < 0")
    lo = max(1.0, 2.0 - 2.0 * sigma * abs(s))
    hi = min(2.0, (2.0 * sigma + 2.0) / (2.0 * sigma + 1.0))
    if not lo < hi:
        raise WindowError(
            f"empty exponent window: smallness needs J > {2.0 - 2.0 * sigma * abs(s):g} "
            f"but divergence needs J < {hi:g}; requires s < -1/(2 sigma + 1) "
            f"= {-1.0 / (2 * sigma + 1):g}"
        )
    return lo, hi


def unscale_exponent(sigma: int, bigj: float) -> float:
    """psi(0) = eps^{(J-2)/(2 sigma)} u(0): the amplitude unscaling power."""
    return (bigj - 2.0) / (2.0 * sigma)


def creation_modes(d: int, sigma: int):
    """Initial mode set guaranteeing first-generation zero-mode creation."""
    if d >= 2:
        k1 = [0] * d
        k2 = [0] * d
        k3 = [0] * d
        k1[0] = 1
        k2[0] = 1
        k2[1] = 1
        k3[1] = 1
        return [tuple(k1), tuple(k2), tuple(k3)]
    if sigma >= 2:
        return [(2,), (-1,), (-2,), (4,), (3,)]
    raise WindowError("d=1 with a cubic nonlinearity has no zero-mode creation data")


def nonres_duhamel_field(
    g_env: SpectralField, k_vec, omega: float, eps: float, t: float
) -> SpectralField:
    """Exact oscillatory Duhamel integral for a non-resonant source term.

    D(t) = int_0^t e^{i eps (t-tau)/2 Lap} (g e^{i k.x/eps - i omega tau/(2 eps)}) dtau
    evaluated nodewise from its closed form; finite for |k|^2 != omega with
    size O(eps / ||k|^2 - omega|).
    """
    grid = g_env.grid
    kv = np.asarray(k_vec, dtype=np.float64)
    steps = kv / eps / grid.dxi
    sr = np.rint(steps)
    if np.max(np.abs(steps - sr)) > 1e-9:
        raise OverlapError("k/eps must be a lattice translation")
    shifted = np.zeros(grid.shape, dtype=np.complex128)
    src = np.nonzero(g_env.values)
    tgt = tuple(src[a] + int(sr[a]) for a in range(grid.d))
    for a in range(grid.d):
        if tgt[a].size and (tgt[a].min() < 0 or tgt[a].max() > grid.m - 1):
            raise OverlapError("shifted envelope leaves the lattice")
    shifted[tgt] = g_env.values[src]
    sq = grid.freq_sq()
    theta = eps * sq - omega / eps
    tint = _time_phase_integral(theta, t)
    vals = np.exp(-0.5j * eps * t * sq) * shifted * tint
    return field(grid, vals)


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _next_fast_even(n: int) -> int:
    n = max(8, int(n))
    if n % 2:
        n += 1
    def smooth(m):
        for f in (2, 3, 5):
            while m % f == 0:
                m //= f
        return m == 1
    while not (n % 2 == 0 and smooth(n)):
        n += 2
    return n


def gaussian_envelope(grid: FrequencyGrid, amplitude: float, width: float, xi_clip: float):
    """Band-limited periodic Gaussian envelope amplitude*e^{-|x|^2/(2 w^2)}."""
    ax = grid.axis_freqs()
    prof = np.exp(-(width**2) * ax**2 / 2.0)
    prof[np.abs(ax) > xi_clip] = 0.0
    vals = prof.astype(np.complex128)
    for a in range(1, grid.d):
        vals = np.multiply.outer(vals, prof.astype(np.complex128))
    scale = amplitude * (width / math.sqrt(2.0 * math.pi)) ** grid.d
    return field(grid, scale * vals)


@dataclass(frozen=True)
class WnlgoRunConfig:
    """Shared knobs of the geometric-optics experiments."""

    d: int = 2
    sigma: int = 1
    mu: int = 1
    bigj: float = 1.3
    amplitude: float = 0.35
    width: float = 1.0
    tau: float = 0.5
    profile_xi: float = 32.0
    profile_m: int = 64
    harmonics: int = 0  # extra mode band the solver grid must carry; 0 = auto
    n_samples: int = 6
    steps_per_unit: int = 512
    profile_steps: int = 64
    grid_pad: float = 8.0


def _solver_grid(cfg: WnlgoRunConfig, eps: float, active_modes) -> FrequencyGrid:
    max_mode = max(max(abs(c) for c in j) for j in active_modes)
    band = cfg.harmonics if cfg.harmonics > 0 else (2 * cfg.sigma + 1) * max(1, max_mode)
    xi_req = band / eps + cfg.profile_xi + cfg.grid_pad
    m = _next_fast_even(int(math.ceil(2.0 * xi_req)))
    return make_grid(cfg.d, m / 2.0, m)


def _profile_grid(cfg: WnlgoRunConfig) -> FrequencyGrid:
    return make_grid(cfg.d, cfg.profile_xi, cfg.profile_m)


def _sample_times(cfg: WnlgoRunConfig, n_steps: int) -> list:
    # exact common multiples of tau/n_samples; n_steps is already a multiple
    return [i * cfg.tau / cfg.n_samples for i in range(1, cfg.n_samples + 1)]


def _eps_aligned(eps: float) -> bool:
    inv = 1.0 / eps
    return abs(inv - round(inv)) < 1e-9


def run_semiclassical(cfg: WnlgoRunConfig, eps: float):
    """Solve the semiclassical flow and its profile system for one eps.

    Returns (path, solver result, solver grid, profile->solver sample map,
    self-convergence figure).
    """
    if not _eps_aligned(eps):
        raise OverlapError(f"1/eps = {1 / eps} must be an integer for exact shifts")
    pgrid = _profile_grid(cfg)
    alpha = gaussian_envelope(pgrid, cfg.amplitude, cfg.width, cfg.profile_xi / 3.0)
    modes = creation_modes(cfg.d, cfg.sigma)
    ps0 = make_initial_profiles(pgrid, cfg.sigma, cfg.mu, eps, cfg.bigj, modes, alpha)
    path = evolve_profiles(
        ps0, cfg.tau, n_steps=cfg.profile_steps, align_multiple=cfg.n_samples
    )

    sgrid = _solver_grid(cfg, eps, ps0.modes())
    u0 = assemble_uapp(ps0, sgrid, allow_overlap=True)
    n_steps = max(128, _round_steps(cfg, eps))
    n_steps = cfg.n_samples * int(math.ceil(n_steps / cfg.n_samples))
    samples = _sample_times(cfg, n_steps)
    res = split_step(
        u0,
        cfg.tau,
        n_steps,
        cfg.sigma,
        dispersion=eps,
        nonlinear=cfg.mu * eps ** (cfg.bigj - 1.0),
        sample_times=samples,
        order=4,
    )
    return path, res, sgrid, samples


def _round_steps(cfg: WnlgoRunConfig, eps: float) -> int:
    # splitting error scales like dt^2/eps; hold dt^2/eps roughly constant
    base = cfg.steps_per_unit * cfg.tau
    return int(base * math.sqrt(0.125 / eps)) if eps < 0.125 else int(base)


def _path_sample(path: ProfilePath, t: float) -> ProfileSet:
    # exact stored time only: the eikonal phases carry 1/eps rates, so even a
    # small time offset corrupts the assembled carrier phase
    k = int(np.argmin(np.abs(path.times - t)))
    if abs(path.times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t={t} is not on the stored profile time grid")
    profiles = {j: field(path.grid, v[k]) for j, v in path.values.items()}
    return ProfileSet(
        path.grid, path.sigma, path.mu, path.eps, path.bigj, profiles, t
    )


def wnlgo_error(cfg: WnlgoRunConfig, eps_list, variants=("fl1-flinf", "fl1-m11")):
    """max_t ||u - u_app||_X over the sampled horizon, for each eps.

    Returns a dict with per-eps rows and per-variant log-log slope fits.
    """
    rows = []
    for eps in sorted(eps_list, reverse=True):
        path, res, sgrid, samples = run_semiclassical(cfg, eps)
        errs = {v: 0.0 for v in variants}
        for t in samples:
            ps_t = _path_sample(path, t)
            uapp = assemble_uapp(ps_t, sgrid, allow_overlap=True)
            # mass-sparsify: changes every norm by < 1e-9 relative while
            # keeping the modulation-norm cell enumeration tractable
            w = mass_sparsify(field(sgrid, res.samples[t].values - uapp.values))
            for v in variants:
                errs[v] = max(errs[v], x_norm(w, v))
        row = {"eps": eps, "grid_m": sgrid.m}
        for v in variants:
            row[f"err_{v}"] = errs[v]
        rows.append(row)
        log.info("eps=%g: %s", eps, {k: f"{v:.4g}" for k, v in row.items() if k != "eps"})
    fits = {v: fit_power_law([r["eps"] for r in rows], [r[f"err_{v}"] for r in rows])
            for v in variants}
    return {"rows": rows, "fits": fits}


def fit_power_law(xs, ys):
    """Least-squares slope of log y against log x, with R^2 and monotonicity."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    order = np.argsort(lx)
    mono = bool(np.all(np.diff(ly[order]) > 0) or np.all(np.diff(ly[order]) < 0))
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "monotone": mono}


def run_loss_experiment(cfg: WnlgoRunConfig, s: float, eps_list):
    """Initial-smallness and evolved-growth scalings of the unscaled flow.

    For each eps the unscaled datum psi(0) = eps^{(J-2)/(2 sigma)} u(0) is
    measured in FL^p_s (p in {1, 2, inf}) and diagonal modulation norms; the
    evolved state psi(eps tau) is measured in FL^2_k for k in {-1, 0} on the
    full lattice and on the non-oscillatory block, where the created zero
    mode carries the divergence.
    """
    if cfg.d * cfg.sigma < 2:
        raise WindowError("loss experiments require d*sigma >= 2")
    if not s < -1.0 / (2 * cfg.sigma + 1):
        raise WindowError(
            f"need s < -1/(2 sigma + 1) = {-1.0 / (2 * cfg.sigma + 1):g}, got {s}"
        )
    lo, hi = j_window(cfg.sigma, s)
    if not lo < cfg.bigj < hi:
        raise WindowError(
            f"J={cfg.bigj:g} outside the admissible window ({lo:g}, {hi:g})"
        )
    pw = unscale_exponent(cfg.sigma, cfg.bigj)
    rows = []
    for eps in sorted(eps_list, reverse=True):
        path, res, sgrid, samples = run_semiclassical(cfg, eps)
        zero = tuple([0] * cfg.d)
        a0_final = field(path.grid, path.values[zero][-1])
        a0_l2 = physical_l2(a0_final)
        if a0_l2 <= 0:
            raise ContractionError("zero-mode profile vanished at tau; adjust tau")
        amp0 = eps**pw
        u0 = assemble_uapp(_path_sample(path, 0.0), sgrid, allow_overlap=True)
        psi0 = field(sgrid, amp0 * u0.values)
        u_tau = res.samples[samples[-1]]
        psi_tau = mass_sparsify(field(sgrid, amp0 * u_tau.values))
        low = zero_mode_block(psi_tau, eps)
        row = {
            "eps": eps,
            "a0_l2": a0_l2,
            "norm0_fl1": fourier_lebesgue_norm(psi0, 1.0, s),
            "norm0_fl2": fourier_lebesgue_norm(psi0, 2.0, s),
            "norm0_flinf": fourier_lebesgue_norm(psi0, math.inf, s),
            "norm0_m22": modulation_norm_ud(sparsify(psi0), 2.0, 2.0, s),
            "norm0_m11": modulation_norm_ud(sparsify(psi0), 1.0, 1.0, s),
            "normt_fl2_k0": fourier_lebesgue_norm(psi_tau, 2.0, 0.0),
            "normt_fl2_km1": fourier_lebesgue_norm(psi_tau, 2.0, -1.0),
            "normt_low_fl2_k0": fourier_lebesgue_norm(low, 2.0, 0.0),
            "normt_low_fl2_km1": fourier_lebesgue_norm(low, 2.0, -1.0),
        }
        rows.append(row)
        log.info("eps=%g: %s", eps, {k: f"{v:.4g}" for k, v in row.items()})
    eps_arr = [r["eps"] for r in rows]
    fits = {
        "initial_fl2": fit_power_law(eps_arr, [r["norm0_fl2"] for r in rows]),
        "evolved_low_fl2": fit_power_law(eps_arr, [r["normt_low_fl2_k0"] for r in rows]),
        "evolved_low_fl2_km1": fit_power_law(
            eps_arr, [r["normt_low_fl2_km1"] for r in rows]
        ),
        "evolved_full_fl2_km1": fit_power_law(
            eps_arr, [r["normt_fl2_km1"] for r in rows]
        ),
    }
    targets = {
        "initial_fl2": pw + abs(s),
        "evolved_low_fl2": pw + cfg.bigj - 1.0,
    }
    return {"rows": rows, "fits": fits, "targets": targets}

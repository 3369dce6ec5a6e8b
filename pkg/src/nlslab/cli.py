"""Experiment orchestration and bit-stable result emission.

Subcommands mirror the experiment modules: ``inflate``, ``wnlgo-error``,
``loss-reg``, ``resonance``, ``norm`` and ``selfcheck``.  Every run writes
its CSV and a manifest atomically; identical configs reproduce byte-identical
CSVs.  Flag precedence is flags > config file > defaults.  Exit codes:
0 ok, 2 config error, 3 invariant failure, 4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from . import inflation as infl
from . import picard as pc
from . import wnlgo as w
from .norms import (
    INF,
    NormSpec,
    Partition,
    fourier_lebesgue_norm,
    norm_eval,
)
from .spectral import (
    AliasingError,
    GridError,
    OffLatticeError,
    Galilean,
    apply_symmetry,
    field,
    free_propagate,
    load_field,
    make_grid,
    multiply_fields,
    physical_l2,
    to_frequency,
    to_physical,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_BUDGET = 4


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """Round-trip-safe float formatting (17 significant digits)."""
    return format(float(x), ".17g")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".nlslab-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def _write_manifest(path: str, config: dict, extra: dict) -> None:
    payload = {
        "config": config,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "version": __version__,
        **extra,
    }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NLSLAB_THREADS", "1")))
    except ValueError:
        return 1


def _parse_eps_list(text: str):
    """Parse ``2^-3..2^-7`` style ranges or comma-separated values."""
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)

        def parse_pow(tok):
            tok = tok.strip()
            if "^" in tok:
                base, expo = tok.split("^", 1)
                return float(base) ** float(expo)
            return float(tok)

        a, b = parse_pow(lo_s), parse_pow(hi_s)
        hi, lo = max(a, b), min(a, b)
        out = []
        e = hi
        while e >= lo * (1 - 1e-12):
            out.append(e)
            e /= 2.0
        return out
    return [float(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_inflate(params: dict, out_path: str, manifest_path: str) -> int:
    space = params["space"]
    n_list = [
        float(2**k)
        for k in range(
            int(math.log2(params["nmin"])), int(math.log2(params["nmax"])) + 1
        )
    ]
    desk = infl.DeskScaleOptions(
        a_cube=params["a0"],
        tn2_start=params["tn2"],
        tn2_decay=params["tn2_decay"],
        n_ref=n_list[0],
    )
    t0 = time.time()
    records = infl.run_inflation_sweep(
        space,
        d=params["d"],
        sigma=params["sigma"],
        s=params["s"],
        n_list=n_list,
        p=params["p"],
        q=params["q"],
        mu=params["mu"],
        desk=desk,
        grid_budget=params["grid_budget"],
        max_workers=_threads(),
    )
    lines = [infl.ExperimentRecord.CSV_COLUMNS]
    lines += [r.csv_row() for r in records]
    _atomic_write(out_path, "\n".join(lines) + "\n")
    audit = [
        {"N": r.n_freq, "rows": [a.as_dict() for a in r.audit_rows]} for r in records
    ]
    grids = [
        {"N": r.n_freq, "m": r.grid_m, "xi_max": r.grid_xi} for r in records
    ]
    _write_manifest(
        manifest_path,
        {"experiment": f"inflate-{space}", "params": params},
        {
            "wall_time_s": time.time() - t0,
            "rows": len(records),
            "skipped": [r.n_freq for r in records if r.skipped],
            "grids": grids,
            "audit": audit,
        },
    )
    return EXIT_OK


def run_wnlgo_error(params: dict, out_path: str, manifest_path: str, plot_path) -> int:
    variants = {
        "fl": ("fl1-flinf",),
        "mod": ("fl1-m11",),
        "both": ("fl1-flinf", "fl1-m11"),
    }[params["x"]]
    cfg = w.WnlgoRunConfig(
        d=params["d"],
        sigma=params["sigma"],
        mu=params["mu"],
        bigj=params["J"],
        amplitude=params["amplitude"],
        width=params["width"],
        tau=params["tau"],
    )
    t0 = time.time()
    out = w.wnlgo_error(cfg, params["eps_list"], variants=variants)
    header = "eps," + ",".join(f"err_{v}" for v in variants)
    lines = [header]
    for row in out["rows"]:
        lines.append(
            ",".join([_fmt(row["eps"])] + [_fmt(row[f"err_{v}"]) for v in variants])
        )
    _atomic_write(out_path, "\n".join(lines) + "\n")
    if plot_path:
        plot_lines = []
        for v in variants:
            plot_lines.append(f"# err_{v}: log10(eps) log10(err)")
            for row in out["rows"]:
                plot_lines.append(
                    f"{_fmt(math.log10(row['eps']))} {_fmt(math.log10(row[f'err_{v}']))}"
                )
            plot_lines.append("")
        _atomic_write(plot_path, "\n".join(plot_lines))
    _write_manifest(
        manifest_path,
        {"experiment": "wnlgo-error", "params": params},
        {"wall_time_s": time.time() - t0, "fits": out["fits"]},
    )
    return EXIT_OK


def run_loss(params: dict, out_path: str, manifest_path: str, plot_path) -> int:
    cfg = w.WnlgoRunConfig(
        d=params["d"],
        sigma=params["sigma"],
        mu=params["mu"],
        bigj=params["J"],
        amplitude=params["amplitude"],
        width=params["width"],
        tau=params["tau"],
    )
    t0 = time.time()
    out = w.run_loss_experiment(cfg, params["s"], params["eps_list"])
    cols = list(out["rows"][0].keys())
    lines = [",".join(cols)]
    for row in out["rows"]:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    _atomic_write(out_path, "\n".join(lines) + "\n")
    if plot_path:
        plot_lines = ["# initial FL2_s: log10(eps) log10(norm)"]
        for row in out["rows"]:
            plot_lines.append(
                f"{_fmt(math.log10(row['eps']))} {_fmt(math.log10(row['norm0_fl2']))}"
            )
        plot_lines.append("")
        plot_lines.append("# evolved zero-block FL2: log10(eps) log10(norm)")
        for row in out["rows"]:
            plot_lines.append(
                f"{_fmt(math.log10(row['eps']))} "
                f"{_fmt(math.log10(row['normt_low_fl2_k0']))}"
            )
        _atomic_write(plot_path, "\n".join(plot_lines) + "\n")
    _write_manifest(
        manifest_path,
        {"experiment": "loss-reg", "params": params},
        {
            "wall_time_s": time.time() - t0,
            "fits": out["fits"],
            "targets": out["targets"],
        },
    )
    return EXIT_OK


def run_resonance(params: dict, out_path: str, manifest_path: str) -> int:
    d = params["d"]
    sigma = params["sigma"]
    j = params["j"]
    if isinstance(j, (int, float)):
        j = [int(j)]
    if len(j) == 1 and d > 1:
        j = list(j) * d
    if len(j) != d:
        raise ConfigError(f"target mode {j} must have {d} components")
    t0 = time.time()
    tuples = w.resonance_set(j, sigma, params["window"], d)
    slots = 2 * sigma + 1
    header = ",".join(f"k{i + 1}" for i in range(slots))
    lines = [header]
    for tup in tuples:
        lines.append(",".join(";".join(str(c) for c in k) for k in tup))
    _atomic_write(out_path, "\n".join(lines) + "\n")
    _write_manifest(
        manifest_path,
        {"experiment": "resonance", "params": params},
        {"wall_time_s": time.time() - t0, "count": len(tuples)},
    )
    return EXIT_OK


def run_norm(params: dict) -> int:
    f = load_field(params["infile"])
    spec = NormSpec.from_json(params["spec"])
    value = norm_eval(f, spec)
    sys.stdout.write(_fmt(value) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selfcheck
# ---------------------------------------------------------------------------

def selfcheck(partition_override: Partition | None = None) -> dict:
    """Fast invariant suite; returns a report dict with per-check results.

    ``partition_override`` substitutes the partition table under test (used
    by the fault-injection test).
    """
    checks = []

    def record(name, measured, tol, ok=None):
        ok = bool(measured <= tol) if ok is None else bool(ok)
        checks.append(
            {"name": name, "pass": ok, "measured": float(measured), "tolerance": tol}
        )

    rng = np.random.default_rng(20240811)

    # partition of unity
    g1 = make_grid(1, 12.0, 96)
    part = partition_override if partition_override is not None else Partition(g1)
    record("partition_unity", part.unity_deviation(), 1e-12)

    # transform unitarity
    g2 = make_grid(2, 6.0, 24)
    for g in (g1, g2):
        v = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        f = field(g, v)
        rt = to_frequency(g, to_physical(f))
        err = float(np.max(np.abs(rt.values - v)) / np.max(np.abs(v)))
        record(f"unitarity_d{g.d}", err, 1e-12)

    # free propagator FL isometry (per-node modulus and norms)
    v = rng.standard_normal(g1.shape) + 1j * rng.standard_normal(g1.shape)
    f = field(g1, v)
    fp = free_propagate(f, 0.37)
    record(
        "free_propagator_modulus",
        float(np.max(np.abs(np.abs(fp.values) - np.abs(v)))) / float(np.max(np.abs(v))),
        1e-14,
    )
    worst = 0.0
    for p in (1.0, 2.0, INF):
        for s in (-1.0, 0.0):
            a = fourier_lebesgue_norm(f, p, s)
            b = fourier_lebesgue_norm(fp, p, s)
            worst = max(worst, abs(a - b) / a)
    record("free_propagator_fl_isometry", worst, 1e-13)

    # parity: even iterate indices are structurally zero
    cfgp = pc.PicardConfig(sigma=1)
    exp = pc.PicardExpansion(f, cfgp)
    try:
        exp.iterate(2, 0.01)
        record("parity_structural", 1.0, 0.0, ok=False)
    except pc.ParityError:
        record("parity_structural", 0.0, 0.0, ok=True)

    # Galilean invariance of the L2 norm (lattice-aligned velocity)
    fb = field(g1, np.where(np.abs(g1.axis_freqs()) <= 6.0, v, 0.0))
    gal = apply_symmetry(fb, Galilean(v=(4 * g1.dxi,), t=0.3))
    record(
        "galilean_l2",
        abs(physical_l2(gal) - physical_l2(fb)) / physical_l2(fb),
        1e-13,
    )

    # twist-norm bound: ||f e_{j/eps}||_{FL^p_s} <= C eps^{|s|} ||f||_{FL^p_{|s|}}
    s = -0.5
    p = 2.0
    gt = make_grid(1, 320.0, 1280)  # dxi = 0.5, so every 1/eps shift is exact
    prof = np.exp(-gt.axis_freqs() ** 2 / 2.0).astype(complex)
    prof[np.abs(gt.axis_freqs()) > 12.0] = 0.0
    ft = field(gt, prof)
    base = fourier_lebesgue_norm(ft, p, abs(s))
    ratios = []
    for k in range(3, 9):
        eps = 2.0**-k
        tw = apply_symmetry(ft, Galilean(v=(1.0 / eps,), t=0.0))
        ratios.append(fourier_lebesgue_norm(tw, p, s) / (eps ** abs(s) * base))
    record("twist_bound_max_ratio", max(ratios), 8.0)

    # resonance oracle equivalence on a small window
    ok = True
    for jx in (-1, 0, 1):
        for jy in (-1, 0, 1):
            b = set(w.resonance_set((jx, jy), 1, 2, 2))
            o = set(w.resonance_cubic_oracle((jx, jy), 2, 2))
            ok = ok and (b == o)
    record("resonance_oracle_equivalence", 0.0 if ok else 1.0, 0.0, ok=ok)

    # convolution against the direct O(M^2) sum
    g3 = make_grid(1, 4.0, 16)
    a = np.zeros(16, complex)
    b = np.zeros(16, complex)
    a[6:10] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    b[7:10] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    fa, fb2 = field(g3, a), field(g3, b)
    prod = multiply_fields(fa, fb2)
    direct = np.zeros(16, complex)
    i0 = g3.center_index
    for i in range(16):
        acc = 0.0 + 0.0j
        for m in range(16):
            n = i - m + i0
            if 0 <= n < 16:
                acc += a[m] * b[n]
        direct[i] = acc * g3.dxi
    record(
        "convolution_oracle",
        float(np.max(np.abs(prod.values - direct))) / float(np.max(np.abs(direct))),
        1e-10,
    )

    return {"pass": all(c["pass"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "inflate": {
        "space": "fl", "d": 1, "sigma": 1, "s": -0.75, "p": 2.0, "q": 2.0,
        "mu": 1, "nmin": 64, "nmax": 1024, "a0": 8.0, "tn2": 0.08,
        "tn2_decay": 0.5, "grid_budget": 1 << 22,
    },
    "wnlgo-error": {
        "d": 2, "sigma": 1, "mu": 1, "J": 1.3, "x": "both",
        "eps_list": [2**-3, 2**-4, 2**-5, 2**-6, 2**-7],
        "amplitude": 0.35, "width": 1.0, "tau": 0.5,
    },
    "loss-reg": {
        "d": 2, "sigma": 1, "mu": 1, "J": 1.3, "s": -0.4,
        "eps_list": [2**-3, 2**-4, 2**-5, 2**-6, 2**-7],
        "amplitude": 0.35, "width": 1.0, "tau": 0.5,
    },
    "resonance": {"d": 1, "sigma": 1, "j": [0], "window": 2},
    "norm": {"infile": "", "spec": ""},
}


def _build_parser():
    ap = argparse.ArgumentParser(prog="nlslab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file (flags override it)")
        sp.add_argument("--out", help="CSV output path")
        sp.add_argument("--manifest", help="manifest JSON path")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("inflate", help="norm-inflation dominance sweep")
    common(sp)
    sp.add_argument("--space", choices=("fl", "mod"))
    for name, typ in (
        ("d", int), ("sigma", int), ("s", float), ("p", float), ("q", float),
        ("mu", int), ("nmin", int), ("nmax", int), ("a0", float), ("tn2", float),
        ("tn2-decay", float), ("grid-budget", int),
    ):
        sp.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))

    sp = sub.add_parser("wnlgo-error", help="approximation error slope experiment")
    common(sp)
    sp.add_argument("--plot", help="two-column log-log plot data path")
    sp.add_argument("--x", choices=("fl", "mod", "both"))
    sp.add_argument("--eps", help="eps list: '2^-3..2^-7' or comma separated")
    for name, typ in (
        ("d", int), ("sigma", int), ("mu", int), ("J", float),
        ("amplitude", float), ("width", float), ("tau", float),
    ):
        sp.add_argument(f"--{name}", type=typ, dest=name)

    sp = sub.add_parser("loss-reg", help="loss-of-regularity scaling experiment")
    common(sp)
    sp.add_argument("--plot", help="two-column log-log plot data path")
    sp.add_argument("--eps", help="eps list: '2^-3..2^-7' or comma separated")
    for name, typ in (
        ("d", int), ("sigma", int), ("mu", int), ("J", float), ("s", float),
        ("amplitude", float), ("width", float), ("tau", float),
    ):
        sp.add_argument(f"--{name}", type=typ, dest=name)

    sp = sub.add_parser("resonance", help="enumerate resonance tuples")
    common(sp)
    sp.add_argument("--d", type=int)
    sp.add_argument("--sigma", type=int)
    sp.add_argument("--j", help="target mode, comma-separated components")
    sp.add_argument("--window", type=int)

    sp = sub.add_parser("norm", help="evaluate a tagged norm on a stored field")
    common(sp)
    sp.add_argument("--in", dest="infile", help="input .nlsf field")
    sp.add_argument("--spec", help="NormSpec JSON")

    sp = sub.add_parser("selfcheck", help="run the fast invariant suite")
    common(sp)
    return ap


def _merge_config(command: str, args) -> dict:
    params = dict(_DEFAULTS[command])
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        for k, v in file_cfg.get("params", file_cfg).items():
            if k in params:
                params[k] = v
    for k in list(params):
        flag = getattr(args, k, None)
        if flag is not None:
            params[k] = flag
    eps = getattr(args, "eps", None)
    if eps:
        params["eps_list"] = _parse_eps_list(eps)
    j = getattr(args, "j", None)
    if j is not None and command == "resonance":
        params["j"] = [int(tok) for tok in str(j).split(",")]
    return params


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    command = args.command
    try:
        if command == "selfcheck":
            report = selfcheck()
            sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
            return EXIT_OK if report["pass"] else EXIT_INVARIANT
        params = _merge_config(command, args)
        out = args.out or f"{command}.csv"
        manifest = args.manifest or f"{command}-manifest.json"
        if command == "inflate":
            return run_inflate(params, out, manifest)
        if command == "wnlgo-error":
            return run_wnlgo_error(params, out, manifest, getattr(args, "plot", None))
        if command == "loss-reg":
            return run_loss(params, out, manifest, getattr(args, "plot", None))
        if command == "resonance":
            return run_resonance(params, out, manifest)
        if command == "norm":
            if not params["infile"] or not params["spec"]:
                raise ConfigError("norm requires --in and --spec")
            return run_norm(params)
        raise ConfigError(f"unknown command {command!r}")
    except (ConfigError, infl.RegimeError, w.WindowError, GridError,
            OffLatticeError, ValueError, OSError) as err:
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")
        return EXIT_CONFIG
    except (pc.BudgetError, w.ResonanceBudgetError) as err:
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")
        return EXIT_BUDGET
    except (AliasingError, pc.SummabilityError, w.ContractionError,
            w.OverlapError) as err:
        sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

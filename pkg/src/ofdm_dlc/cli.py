"""Command-line experiment runner.

Usage examples::

    ofdm-dlc su-dlc --carriers 16 --taps 16 --snr-db 10 --samples 100000 --seed 7
    ofdm-dlc bounds --list
    ofdm-dlc su-bounds --carriers 16 --snr-db 40 --bound high_snr_sandwich
    ofdm-dlc bc-region --users 2 --carriers 16 --taps 7 --snr-db 10 --levels 4 --seed 7
    ofdm-dlc ofdma-bounds --carriers 16 --snr-db 10 --s 1 2 3 4 --prorated
    ofdm-dlc ofdma-run --carriers 16 --rates 0.5 0.5 --samples 1000
    ofdm-dlc channel-stats --carriers 64 --taps 64 --samples 100000
    ofdm-dlc figure dlc1_ord --out-dir out/dlc1_ord

Tables go to stdout, or to ``--out PATH`` together with a sidecar
``PATH.manifest.json`` holding the resolved configuration, the seed and the
library version.  ``--config FILE`` reads a JSON object whose keys are the
long option names (dashes or underscores) and override the command line.
The default seed comes from the ``OFDM_DLC_SEED`` environment variable
(0 if unset).  SNR values in dB are per-carrier powers ``10**(dB/10)``.

Exit codes: 0 success, 2 invalid input, 3 a bound was evaluated outside
its regime of validity (the message is printed as raised).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bounds, figures
from .broadcast import min_sum_power_batch
from .channel import ChannelModel, PowerDelayProfile, max_gain_stats, sample_gains
from .estimate import summarize
from .montecarlo import DivergenceWarning, RegularityError, expect, su_dlc
from .ofdma import (FdmaRegionBuilder, OfdmaBoundConfig, bound_boundary_point,
                    fdma_powers_from_multipliers, lemma_bound_power)
from .region import RegionBuilder
from .waterfill import InfeasibleError

__all__ = ["main", "run", "write_table", "SEED_ENV"]

SEED_ENV = "OFDM_DLC_SEED"


class CliError(Exception):
    """Invalid configuration detected before dispatch."""


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_table(header, rows, fmt: str = "csv") -> str:
    """Render a table as CSV (full double precision) or as JSON records."""
    if fmt == "json":
        recs = [dict(zip(header, (_jsonable(v) for v in r))) for r in rows]
        return json.dumps(recs, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _manifest(command: str, config: dict, seed) -> str:
    doc = {
        "command": command,
        "config": _jsonable(config),
        "seed": seed,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(args, header, rows, config: dict) -> None:
    text = write_table(header, rows, args.format)
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    Path(str(out) + ".manifest.json").write_text(_manifest(args.command, config, config.get("seed")))


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _add_output(p):
    p.add_argument("--out", default=None, help="output file (default: stdout, no manifest)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--config", default=None, help="JSON file whose keys override flags")


def _add_model(p, users: int = 1, carriers: int = 16):
    p.add_argument("--users", type=int, default=users)
    p.add_argument("--carriers", type=int, default=carriers)
    p.add_argument("--taps", type=int, default=None, help="channel taps L (default: carriers)")
    p.add_argument("--pdp", default="uniform",
                   help="delay profile: 'uniform', 'exp:DECAY' or 'weights:w1,w2,...'")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)


def _add_power(p, nargs=None):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--snr-db", type=float, nargs=nargs, default=None)
    g.add_argument("--power", type=float, nargs=nargs, default=None,
                   help="linear per-carrier power budget")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ofdm-dlc",
                                 description="Delay-limited capacity of OFDM fading channels.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("su-dlc", help="single-user delay-limited capacity by Monte Carlo")
    _add_model(p)
    _add_power(p, nargs="+")
    p.add_argument("--tol", type=float, default=1e-3)
    _add_output(p)

    for name in ("su-bounds", "bounds"):
        p = sub.add_parser(name, help="closed-form low/high-SNR bounds")
        _add_model(p)
        _add_power(p)
        p.add_argument("--list", action="store_true", help="list every bound id and exit")
        p.add_argument("--bound", action="append", default=None, help="bound id (repeatable)")
        p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                       help="extra bound parameter, e.g. b=3, alpha=0.5, density_form=sqrt")
        p.add_argument("--no-guard", action="store_true", help="disable the high-SNR regime guard")
        _add_output(p)

    p = sub.add_parser("bc-region", help="broadcast delay-limited region boundary")
    _add_model(p, users=2)
    _add_power(p)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--no-mirror", action="store_true")
    p.add_argument("--fdma", action="store_true",
                   help="trace the full-CSI one-user-per-carrier region instead")
    _add_output(p)

    p = sub.add_parser("ofdma-bounds", help="ordinal OFDMA lower bound on the region")
    p.add_argument("--users", type=int, default=2)
    p.add_argument("--carriers", type=int, default=16)
    _add_power(p)
    p.add_argument("--s", type=int, nargs="+", default=[1])
    p.add_argument("--prorated", action="store_true", help="also emit the prorated FDMA variant")
    p.add_argument("--rates", type=float, nargs="+", default=None,
                   help="evaluate the bound power at this rate vector instead of sweeping")
    p.add_argument("--directions", type=int, default=33)
    p.add_argument("--seed", type=int, default=None)
    _add_output(p)

    p = sub.add_parser("ofdma-run", help="full-CSI FDMA allocation against the broadcast optimum")
    _add_model(p, users=2)
    p.add_argument("--rates", type=float, nargs="+", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    _add_output(p)

    p = sub.add_parser("channel-stats", help="Monte-Carlo moments of the gain statistics")
    _add_model(p)
    _add_output(p)

    p = sub.add_parser("figure", help="dataset behind one figure")
    p.add_argument("name")
    p.add_argument("--out-dir", default=None, help="default: ./figures/NAME")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--large", action="store_true", help="allow K = 1024 configurations")
    p.add_argument("--config", default=None)
    return ap


def _apply_config(args) -> None:
    if getattr(args, "config", None) is None:
        return
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise CliError("config file must hold a JSON object")
    for key, value in data.items():
        attr = key.replace("-", "_")
        if attr in ("command", "config") or not hasattr(args, attr):
            raise CliError(f"unknown config key {key!r} for {args.command}")
        setattr(args, attr, value)


def _seed(args) -> int:
    return _default_seed() if args.seed is None else int(args.seed)


def _powers(args, required: bool = True) -> list[float]:
    if args.snr_db is not None:
        vals = args.snr_db if isinstance(args.snr_db, list) else [args.snr_db]
        return [figures.db_to_power(float(v)) for v in vals]
    if args.power is not None:
        vals = args.power if isinstance(args.power, list) else [args.power]
        out = [float(v) for v in vals]
        if any(not v > 0 for v in out):
            raise CliError("--power must be positive")
        return out
    if required:
        raise CliError("one of --snr-db or --power is required")
    return []


def _pdp(spec: str, taps: int) -> PowerDelayProfile:
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        return PowerDelayProfile.uniform(taps)
    if kind in ("exp", "exponential"):
        return PowerDelayProfile.exponential(taps, float(rest))
    if kind == "weights":
        return PowerDelayProfile.from_weights([float(x) for x in rest.split(",")])
    raise CliError(f"unknown delay profile {spec!r}")


def _model(args) -> ChannelModel:
    if args.users < 1 or args.carriers < 1:
        raise CliError("users and carriers must be positive")
    taps = args.carriers if args.taps is None else args.taps
    pdp = _pdp(args.pdp, taps)
    if pdp.taps > args.carriers:
        raise CliError("taps must not exceed carriers")
    return ChannelModel(args.users, args.carriers, pdp)


def _iid(model: ChannelModel, user: int = 0) -> bool:
    p = model.pdp[user]
    return p.taps == model.carriers and p == PowerDelayProfile.uniform(p.taps)


def _model_config(args, model: ChannelModel, seed: int, samples: int) -> dict:
    return {"users": model.users, "carriers": model.carriers,
            "pdp": [list(p.as_array()) for p in model.pdp], "tap_law": model.tap_law,
            "samples": samples, "seed": seed}


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_su_dlc(args) -> None:
    model = _model(args)
    seed = _seed(args)
    samples = args.samples or 100_000
    powers = _powers(args)
    g = sample_gains(model, samples, seed)[:, 0, :]
    rows = []
    for P in powers:
        r = su_dlc(model, P, samples, seed, tol=args.tol, states=g)
        rows.append([P, r.rate, r.rate_std_error, r.estimate.mean, r.estimate.std_error])
    cfg = _model_config(args, model, seed, samples) | {"power": powers, "tol": args.tol}
    _emit(args, ["P", "C_d", "SE", "avg_power", "avg_power_se"], rows, cfg)


def _parse_params(items) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


class _Moments:
    """Lazily computed distribution inputs of the bounds for one model."""

    def __init__(self, model: ChannelModel, samples: int, seed: int):
        self.model, self.samples, self.seed = model, samples, seed
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def E_inv_max(self) -> float:
        if _iid(self.model):
            return self._get("inv_max", lambda: bounds.inverse_max_moment_iid(self.model.carriers))
        return self._get("inv_max", lambda: max_gain_stats(self.model, self.samples,
                                                           self.seed)["inv_max"].mean)

    @property
    def E_geo(self) -> float:
        if _iid(self.model):
            return self._get("geo", lambda: bounds.geo_moment_iid(self.model.carriers))
        return self._get("geo", lambda: expect(self.model, "geo_inv", self.samples, self.seed).mean)

    @property
    def E_inv_c1(self) -> float:
        return self._get("c1", lambda: bounds.inverse_tap_energy_moment(self.model.pdp[0]))


def _bound_kwargs(name: str, P, model: ChannelModel, mom: _Moments, params: dict, guard: bool):
    K, L = model.carriers, model.pdp[0].taps
    g = {"guard": guard}
    table = {
        "low_snr_slope": lambda: {"E_inv_max": mom.E_inv_max},
        "low_snr_sublinear": lambda: {"K": K, "E_inv_max": mom.E_inv_max},
        "low_snr_log_approx": lambda: {"K": K, "P": P, "E_inv_max": mom.E_inv_max},
        "corollary_low1_interval": lambda: {"K": K, "L": L, "P": P},
        "overshoot_factors": lambda: {"K": K, "L": L, "a": 2.0},
        "pdp_low_upper": lambda: {"K": K, "P": P, "alpha": 0.5, "E_inv_c1": mom.E_inv_c1},
        "high_snr_sandwich": lambda: {"P": P, "K": K, "E_geo": mom.E_geo, **g},
        "entropy_upper": lambda: {"P": P, "K": K, **g},
        "entropy_H": lambda: {},
        # Rayleigh marginal: unit-exponential density, bounded by 1 and decreasing
        "prop_high3_bound": lambda: {"P": P, "b": 2, "c_s": 1.0, "K": K, **g},
        "prop_high4_bound": lambda: {"P": P, "b": 2, "segments": [(0.0, math.inf, 1.0, 0.0)],
                                     "K": K, **g},
        # uniform taps: each quadrature component has density (L/pi)^(1/2) exp(-L x^2)
        "prop_high5_bound": lambda: {"P": P, "L": L, "v": L / math.pi, "alpha": float(L),
                                     "K": K, **g},
        "convergence_speed_lower": lambda: {"P": P, "K": K, **g},
        "pdp_high_upper": lambda: {"P": P, "E_inv_c1": mom.E_inv_c1, "K": K, **g},
    }
    if name not in table:
        raise CliError(f"unknown bound {name!r}; known: {', '.join(bounds.BOUNDS)}")
    kw = table[name]()
    kw.update(params)
    if "P" in kw and kw["P"] is None:
        raise CliError(f"bound {name} needs --snr-db or --power")
    return kw


def _cmd_bounds(args) -> None:
    if args.list:
        rows = [[n, e.kind, e.regime, e.summary] for n, e in bounds.BOUNDS.items()]
        _emit(args, ["id", "kind", "regime", "summary"], rows, {"list": True})
        return
    model = _model(args)
    seed = _seed(args)
    samples = args.samples or 100_000
    powers = _powers(args, required=False)
    P = powers[0] if powers else None
    params = _parse_params(args.param)
    explicit = args.bound is not None
    names = args.bound if explicit else list(bounds.BOUNDS)
    mom = _Moments(model, samples, seed)
    rows = []
    for name in names:
        kw = _bound_kwargs(name, P, model, mom, params if explicit else {}, not args.no_guard)
        try:
            rep = bounds.BOUNDS[name].fn(**kw)
        except bounds.RegimeError as exc:
            if explicit:
                raise
            rows.append([name, math.nan, math.nan, f"regime error: {exc}", "{}"])
            continue
        lo, hi = rep.value if isinstance(rep.value, tuple) else (rep.value, rep.value)
        rows.append([name, lo, hi, rep.validity_note,
                     json.dumps(_jsonable(rep.constants), sort_keys=True)])
    cfg = _model_config(args, model, seed, samples) | {"power": P, "bounds": names,
                                                        "params": params,
                                                        "guard": not args.no_guard}
    _emit(args, ["id", "lower", "upper", "note", "constants"], rows, cfg)


def _cmd_bc_region(args) -> None:
    model = _model(args)
    if model.users > 3:
        raise CliError("region tracing supports at most three users")
    seed = _seed(args)
    samples = args.samples or 10_000
    (P,) = _powers(args)[:1] or [None]
    cls = FdmaRegionBuilder if args.fdma else RegionBuilder
    b = cls(model, P, samples, seed, tol=args.tol)
    boundary = b.build(args.levels, mirror=False if args.no_mirror else None)
    header = [f"R_{m + 1}" for m in range(model.users)] + ["est_power", "std_error"]
    rows = [[*map(float, p.rates), p.estimate.mean, p.estimate.std_error] for p in boundary.points]
    cfg = _model_config(args, model, seed, samples) | {
        "power": P, "levels": args.levels, "tol": args.tol, "mirror": not args.no_mirror,
        "fdma": args.fdma}
    _emit(args, header, rows, cfg)


def _cmd_ofdma_bounds(args) -> None:
    M, K = args.users, args.carriers
    (P,) = _powers(args, required=args.rates is None)[:1] or [None]
    variants = [("lemma", OfdmaBoundConfig(s=int(s))) for s in args.s]
    if args.prorated:
        variants.append(("prorated", OfdmaBoundConfig(prorated=True)))
    header = [f"R_{m + 1}" for m in range(M)] + ["bound_power", "s", "variant"]
    rows = []
    if args.rates is not None:
        if len(args.rates) != M:
            raise CliError(f"--rates needs {M} values")
        for name, cfg in variants:
            rows.append([*map(float, args.rates), lemma_bound_power(M, K, args.rates, cfg),
                         cfg.s, name])
    else:
        if M != 2:
            raise CliError("boundary sweeps need --users 2; use --rates for other M")
        for name, cfg in variants:
            for a in np.linspace(0.0, math.pi / 2, args.directions):
                r = bound_boundary_point(M, K, [math.cos(a), math.sin(a)], P, cfg)
                rows.append([float(r[0]), float(r[1]), P, cfg.s, name])
    cfg = {"users": M, "carriers": K, "power": P, "s": list(args.s), "prorated": args.prorated,
           "rates": args.rates, "directions": args.directions, "seed": None}
    _emit(args, header, rows, cfg)


def _cmd_ofdma_run(args) -> None:
    model = _model(args)
    seed = _seed(args)
    samples = args.samples or 1_000
    if len(args.rates) != model.users or any(r < 0 for r in args.rates):
        raise CliError(f"--rates needs {model.users} nonnegative values")
    g = sample_gains(model, samples, seed)
    bc, _, mu, _, _ = min_sum_power_batch(g, args.rates, tol=args.tol)
    fdma = fdma_powers_from_multipliers(g, args.rates, mu)
    f, b = summarize(fdma, seed), summarize(bc, seed)
    gap = fdma - bc
    header = [f"R_{m + 1}" for m in range(model.users)] + [
        "fdma_power", "fdma_se", "bc_power", "bc_se", "min_gap"]
    rows = [[*map(float, args.rates), f.mean, f.std_error, b.mean, b.std_error, float(gap.min())]]
    cfg = _model_config(args, model, seed, samples) | {"rates": args.rates, "tol": args.tol}
    _emit(args, header, rows, cfg)


def _cmd_channel_stats(args) -> None:
    model = _model(args)
    seed = _seed(args)
    samples = args.samples or 100_000
    g = sample_gains(model, samples, seed)
    rows = []
    for name in ("h11", "log_h", "geo_inv", "inv_max", "chi_inv_max", "inv_tap_energy",
                 "max_gain"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DivergenceWarning)
            est = expect(model, name, samples, seed, states=g)
        flag = any(issubclass(w.category, DivergenceWarning) for w in caught)
        rows.append([name, est.mean, est.std_error, est.samples, flag])
    stats = max_gain_stats(model, samples, seed)
    if "concentration" in stats:
        c = stats["concentration"]
        rows.append(["concentration", c.mean, c.std_error, c.samples, False])
    cfg = _model_config(args, model, seed, samples)
    _emit(args, ["statistic", "mean", "std_error", "samples", "divergent"], rows, cfg)


def _cmd_figure(args) -> None:
    seed = _seed(args)
    if args.name not in figures.FIGURES:
        raise CliError(f"unknown figure {args.name!r}; valid ids: {', '.join(figures.FIGURES)}")
    if args.name in figures.LARGE_FIGURES and not args.large:
        raise CliError(f"figure {args.name} uses K = 1024; pass --large to run it")
    ds = figures.run_figure(args.name, seed, args.samples, args.large)
    out = Path(args.out_dir or Path("figures") / args.name)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in ds.tables.items():
        (out / f"{name}.csv").write_text(write_table(table.header, table.rows))
    cfg = {"figure": args.name, "large": args.large, **ds.config}
    (out / "manifest.json").write_text(_manifest("figure", cfg, seed))
    sys.stdout.write(f"wrote {', '.join(sorted(ds.tables))} to {out}\n")


COMMANDS = {
    "su-dlc": _cmd_su_dlc,
    "su-bounds": _cmd_bounds,
    "bounds": _cmd_bounds,
    "bc-region": _cmd_bc_region,
    "ofdma-bounds": _cmd_ofdma_bounds,
    "ofdma-run": _cmd_ofdma_run,
    "channel-stats": _cmd_channel_stats,
    "figure": _cmd_figure,
}


def run(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _apply_config(args)
        COMMANDS[args.command](args)
    except bounds.RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return 3
    except (CliError, ValueError, KeyError, InfeasibleError, RegularityError,
            NotImplementedError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""Command-line front end: ``pk run``, ``pk prior-check``, ``pk geweke``, ``pk ess``.

Run configurations are flat TOML files whose keys mirror :class:`RunConfig`;
``--set key=value`` overrides any of them from the command line.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from importlib.resources import files
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics as dg
from .exceptions import ConfigurationError, DataError, DomainError, PKError
from .model import FlatLikelihood, LogBetaPrior, NormalLikelihood, StablePrior
from .sampler import (
    DirectSlice,
    HybridSampler,
    MhStable,
    SliceAux,
    SweepSettings,
    TraceRecord,
    check_compatible,
    default_mh_lambda,
    default_variant,
)
from .stable_math import NGG, LogBetaParams, NormalizedStable, PitmanYor, SigmaStableParams

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4

FAMILIES = ("pitman_yor", "normalized_stable", "ngg", "logbeta")
VARIANTS = {"slice_aux": SliceAux, "mh": MhStable, "direct": DirectSlice}
TRACE_HEADER = ("iter", "K", "V", "T", "logjoint", "accept_mh", "seconds")
BUNDLED = "galaxies"


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one multi-chain run."""

    family: str = "pitman_yor"
    sigma: float = 0.5
    theta: float = 10.0
    tau: float = 1.0
    a: float = 1.0
    b: float = 2.0
    mu0: float | None = None
    sigma0_sq: float | None = None
    sigma1_sq: float = 0.5
    iterations: int = 30000
    burn_in: int = 10000
    chains: int = 10
    workers: int = 0
    seed: int = 0
    variant: str | None = None
    lam: float | None = None
    n_pool: int = 3
    pool_refresh: str = "per_obs"
    scan_order: str = "fixed"
    param_update: str = "conjugate"
    surplus_width: float = 1.0
    weight_width: float = 1.0
    z_width: float = 0.1
    max_steps: int = 32
    grid: int = 512
    data: str = BUNDLED
    scale: float = 1000.0
    out: str = "pk_out"
    record_timing: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.variant is not None and self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {tuple(VARIANTS)}")
        if self.chains < 1:
            raise ConfigurationError("chains must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError("need 0 <= burn_in < iterations")
        if self.workers < 0:
            raise ConfigurationError("workers must be >= 0 (0 picks the CPU count)")
        if not self.scale > 0:
            raise ConfigurationError("scale must be positive")
        if self.iterations - self.burn_in < 100:
            raise ConfigurationError("need at least 100 post-burn-in iterations for ESS")

    @classmethod
    def from_mapping(cls, raw: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        out = {}
        for key, value in raw.items():
            out[key] = _coerce(key, value, known[key].type)
        return cls(**out)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # model objects ---------------------------------------------------------

    def prior(self):
        try:
            if self.family == "logbeta":
                return LogBetaPrior(LogBetaParams(self.a, self.b))
            tilt = {
                "pitman_yor": lambda: PitmanYor(self.theta),
                "normalized_stable": NormalizedStable,
                "ngg": lambda: NGG(self.tau),
            }[self.family]()
            return StablePrior(SigmaStableParams(self.sigma), tilt)
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc

    def sampler_variant(self, prior):
        if self.variant is None:
            v = default_variant(prior)
            if isinstance(v, MhStable):
                return MhStable(self.mh_lambda(prior))
            return v
        if self.variant == "mh":
            if not isinstance(prior, StablePrior):
                raise ConfigurationError("mh requires a sigma-stable prior")
            return MhStable(self.mh_lambda(prior))
        return VARIANTS[self.variant]()

    def mh_lambda(self, prior) -> float:
        return default_mh_lambda(prior.sigma) if self.lam is None else float(self.lam)

    def settings(self) -> SweepSettings:
        return SweepSettings(
            n_pool=self.n_pool, pool_refresh=self.pool_refresh, scan_order=self.scan_order,
            param_update=self.param_update, surplus_width=self.surplus_width,
            weight_width=self.weight_width, z_width=self.z_width, max_steps=self.max_steps,
            grid=self.grid,
        )

    def likelihood(self, x) -> NormalLikelihood:
        base = NormalLikelihood.from_data(x, self.sigma1_sq)
        try:
            return NormalLikelihood(
                base.mu0 if self.mu0 is None else self.mu0,
                base.sigma0_sq if self.sigma0_sq is None else self.sigma0_sq,
                self.sigma1_sq,
            )
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc


def _coerce(key, value, annot):
    annot = str(annot)
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
        if "None" in annot:
            return None
        raise ConfigurationError(f"{key} may not be empty")
    try:
        if annot.startswith("bool"):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                return value.lower() in ("true", "1")
            return bool(value)
        if annot.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if annot.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"bad value for {key}: {value!r}") from None


def load_config(path: str | None, overrides=()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config {path}: {exc}") from exc
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigurationError(f"config must be flat; found tables {nested}")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"override must look like key=value: {item!r}")
        raw[key.strip()] = value.strip()
    return RunConfig.from_mapping(raw)


# ---------------------------------------------------------------------------- data


def load_dataset(path: str = BUNDLED, scale: float = 1000.0) -> np.ndarray:
    """One number per line; an optional non-numeric header line is skipped.

    ``path='galaxies'`` reads the bundled galaxy velocities.  Values are
    divided by ``scale``.
    """
    if path == BUNDLED:
        text = files("pkhybrid").joinpath("data/galaxies.txt").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            val = float(s)
        except ValueError:
            if not values and lineno == _first_content_line(text):
                continue  # header
            raise DataError(f"{path}: line {lineno}: not a number: {s!r}") from None
        if not math.isfinite(val):
            raise DataError(f"{path}: line {lineno}: non-finite value {s!r}")
        values.append(val / scale)
    if not values:
        raise DataError(f"{path}: no data values")
    return np.asarray(values)


def _first_content_line(text) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip() and not line.strip().startswith("#"):
            return i
    return 0


# ---------------------------------------------------------------------------- chains


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def trace_csv(records: list[TraceRecord], record_timing: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in records:
        w.writerow([
            r.iteration, r.K, _fmt(r.surplus), _fmt(r.total), _fmt(r.log_joint),
            _fmt(r.accept_mh), _fmt(r.seconds if record_timing else 0.0),
        ])
    return buf.getvalue()


def run_chain(cfg: RunConfig, x, seed_seq) -> tuple[list[TraceRecord], float]:
    prior = cfg.prior()
    sampler = HybridSampler(prior, cfg.likelihood(x), cfg.sampler_variant(prior), cfg.settings())
    rng = np.random.default_rng(seed_seq)
    t0 = time.perf_counter()
    _, records = sampler.run(x, cfg.iterations, rng, burn_in=cfg.burn_in)
    return records, time.perf_counter() - t0


def _chain_job(args):
    cfg, x, seed_seq = args
    return run_chain(cfg, x, seed_seq)


def run_experiment(cfg: RunConfig, x=None, log=print) -> dict:
    """Run all chains, write traces, ``summary.csv`` and ``report.txt``; return the summary."""
    prior = cfg.prior()  # fail fast on bad parameters
    check_compatible(prior, cfg.sampler_variant(prior))
    cfg.settings()
    x = load_dataset(cfg.data, cfg.scale) if x is None else np.asarray(x, dtype=float)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    workers = cfg.workers or (os.cpu_count() or 1)
    workers = min(workers, cfg.chains)
    jobs = [(cfg, x, s) for s in seeds]
    log(f"running {cfg.chains} chain(s) of {cfg.iterations} sweeps on n={x.shape[0]} "
        f"({cfg.family}, {workers} worker(s))")
    if workers == 1:
        results = []
        for k, job in enumerate(jobs):
            results.append(_chain_job(job))
            log(f"  chain {k}: {results[-1][1]:.1f}s")
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_chain_job, jobs))

    rows = []
    for k, (records, seconds) in enumerate(results):
        _write_atomic(out / f"chain_{k}.csv", trace_csv(records, cfg.record_timing))
        s = dg.summarize_chain(records)
        s.update(chain=k, seconds=seconds)
        rows.append(s)
    cols = ("chain", "mean_K", "ess_K", "ess_T", "accept_mh", "seconds")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    _write_atomic(out / "summary.csv", buf.getvalue())
    report = format_report(cfg, x.shape[0], rows)
    _write_atomic(out / "report.txt", report)
    log(report)
    return {"chains": rows, "report": report}


def format_report(cfg: RunConfig, n: int, rows: list[dict]) -> str:
    prior = cfg.prior()
    variant = cfg.sampler_variant(prior)
    label = variant.name + (f" (lambda={variant.lam:g})" if isinstance(variant, MhStable) else "")
    def ms(key):
        v = np.array([r[key] for r in rows], dtype=float)
        if np.all(np.isnan(v)):
            return "n/a"
        return f"{np.nanmean(v):.3f} (+-{np.nanstd(v):.3f})"
    lines = [
        f"prior: {prior.name} {_prior_args(cfg)}",
        f"sampler: {label}, M={cfg.n_pool}, pool_refresh={cfg.pool_refresh}",
        f"data: {cfg.data} (n={n}, scale 1/{cfg.scale:g})",
        f"iterations: {cfg.iterations}, burn-in: {cfg.burn_in}, chains: {cfg.chains}, seed: {cfg.seed}",
        "",
        f"{'running time (s)':<22}{ms('seconds')}",
        f"{'ESS of K':<22}{ms('ess_K')}",
        f"{'ESS of T':<22}{ms('ess_T')}",
        f"{'mean K':<22}{ms('mean_K')}",
        f"{'MH acceptance':<22}{ms('accept_mh')}",
    ]
    return "\n".join(lines) + "\n"


def _prior_args(cfg: RunConfig) -> str:
    if cfg.family == "logbeta":
        return f"a={cfg.a:g} b={cfg.b:g}"
    extra = {"pitman_yor": f" theta={cfg.theta:g}", "ngg": f" tau={cfg.tau:g}"}.get(cfg.family, "")
    return f"sigma={cfg.sigma:g}{extra}"


# ---------------------------------------------------------------------- prior check


def eppf_check(theta: float, sigma: float, n: int, sweeps: int, rng, n_forward: int | None = None,
               k_se: float = 3.0) -> tuple[bool, str]:
    """Partition frequencies of a prior-only chain and of forward draws vs the PY EPPF."""
    prior = StablePrior(SigmaStableParams(sigma), PitmanYor(theta))
    parts = dg.set_partitions(n)
    exact = {p: dg.py_eppf(np.bincount(p), theta, sigma) for p in parts}

    sampler = HybridSampler(prior, FlatLikelihood())
    chain = []
    state = sampler.initial_state(np.zeros(n), rng)
    for it in range(sweeps):
        state, _ = sampler.sweep(state, rng, it, log_joint=False)
        chain.append(dg.canonical_labels(state.labels))
    fwd = [dg.canonical_labels(dg.forward_generate(prior, n, rng).labels)
           for _ in range(n_forward or sweeps)]

    ok = True
    lines = [f"{'partition':<12}{'EPPF':>10}{'chain':>10}{'z':>7}{'forward':>10}{'z':>7}"]
    for p in parts:
        row = [f"{str(p):<12}{exact[p]:>10.5f}"]
        for series, autocorr in ((chain, True), (fwd, False)):
            ind = np.array([q == p for q in series], dtype=float)
            freq = ind.mean()
            n_eff = dg.ess(ind).ess if autocorr else ind.shape[0]
            se = math.sqrt(exact[p] * (1 - exact[p]) / n_eff)
            z = (freq - exact[p]) / se
            ok &= abs(z) < k_se
            row.append(f"{freq:>10.5f}{z:>7.2f}")
        lines.append("".join(row))
    lines.append(f"PY(theta={theta:g}, sigma={sigma:g}), n={n}: " + ("PASS" if ok else "FAIL"))
    return ok, "\n".join(lines)


# --------------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pk", description="Hybrid MCMC for Poisson-Kingman mixtures.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run chains from a config file")
    r.add_argument("--config", help="flat TOML config file")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--chains", type=int)
    r.add_argument("--iterations", type=int)
    r.add_argument("--burn-in", type=int)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")

    c = sub.add_parser("prior-check", help="reproduce the Pitman-Yor EPPF with prior-only chains")
    c.add_argument("--theta", type=float, default=10.0)
    c.add_argument("--sigma", type=float, default=0.5)
    c.add_argument("--n", type=int, nargs="+", default=[2, 3])
    c.add_argument("--sweeps", type=int, default=100000)
    c.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("geweke", help="marginal vs successive conditional joint test")
    g.add_argument("--family", choices=FAMILIES, default="normalized_stable")
    g.add_argument("--sigma", type=float, default=0.5)
    g.add_argument("--theta", type=float, default=10.0)
    g.add_argument("--tau", type=float, default=1.0)
    g.add_argument("--a", type=float, default=1.0)
    g.add_argument("--b", type=float, default=2.0)
    g.add_argument("--variant", choices=tuple(VARIANTS))
    g.add_argument("--lam", type=float)
    g.add_argument("--n-obs", type=int, default=8)
    g.add_argument("--sweeps", type=int, default=20000)
    g.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("ess", help="effective sample sizes of an existing trace CSV")
    e.add_argument("trace")
    e.add_argument("--columns", nargs="+", default=["K", "T"])
    return p


def _cmd_run(args) -> int:
    overrides = list(args.set)
    for key in ("seed", "out", "chains", "iterations"):
        if getattr(args, key) is not None:
            overrides.append(f"{key}={getattr(args, key)}")
    if args.burn_in is not None:
        overrides.append(f"burn_in={args.burn_in}")
    cfg = load_config(args.config, overrides)
    run_experiment(cfg)
    return EXIT_OK


def _cmd_prior_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    for n in args.n:
        if not 1 <= n <= 6:
            raise ConfigurationError("prior-check enumerates partitions; use 1 <= n <= 6")
        passed, table = eppf_check(args.theta, args.sigma, n, args.sweeps, rng)
        print(table)
        ok &= passed
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _cmd_geweke(args) -> int:
    cfg = RunConfig(family=args.family, sigma=args.sigma, theta=args.theta, tau=args.tau,
                    a=args.a, b=args.b, variant=args.variant, lam=args.lam)
    prior = cfg.prior()
    lik = NormalLikelihood(0.0, 1.0, 0.5)
    report = dg.geweke_test(prior, lik, args.n_obs, args.sweeps, np.random.default_rng(args.seed),
                            cfg.sampler_variant(prior))
    print(report.table())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_ess(args) -> int:
    try:
        with open(args.trace, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {args.trace}: {exc}") from exc
    if not rows:
        raise DataError(f"{args.trace}: no rows")
    for col in args.columns:
        if col not in rows[0]:
            raise DataError(f"{args.trace}: no column {col!r}")
        try:
            series = np.array([float(r[col]) for r in rows])
        except ValueError as exc:
            raise DataError(f"{args.trace}: column {col}: {exc}") from exc
        rep = dg.ess(series, col)
        flag = " (degenerate)" if rep.degenerate else ""
        print(f"{col}: n={rep.n} ess={rep.ess:.1f} cutoff_lag={rep.cutoff_lag}{flag}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "prior-check": _cmd_prior_check,
               "geweke": _cmd_geweke, "ess": _cmd_ess}[args.cmd]
    try:
        return handler(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"pk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"pk: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PKError, ArithmeticError) as exc:
        print(f"pk: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

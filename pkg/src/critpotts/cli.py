"""
Command-line experiment runner.

Usage::

    critpotts <experiment> [--config FILE] [--key value ...]

The config file is flat ``key=value`` text (``#`` starts a comment); flags
override file keys. ``seed`` is mandatory for every stochastic experiment.
Outputs go to ``out`` (default ``results``) as CSV with ``# key=value``
metadata lines ahead of the header row, PPM images, or a text report.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coupling, observables, spectral
from .connectivity import label_clusters
from .dynamics import swendsen_wang_step
from .io import build_id, write_csv, write_ppm
from .lattice import Rect, Topology, build_lattice
from .model import FKBoundary, Params, PottsBoundary, critical_point

log = logging.getLogger("critpotts")

EXPERIMENTS = ("mixing-scaling", "bottleneck", "crossing", "one-arm", "two-point",
               "sw-trace", "snapshot", "verify")
STOCHASTIC = set(EXPERIMENTS) - {"verify"}
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

def parse_config_text(text: str) -> dict:
    out = {}
    for k, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {k}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip().replace("_", "-")] = val.strip()
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"missing required key {key!r}")
        return self.values[key]

    def int(self, key, default=None) -> int:
        v = self.get(key, default)
        if v is None:
            raise ConfigError(f"missing required key {key!r}")
        return int(v)

    def float(self, key, default=None) -> float:
        v = self.get(key, default)
        if v is None:
            raise ConfigError(f"missing required key {key!r}")
        return float(v)

    def ints(self, key, default=None) -> list[int]:
        v = self.get(key, default)
        if v is None:
            raise ConfigError(f"missing required key {key!r}")
        return [int(x) for x in str(v).split(",") if x.strip()]

    @property
    def seed(self) -> int:
        return int(self.require("seed"))

    @property
    def out(self) -> Path:
        return Path(self.get("out", "results"))

    @property
    def threads(self) -> int:
        return int(self.get("threads", 1))

    @property
    def budget(self) -> float:
        return float(self.get("budget", math.inf))

    def params(self) -> Params:
        """``q`` plus ``p`` (number or ``critical``) or ``beta``."""
        q = self.float("q")
        if "beta" in self.values and "p" in self.values:
            raise ConfigError("give p or beta, not both")
        if "beta" in self.values:
            b = self.values["beta"]
            return Params.critical(q) if b == "critical" else Params.from_beta(q, float(b))
        p = self.get("p", "critical")
        return Params.critical(q) if p == "critical" else Params(q, float(p))

    def meta(self, params: Params | None, **extra) -> dict:
        m = {"experiment": self.experiment, "build": build_id()}
        if params is not None:
            m.update(q=repr(params.q), p=repr(params.p), beta=repr(params.beta))
        if self.experiment in STOCHASTIC:
            m["seed"] = self.seed
        m.update(extra)
        return m


class Budget:
    """Soft wall-clock limit, checked between units of work."""

    def __init__(self, seconds: float):
        self.seconds = seconds
        self.t0 = time.monotonic()
        self.exceeded = False

    def check(self) -> bool:
        if time.monotonic() - self.t0 > self.seconds:
            self.exceeded = True
        return not self.exceeded


# --------------------------------------------------------------------------
# experiments

def _fk_bc(cfg: ExperimentConfig, n: int, n_prime: int | None = None) -> FKBoundary:
    m = n if n_prime is None else n_prime
    bc = cfg.get("bc", "free")
    if bc in ("torus", "periodic"):
        return FKBoundary.periodic_bc(build_lattice(n, m, Topology.TORUS))
    lat = build_lattice(n, m)
    if bc == "free":
        return FKBoundary.free(lat)
    if bc == "wired":
        return FKBoundary.wired(lat)
    raise ConfigError(f"bc {bc!r} is not valid here (choose free, wired or torus)")


def _settings(cfg) -> observables.SamplerSettings:
    return observables.SamplerSettings(cfg.int("burn-in", 200), cfg.int("thin", 5),
                                       cfg.int("per-replica", 20))


def run_mixing_scaling(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    sizes = cfg.ints("sizes", "8,16,32")
    family = cfg.get("bc", "torus")
    if family == "periodic":
        family = "torus"
    replicas = cfg.int("replicas", 10)
    t_max = cfg.float("t-max", 1e5)
    rows = []
    partial = False
    for n in sizes:
        if not budget.check():
            partial = True
            break
        tab = coupling.coupling_time_scaling([n], family, params, replicas, cfg.seed, t_max,
                                             cfg.threads)
        rows.extend(tab.rows)
    table = coupling.ScalingTable(rows, family, t_max)
    meta = cfg.meta(params, bc=family, t_max=t_max, replicas=replicas, partial=partial)
    out = cfg.out
    write_csv(out / "mixing_scaling.csv", ["n", "seed", "coalesce_sweeps", "censored"],
              [(n, s, t, "true" if c else "false") for n, s, t, c in table.rows], meta)
    write_csv(out / "mixing_scaling_summary.csv", ["n", "median", "q25", "q75", "censored"],
              table.aggregate(), dict(meta, monotone=table.monotone()))
    return EXIT_PARTIAL if partial else EXIT_OK


def run_bottleneck(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    rows = []
    partial = False
    for n in cfg.ints("sizes", cfg.get("n", "9,18")):
        if not budget.check():
            partial = True
            break
        r = observables.estimate_conductance_bottleneck(params, n, cfg.int("replicas", 8),
                                                        cfg.seed, _settings(cfg))
        c = r.boundary_given_S
        cond = (c.value, c.lo, c.hi) if c else ("NoData", "", "")
        rows.append((n, r.samples, r.pi_S.value, r.pi_S.lo, r.pi_S.hi, r.in_S, *cond))
    write_csv(cfg.out / "bottleneck.csv",
              ["n", "samples", "pi_S", "pi_S_lo", "pi_S_hi", "in_S", "boundary_given_S",
               "ci_lo", "ci_hi"], rows, cfg.meta(params, partial=partial))
    return EXIT_PARTIAL if partial else EXIT_OK


def run_crossing(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    n = cfg.int("n", 64)
    m = cfg.int("n-prime", n)
    bc = _fk_bc(cfg, n, m)
    lat = bc.lattice
    mode = cfg.get("mode", observables.INTERIOR)
    preset = cfg.get("preset", "box")
    if preset == "box":
        R = lat.full_rect()
        events = [observables.StitchEvent("C_h", "horizontal", R),
                  observables.StitchEvent("C_v", "vertical", R)]
    elif preset == "stitched":
        events = observables.stitching_preset(n, m, cfg.float("eps", 0.1),
                                              cfg.float("delta", 0.25))
    else:
        raise ConfigError(f"unknown crossing preset {preset!r}")
    hits = np.zeros(len(events), dtype=np.int64)
    total = 0
    partial = False
    for omega in observables.fk_samples(bc, params, cfg.int("replicas", 10), cfg.seed,
                                        _settings(cfg)):
        if not budget.check():
            partial = True
            break
        for i, ev in enumerate(events):
            hits[i] += observables.stitch_event_holds(omega, ev, lat, mode)
        total += 1
    rows = []
    for ev, h in zip(events, hits):
        e = observables.Estimate.of(int(h), total) if total else None
        rows.append((ev.name, ev.kind, str(ev.region), total,
                     *((e.value, e.lo, e.hi) if e else ("", "", ""))))
    write_csv(cfg.out / "crossing.csv", ["event", "kind", "region", "samples", "frequency",
                                         "ci_lo", "ci_hi"], rows,
              cfg.meta(params, n=n, n_prime=m, bc=bc.describe(), mode=mode, partial=partial))
    return EXIT_PARTIAL if partial else EXIT_OK


def run_one_arm(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    rows = []
    partial = False
    for n in cfg.ints("sizes", "8,16,32"):
        if not budget.check():
            partial = True
            break
        e = observables.one_arm_probability(params, n, cfg.get("bc", "free"),
                                            cfg.int("replicas", 10), cfg.seed, _settings(cfg))
        rows.append((n, e.value, e.lo, e.hi, e.trials))
    write_csv(cfg.out / "one_arm.csv", ["n", "probability", "ci_lo", "ci_hi", "samples"],
              rows, cfg.meta(params, partial=partial))
    return EXIT_PARTIAL if partial else EXIT_OK


def run_two_point(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    n = cfg.int("n", 32)
    eps = cfg.float("eps", 0.25)
    c = n // 2
    lo = int(math.ceil(eps * n))
    pairs = [((lo, c), (lo + d, c)) for d in range(0, n - 2 * lo + 1)]
    res = observables.two_point_correlation(params, n, cfg.get("bc", "free"), pairs,
                                            cfg.int("replicas", 10), cfg.seed, eps,
                                            _settings(cfg))
    rows = [(a[0], a[1], b[0], b[1], b[0] - a[0], e.value, e.lo, e.hi, e.trials)
            for (a, b), e in res]
    write_csv(cfg.out / "two_point.csv",
              ["x1", "y1", "x2", "y2", "distance", "frequency", "ci_lo", "ci_hi", "samples"],
              rows, cfg.meta(params, n=n, eps=eps))
    return EXIT_OK


def sw_trace(params: Params, n: int, sweeps: int, seed: int, periodic: bool,
             color: int = 1) -> np.ndarray:
    """Largest FK cluster fraction of the bond step of each SW sweep, started
    from the monochromatic configuration ``color``."""
    lat = build_lattice(n, n, Topology.TORUS if periodic else Topology.BOX)
    bc = PottsBoundary.periodic_bc(lat) if periodic else PottsBoundary.free(lat)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(periodic)])))
    sigma = bc.constant_config(color)
    fk = bc.to_fk()
    out = np.empty(sweeps)
    for t in range(sweeps):
        _, bonds = swendsen_wang_step(sigma, bc, params, rng, return_bonds=True)
        out[t] = label_clusters(bonds, fk).largest_fraction
    return out


def run_sw_trace(cfg: ExperimentConfig, budget: Budget) -> int:
    params = cfg.params()
    n = cfg.int("n", 64)
    sweeps = cfg.int("sweeps", 3000)
    for periodic, name in ((False, "free"), (True, "periodic")):
        tr = sw_trace(params, n, sweeps, cfg.seed, periodic)
        write_csv(cfg.out / f"sw_trace_{name}.csv", ["sweep", "largest_fraction"],
                  [(t + 1, float(x)) for t, x in enumerate(tr)],
                  cfg.meta(params, n=n, bc=name, sweeps=sweeps, start="monochromatic"))
    return EXIT_OK


PALETTE = np.array([[0, 0, 0], [214, 39, 40], [31, 119, 180], [44, 160, 44], [255, 127, 14],
                    [148, 103, 189], [140, 86, 75], [227, 119, 194], [127, 127, 127],
                    [188, 189, 34], [23, 190, 207]], dtype=np.uint8)


def render(sigma: np.ndarray, bonds: np.ndarray, lat, scale: int = 4) -> np.ndarray:
    """RGB image of a spin configuration, one ``scale x scale`` cell per site,
    with dark lines between neighbouring sites in different FK clusters."""
    W, H = lat.cols, lat.rows
    q_colors = PALETTE[1:]
    img = q_colors[(sigma - 1) % len(q_colors)].reshape(H, W, 3)
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    lab = label_clusters(bonds, None, lattice=lat).labels.reshape(H, W)
    dark = np.array([20, 20, 20], dtype=np.uint8)
    # rows go top to bottom in the image, so flip y
    img = img[::-1].copy()
    lab = lab[::-1]
    cut_x = lab[:, 1:] != lab[:, :-1]
    cut_y = lab[1:, :] != lab[:-1, :]
    for y, x in zip(*np.nonzero(cut_x)):
        img[y * scale:(y + 1) * scale, (x + 1) * scale - 1] = dark
    for y, x in zip(*np.nonzero(cut_y)):
        img[(y + 1) * scale - 1, x * scale:(x + 1) * scale] = dark
    return img


def run_snapshot(cfg: ExperimentConfig, budget: Budget) -> int:
    qs = cfg.ints("qs", cfg.get("q", "3,4,5"))
    n = cfg.int("n", 64)
    sweeps = cfg.int("sweeps", 500)
    periodic = cfg.get("bc", "torus") in ("torus", "periodic")
    for q in qs:
        params = Params.critical(float(q))
        lat = build_lattice(n, n, Topology.TORUS if periodic else Topology.BOX)
        bc = PottsBoundary.periodic_bc(lat) if periodic else PottsBoundary.free(lat)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, q])))
        sigma = rng.integers(1, q + 1, size=lat.num_vertices).astype(np.int64)
        bonds = None
        for _ in range(sweeps):
            _, bonds = swendsen_wang_step(sigma, bc, params, rng, return_bonds=True)
        img = render(sigma, bonds, lat, cfg.int("scale", 4))
        meta = cfg.meta(params, n=n, bc="periodic" if periodic else "free", sweeps=sweeps)
        meta.pop("experiment")
        write_ppm(cfg.out / f"snapshot_q{q}.ppm", img,
                  [f"{k}={v}" for k, v in meta.items()])
    return EXIT_OK


def verify_report(instances=None):
    """Spectral and inequality checks on the default tiny instance set.

    Returns ``(ok, lines)``.
    """
    if instances is None:
        instances = []
        for q in (2, 3):
            instances.append(("K2", PottsBoundary.free(build_lattice(1, 0)), Params.critical(q)))
            instances.append(("1x2", PottsBoundary.free(build_lattice(1, 2)), Params.critical(q)))
        instances.append(("2x2", PottsBoundary.free(build_lattice(2, 2)), Params.critical(2)))
    ok = True
    lines = []
    for name, bc, params in instances:
        fk = bc.to_fk()
        for tag, b in ((spectral.POTTS_GLAUBER, bc), (spectral.FK_GLAUBER, fk),
                       (spectral.SW, bc), (spectral.CM, fk)):
            try:
                space, K = spectral.enumerate_kernel(tag, b, params)
            except spectral.StateSpaceTooLarge as exc:
                lines.append(f"skip {name} q={params.q:g} {tag}: {exc}")
                continue
            ch = spectral.kernel_checks(K, space.pi)
            gap, gap_star = spectral.spectral_gap(K, space.pi)
            dg = spectral.dirichlet_gap(K, space.pi)
            good = (ch.row_sum_error < 1e-12 and ch.reversibility_residual < 1e-10
                    and ch.stationarity_residual < 1e-10 and abs(gap - dg) < 1e-10)
            line = (f"{'ok  ' if good else 'FAIL'} {name} q={params.q:g} {tag}: |states|={K.size} "
                    f"gap={gap:.10g} gap*={gap_star:.10g} |gap-dirichlet|={abs(gap - dg):.2e} "
                    f"rowsum={ch.row_sum_error:.1e} rev={ch.reversibility_residual:.1e}")
            if K.size <= spectral.MIXING_CAP and gap_star > 0:
                br = spectral.mixing_bracket(K, space.pi)
                good &= br.holds
                line += f" tmix={br.t_mix} in [{br.lower:.4g}, {br.upper:.4g}]"
            ok &= good
            lines.append(line)
        rep = spectral.check_ullrich(bc, params)
        ok &= rep.holds
        lines.extend(f"{('ok  ' if rep.holds else 'FAIL')} {name} q={params.q:g} ullrich {ln}"
                     for ln in rep.lines())
    return ok, lines


def run_verify(cfg: ExperimentConfig, budget: Budget) -> int:
    ok, lines = verify_report()
    text = "\n".join([f"# build={build_id()}", *lines, "PASS" if ok else "FAIL"]) + "\n"
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "verify.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_FAIL


RUNNERS = {
    "mixing-scaling": run_mixing_scaling,
    "bottleneck": run_bottleneck,
    "crossing": run_crossing,
    "one-arm": run_one_arm,
    "two-point": run_two_point,
    "sw-trace": run_sw_trace,
    "snapshot": run_snapshot,
    "verify": run_verify,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    if cfg.experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; choose from {EXPERIMENTS}")
    if cfg.experiment in STOCHASTIC:
        cfg.require("seed")
    if "q" in cfg.values and cfg.experiment != "snapshot":
        critical_point(float(cfg.values["q"]))  # validates q
    return RUNNERS[cfg.experiment](cfg, Budget(cfg.budget))


def _split_overrides(tokens: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"flag {tok} needs a value")
            val = tokens[i + 1]
            i += 2
        out[key.replace("_", "-")] = val
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="critpotts", description=__doc__.split("\n\n")[0],
                                 epilog="experiments: " + ", ".join(EXPERIMENTS))
    ap.add_argument("experiment")
    ap.add_argument("--config", help="key=value file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args, rest = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        values = parse_config_text(Path(args.config).read_text()) if args.config else {}
        values.update(_split_overrides(rest))
        cfg = ExperimentConfig(args.experiment, values)
        status = run_experiment(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"critpotts: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if status == EXIT_PARTIAL:
        print("critpotts: time budget exceeded; results are partial", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())

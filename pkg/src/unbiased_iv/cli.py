"""Command-line interface.

``estimate``  fit ``(xi, sigma)`` from a CSV file and report the estimators.
``simulate``  single-instrument (or multi-instrument) Monte Carlo tables.
``grid``      the default desk-scale single-instrument grid.
``bound``     risk lower bound next to the MAD of unbiased estimators.

Exit status: 0 on success, 2 for input errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, simulation as sim
from .core import (
    ar_confidence_set,
    beta_fuller,
    beta_u,
    first_stage_f,
)
from .covariance import IvDataset, fit_dataset, sign_calibrate
from .exceptions import ConditioningError, DataError, DegenerateError, DomainError
from .multi import (
    DEFAULT_S_DATA,
    DEFAULT_S_SIMULATION,
    WeightSpec,
    beta_2sls_multi,
    beta_rb_c,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

SCHEMA_SINGLE = "unbiased_iv.single/1"
SCHEMA_MULTI = "unbiased_iv.multi/1"
SCHEMA_BOUND = "unbiased_iv.bound/1"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    input_path: Path | None
    seed: int
    s_draws: int | None
    draws: int | None
    c: float
    weight: str
    level: float
    output_path: Path | None
    cluster_col: str | None
    intercept: bool
    workers: int = 1
    pi_values: tuple[float, ...] = ()
    sigma12_values: tuple[float, ...] = ()
    expected_f: tuple[float, ...] = ()
    design: str = "single"
    first_stage_sign: int = 1


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None, help="output file (estimate) or directory")
    common.add_argument("--zeta-draws", type=int, default=None, help="split-sample draws S")
    common.add_argument("--c", type=float, default=0.5, help="robust-transform constant in [0, 1)")
    common.add_argument("--weight", default="zgram", help="zgram | gmm2 | fixed:w1,w2,...")
    common.add_argument("--level", type=float, default=0.95)
    common.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="unbiased-iv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="estimate from a CSV file")
    e.add_argument("--input", type=Path, required=True)
    e.add_argument("--cluster-col", default=None, help="cluster column (default: 'cluster' if present)")
    e.add_argument("--no-intercept", action="store_true")

    for name, hlp in (("simulate", "Monte Carlo tables"), ("grid", "default single-instrument grid")):
        s = sub.add_parser(name, parents=[common], help=hlp)
        s.add_argument("--draws", type=int, default=None)
        s.add_argument("--design", choices=("single", "multi"), default="single")
        s.add_argument("--pi", type=_floats, default=None, help="pi values (single design)")
        s.add_argument("--sigma12", type=_floats, default=None, help="sigma12 / sigma_uv values")
        s.add_argument("--expected-f", type=_floats, default=None, help="E[F] values (multi design)")

    b = sub.add_parser("bound", parents=[common], help="risk lower bound table")
    b.add_argument("--draws", type=int, default=None)
    b.add_argument("--design", choices=("single", "multi"), default="multi")
    b.add_argument("--pi", type=_floats, default=None)
    b.add_argument("--sigma12", type=_floats, default=None)
    b.add_argument("--expected-f", type=_floats, default=None)
    b.add_argument("--input", type=Path, default=None, help="take Z'Z and the direction from data")
    b.add_argument("--first-stage-sign", type=int, choices=(-1, 1), default=1)
    b.add_argument("--cluster-col", default=None)
    b.add_argument("--no-intercept", action="store_true")
    return p


def _config(ns) -> RunConfig:
    cfg = RunConfig(
        command=ns.command,
        input_path=getattr(ns, "input", None),
        seed=ns.seed,
        s_draws=ns.zeta_draws,
        draws=getattr(ns, "draws", None),
        c=ns.c,
        weight=ns.weight,
        level=ns.level,
        output_path=ns.out,
        cluster_col=getattr(ns, "cluster_col", None),
        intercept=not getattr(ns, "no_intercept", False),
        workers=ns.workers,
        pi_values=getattr(ns, "pi", None) or (),
        sigma12_values=getattr(ns, "sigma12", None) or (),
        expected_f=getattr(ns, "expected_f", None) or (),
        design=getattr(ns, "design", "single"),
        first_stage_sign=getattr(ns, "first_stage_sign", 1),
    )
    if not 0.0 < cfg.level < 1.0:
        raise UsageError("--level must lie in (0, 1)")
    if not 0.0 <= cfg.c < 1.0:
        raise UsageError("--c must lie in [0, 1)")
    if cfg.s_draws is not None and cfg.s_draws < 2:
        raise UsageError("--zeta-draws must be at least 2")
    if cfg.draws is not None and cfg.draws < 1:
        raise UsageError("--draws must be positive")
    if cfg.workers < 1:
        raise UsageError("--workers must be positive")
    _weight_spec(cfg.weight, None)
    if cfg.command in ("simulate", "grid", "bound") and cfg.output_path is None:
        raise UsageError(f"{cfg.command} needs --out DIR")
    return cfg


def _weight_spec(text: str, k: int | None) -> WeightSpec:
    if text == "zgram":
        return WeightSpec.quadratic()
    if text == "gmm2":
        return WeightSpec.gmm_two_step()
    if text.startswith("fixed:"):
        try:
            w = [float(v) for v in text[6:].split(",")]
        except ValueError as exc:
            raise UsageError(f"bad fixed weights {text!r}") from exc
        if k is not None and len(w) != k:
            raise UsageError(f"--weight fixed needs {k} weights, got {len(w)}")
        try:
            return WeightSpec.fixed(w)
        except DomainError as exc:
            raise UsageError(str(exc)) from exc
    raise UsageError(f"unknown --weight {text!r}; use zgram, gmm2 or fixed:w1,...")


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _load(cfg: RunConfig) -> IvDataset:
    col = cfg.cluster_col if cfg.cluster_col is not None else "cluster"
    ds = IvDataset.from_csv(cfg.input_path, add_intercept=cfg.intercept, cluster_col=col)
    if cfg.cluster_col is not None and ds.cluster_ids is None:
        raise DataError(f"missing cluster column '{cfg.cluster_col}'")
    return ds


def _finite(v):
    return None if v is None or not math.isfinite(v) else v


def run_estimate(cfg: RunConfig) -> dict:
    ds = _load(cfg)
    fit = fit_dataset(ds)
    st = fit.stats
    k = st.k
    z_gram = fit.z_res.T @ fit.z_res
    rep = {
        "n_obs": ds.n_obs,
        "k": k,
        "instruments": list(ds.z_names),
        "controls": list(ds.control_names),
        "covariance": "cluster" if ds.cluster_ids is not None else "robust",
        "xi1": st.xi1.tolist(),
        "xi2": st.xi2.tolist(),
        "sigma": st.sigma.tolist(),
        "first_stage_se": np.sqrt(np.diag(st.sigma22)).tolist(),
        "first_stage_f": first_stage_f(st),
        "beta_2sls": beta_2sls_multi(st, z_gram),
    }
    if k == 1:
        blk = st.block(0)
        ar = ar_confidence_set(blk, cfg.level)
        rep.update(
            beta_fuller=beta_fuller(blk),
            beta_u=beta_u(blk),
            ar_set={"kind": ar.kind, "lower": _finite(ar.lower), "upper": _finite(ar.upper),
                    "level": cfg.level, "text": str(ar)},
        )
    else:
        s = cfg.s_draws or DEFAULT_S_DATA
        spec = _weight_spec(cfg.weight, k)
        rb = beta_rb_c(st, z_gram, cfg.c, spec, s, cfg.seed, workers=cfg.workers)
        rep.update(
            beta_rb_c=rb.value,
            beta_rb_c_mc_se=rb.mc_std_error,
            zeta_draws=rb.draws,
            degenerate_draws=rb.degenerate,
            c=cfg.c,
            weight=cfg.weight,
            seed=cfg.seed,
        )
    return rep


def _print_report(rep: dict, out) -> None:
    lines = [f"observations      {rep['n_obs']}", f"instruments       {rep['k']}"]
    lines.append(f"covariance        {rep['covariance']}")
    lines.append("xi1               " + " ".join(f"{v:.6g}" for v in rep["xi1"]))
    lines.append("xi2               " + " ".join(f"{v:.6g}" for v in rep["xi2"]))
    lines.append("first-stage se    " + " ".join(f"{v:.6g}" for v in rep["first_stage_se"]))
    lines.append(f"first-stage F     {rep['first_stage_f']:.6g}")
    lines.append(f"beta 2SLS         {rep['beta_2sls']:.6g}")
    if "beta_u" in rep:
        lines.append(f"beta Fuller       {rep['beta_fuller']:.6g}")
        lines.append(f"beta unbiased     {rep['beta_u']:.6g}")
        lines.append(f"AR set ({rep['ar_set']['level']:g})     {rep['ar_set']['text']}")
    else:
        lines.append(
            f"beta RB (c={rep['c']:g})    {rep['beta_rb_c']:.6g}  (MC se {rep['beta_rb_c_mc_se']:.2g}, "
            f"S={rep['zeta_draws']})"
        )
    print("\n".join(lines), file=out)


# ---------------------------------------------------------------------------
# simulate / grid / bound
# ---------------------------------------------------------------------------


def _outdir(cfg: RunConfig) -> Path:
    d = Path(cfg.output_path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def run_simulate(cfg: RunConfig) -> list[dict]:
    out = _outdir(cfg)
    if cfg.design == "single":
        grid = sim.GridSpec1(
            cfg.sigma12_values or sim.DEFAULT_SIGMA12,
            cfg.pi_values or sim.DEFAULT_PI,
        )
        draws = cfg.draws or sim.DEFAULT_DRAWS
        rows = sim.run_single_grid(grid, draws, cfg.seed, level=cfg.level, workers=cfg.workers)
        sim.write_table(out / "results.csv", rows, sim.SINGLE_COLUMNS, SCHEMA_SINGLE)
        grids = {"pi": list(grid.pi_values), "sigma12": list(grid.sigma12_values)}
    else:
        ef = cfg.expected_f or (1.5, 3.0, 10.0)
        suv = cfg.sigma12_values or (0.5,)
        design = sim.MultiDesign.stylized_quarter_of_birth(ef, suv)
        draws = cfg.draws or 10_000
        s = cfg.s_draws or DEFAULT_S_SIMULATION
        rows = sim.run_multi_design(design, draws, cfg.seed, s_draws=s, c=cfg.c, workers=cfg.workers)
        sim.write_table(out / "results.csv", rows, sim.MULTI_COLUMNS, SCHEMA_MULTI)
        grids = {"expected_f": list(ef), "sigma_uv": list(suv), "pi_direction": design.pi_direction,
                 "z_gram": design.z_gram, "zeta_draws": s, "c": cfg.c}
    manifest = [{"command": cfg.command, "design": cfg.design, "seed": cfg.seed, "draws": draws,
                 "level": cfg.level, "grids": grids, "rows": len(rows)}]
    manifest += [{"scenario": r["scenario"], "estimator": r["estimator"], "seed": r["seed"]} for r in rows]
    sim.write_manifest(out / "manifest.jsonl", manifest)
    return rows


def _design_from_data(cfg: RunConfig, ef, suv):
    ds = _load(cfg)
    fit = fit_dataset(ds)
    st = fit.stats
    se = np.sqrt(np.diag(st.sigma22))
    if cfg.first_stage_sign < 0:
        direction = -sign_calibrate(st.xi2, se)
    else:
        direction = -sign_calibrate(-st.xi2, se)
    z_gram = fit.z_res.T @ fit.z_res
    norms = tuple(sim.pi_norm_for_ef(direction, z_gram, f) for f in ef)
    return sim.MultiDesign(direction, z_gram, norms, tuple(suv))


def run_bound(cfg: RunConfig) -> list[dict]:
    out = _outdir(cfg)
    draws = cfg.draws or 20_000
    s = cfg.s_draws or DEFAULT_S_SIMULATION
    if cfg.design == "single":
        pis = cfg.pi_values or (0.5, 1.0, 2.0, 4.0)
        s12s = cfg.sigma12_values or (0.5,)
        scen = [sim.Scenario.canonical(p, r, draws) for r in s12s for p in pis]
        grids = {"pi": list(pis), "sigma12": list(s12s)}
    else:
        ef = cfg.expected_f or (1.5, 3.0, 10.0)
        suv = cfg.sigma12_values or (0.5,)
        if cfg.input_path is not None:
            design = _design_from_data(cfg, ef, suv)
        else:
            design = sim.MultiDesign.stylized_quarter_of_birth(ef, suv)
        scen = design.scenarios(draws)
        grids = {"expected_f": list(ef), "sigma_uv": list(suv), "pi_direction": design.pi_direction,
                 "z_gram": design.z_gram}
    rows = sim.run_bound_table(scen, cfg.seed, s_draws=s, c=cfg.c, workers=cfg.workers)
    sim.write_table(out / "bound.csv", rows, sim.BOUND_COLUMNS, SCHEMA_BOUND)
    manifest = [{"command": "bound", "design": cfg.design, "seed": cfg.seed, "draws": draws,
                 "zeta_draws": s, "grids": grids}]
    seeds = {r["scenario"]: r["seed"] for r in rows}
    manifest += [{"scenario": i, "pi_star": sc.pi, "seed": seeds[i]} for i, sc in enumerate(scen)]
    sim.write_manifest(out / "manifest.jsonl", manifest)
    return rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None, *, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config(ns)
        if cfg.command == "estimate":
            rep = run_estimate(cfg)
            if cfg.output_path is not None:
                Path(cfg.output_path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
            _print_report(rep, stdout)
        elif cfg.command in ("simulate", "grid"):
            rows = run_simulate(cfg)
            print(f"wrote {len(rows)} rows to {cfg.output_path}", file=stdout)
        else:
            rows = run_bound(cfg)
            print(f"wrote {len(rows)} rows to {cfg.output_path}", file=stdout)
    except UsageError as exc:
        parser.print_usage(stderr)
        print(f"error: {exc}", file=stderr)
        return EXIT_INPUT
    except (DataError, DomainError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=stderr)
        return EXIT_INPUT
    except (ConditioningError, DegenerateError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

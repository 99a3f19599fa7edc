"""Command-line front end: ``tcportfolio solve|simulate|sweep|report``.

Exit codes: 0 on success, 1 when the solver's validity check fails, 2 for
usage, configuration and I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .market import MarketError, MarketSpec, ScenarioSet, generate_scenarios, read_scenario_csv
from .optimizer import ConeConstraint, SearchConfig, ValidityError, backward_solve
from .policy import PolicyTable
from .recursion import SIDES, CoefficientTable, RiskAversionSpec, update_coefficients
from .simulate import (below_target_fraction, comparison_block, density_estimate, sharpe_ratio,
                       simulate_on, threshold_probabilities)

log = logging.getLogger("tcportfolio")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
SWEEP_PARAMS = ("gamma_plus", "gamma_minus")


class ConfigError(Exception):
    """Bad configuration or unreadable input; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    market: MarketSpec
    risk: RiskAversionSpec
    x0: float
    n_scenarios: int
    seed: int
    sampling: str
    sim_paths: int
    sim_seed: int
    sim_sampling: str
    search: SearchConfig
    cone: Optional[ConeConstraint]


def _read_toml(path: Path) -> dict:
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _per_period(value, T, name) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(T, float(arr[0]))
    if arr.shape != (T,):
        raise ConfigError(f"{name} has {arr.size} entries for a horizon of {T}")
    return arr


def _market_from(section: dict, base: Path) -> MarketSpec:
    if "file" in section:
        path = (base / section["file"]).resolve()
        loaded = _read_toml(path)
        section = {**loaded.get("market", loaded), **{k: v for k, v in section.items() if k != "file"}}
        base = path.parent
    if "riskfree" in section:
        riskfree = np.atleast_1d(np.asarray(section["riskfree"], dtype=float))
        if "horizon" in section and riskfree.size == 1:
            riskfree = np.full(int(section["horizon"]), riskfree[0])
    else:
        riskfree = np.full(int(section.get("horizon", 3)), float(section.get("rate", 1.05)))
    raw = None
    if "scenario_file" in section:
        path = (base / section["scenario_file"]).resolve()
        if not path.is_file():
            raise ConfigError(f"file not found: {path}")
        raw = read_scenario_csv(path, horizon=riskfree.size)
    return MarketSpec(riskfree=riskfree, mean=section.get("mean"), std=section.get("std"),
                      corr=section.get("corr"), assets=tuple(section.get("assets", ())),
                      moments=section.get("moments", "arithmetic"), raw_scenarios=raw)


def _cone_from(spec, n: int, base: Path) -> Optional[ConeConstraint]:
    """``spec`` is a preset name, a path to a JSON/TOML cone file, or a config table."""
    if spec is None:
        return None
    if isinstance(spec, str):
        if spec in ("none", "no_shorting", "long_only"):
            cone = ConeConstraint.preset(spec, n)
            return None if spec == "none" else cone
        path = (base / spec).resolve()
        if not path.is_file():
            raise ConfigError(f"cone file not found: {path}")
        if path.suffix == ".toml":
            data = _read_toml(path)
            data = data.get("cone", data)
        else:
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return _cone_from(data, n, path.parent)
    if "preset" in spec and "A" not in spec:
        return _cone_from(spec["preset"], n, base)
    cone = ConeConstraint.from_dict(spec)
    if cone.n_assets != n:
        raise ConfigError(f"cone matrix has {cone.n_assets} columns, market has {n} assets")
    return cone


def load_config(path) -> RunConfig:
    path = Path(path)
    raw = _read_toml(path)
    base = path.resolve().parent
    try:
        if "market" not in raw:
            raise ConfigError(f"{path}: missing [market] table")
        market = _market_from(raw["market"], base)
        T = market.horizon
        r = raw.get("risk", {})
        risk = RiskAversionSpec(_per_period(r.get("gamma_plus", 1.0), T, "gamma_plus"),
                                _per_period(r.get("gamma_minus", 1.0), T, "gamma_minus"),
                                float(r.get("target", 2.0)))
        sc = raw.get("scenarios", {})
        sim = raw.get("simulation", {})
        cfg = RunConfig(
            market=market,
            risk=risk,
            x0=float(raw.get("wealth", {}).get("x0", 1.0)),
            n_scenarios=int(sc.get("count", 20000)),
            seed=int(sc.get("seed", 2015)),
            sampling=sc.get("sampling", "moment_matched"),
            sim_paths=int(sim.get("paths", 100000)),
            sim_seed=int(sim.get("seed", 2016)),
            sim_sampling=sim.get("sampling", "plain"),
            search=SearchConfig.from_dict(raw.get("search", {})),
            cone=_cone_from(raw.get("cone"), market.n_assets, base),
        )
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: malformed configuration ({exc})") from None
    if cfg.n_scenarios < 2 or cfg.sim_paths < 2:
        raise ConfigError("scenario and path counts must be at least 2")
    return cfg


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def _ensure_dir(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _solve_scenarios(cfg: RunConfig) -> ScenarioSet:
    return generate_scenarios(cfg.market, cfg.n_scenarios, cfg.seed, sampling=cfg.sampling)


def cmd_solve(cfg: RunConfig, out) -> int:
    out = _ensure_dir(out)
    sc = _solve_scenarios(cfg)
    policy, coeffs, diag = backward_solve(cfg.market, cfg.risk, sc, cfg.search, cfg.cone)
    policy.save(out / "policy.json")
    _write_json(out / "coefficients.json", coeffs.to_dict())
    diag = {**diag, "n_scenarios": sc.size, "seed": sc.seed, "sampling": sc.sampling,
            "assets": list(cfg.market.assets),
            "gamma_plus": cfg.risk.gamma_plus.tolist(), "gamma_minus": cfg.risk.gamma_minus.tolist()}
    _write_json(out / "diagnostics.json", diag)
    print(f"a_0^+ = {coeffs.a_plus[0]:.4f}  a_0^- = {coeffs.a_minus[0]:.4f}  "
          f"b_0^+ = {coeffs.b_plus[0]:.4f}  b_0^- = {coeffs.b_minus[0]:.4f}")
    print(f"wrote policy.json, coefficients.json, diagnostics.json to {out}")
    return EXIT_OK


def _load_policy(path) -> PolicyTable:
    path = Path(path)
    try:
        return PolicyTable.load(path)
    except FileNotFoundError:
        raise ConfigError(f"policy file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: cannot parse policy ({exc})") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid policy ({exc})") from None


def _policy_coefficients(policy: PolicyTable, sc: ScenarioSet) -> CoefficientTable:
    """Coefficients of an arbitrary feedback policy on the scenario set ``sc``."""
    coeffs = CoefficientTable.zeros(policy.horizon)
    for t in range(policy.horizon - 1, -1, -1):
        coeffs = update_coefficients(t, policy.K_plus[t], policy.K_minus[t], coeffs, sc, policy.curve)
    return coeffs


def cmd_simulate(cfg: RunConfig, policy_path, out) -> int:
    policy = _load_policy(policy_path)
    T, n = cfg.market.horizon, cfg.market.n_assets
    if policy.horizon != T or policy.n_assets != n:
        raise ConfigError(f"policy is for T={policy.horizon}, n={policy.n_assets}; "
                          f"config has T={T}, n={n}")
    if not np.allclose(policy.curve.rates, cfg.market.riskfree, rtol=0, atol=1e-12):
        raise ConfigError("policy was solved for different risk-free rates than the config")
    out = _ensure_dir(out)
    coeffs = _policy_coefficients(policy, _solve_scenarios(cfg))
    sim_sc = generate_scenarios(cfg.market, cfg.sim_paths, cfg.sim_seed, sampling=cfg.sim_sampling)
    res = simulate_on(policy, sim_sc, cfg.x0)

    with (out / "paths.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", *(f"X_{t}" for t in range(1, T + 1))])
        for i, row in enumerate(res.wealth[:, 1:]):
            w.writerow([i, *(_fmt(v) for v in row)])

    try:
        sharpe = sharpe_ratio(res, cfg.x0, policy.curve)
    except ValueError:
        sharpe = None
    try:
        grid, pdf = density_estimate(res.terminal)
        density = {"grid": grid.tolist(), "pdf": pdf.tolist()}
    except ValueError as exc:
        log.warning("no density estimate: %s", exc)
        grid, pdf, density = np.empty(0), np.empty(0), None
    with (out / "density.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wealth", "density"])
        for g, p in zip(grid, pdf):
            w.writerow([_fmt(g), _fmt(p)])

    summary = {
        "n_paths": res.n_paths,
        "seed": cfg.sim_seed,
        "x0": cfg.x0,
        "mean": res.mean,
        "variance": res.variance,
        "stderr_mean": res.stderr_mean,
        "stderr_variance": res.stderr_variance,
        "terminal_quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"),
                                       res.quantiles[-1].tolist())),
        "sharpe": sharpe,
        "threshold_probabilities": threshold_probabilities(policy, sim_sc).tolist(),
        "below_target_fraction": below_target_fraction(policy, res).tolist(),
        "comparison": comparison_block(res, policy, coeffs, cfg.x0),
        "density": density,
    }
    _write_json(out / "summary.json", summary)
    cmp_ = summary["comparison"]
    print(f"E[X_T] = {res.mean:.4f} (closed form {cmp_['closed_form_mean']:.4f}), "
          f"Var[X_T] = {res.variance:.4f} (closed form {cmp_['closed_form_variance']:.4f})")
    print(f"wrote paths.csv, summary.json, density.csv to {out}")
    return EXIT_OK


def _sweep_columns(assets, T):
    cols = ["gamma_plus", "gamma_minus", "sharpe"]
    for t in range(T):
        for side in SIDES:
            cols += [f"K{t}_{side}_{a}" for a in assets]
        cols += [f"a{t}_plus", f"a{t}_minus", f"b{t}_plus", f"b{t}_minus"]
    return cols


def cmd_sweep(cfg: RunConfig, param: str, values, out, fmt: str = "csv") -> int:
    if not values:
        raise ConfigError("sweep needs at least one value")
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    out = _ensure_dir(out)
    T = cfg.market.horizon
    sc = _solve_scenarios(cfg)
    sim_sc = generate_scenarios(cfg.market, cfg.sim_paths, cfg.sim_seed, sampling=cfg.sim_sampling)
    assets = cfg.market.assets
    rows = []
    for v in values:
        risk = replace(cfg.risk, **{param: np.full(T, float(v))})
        policy, coeffs, _ = backward_solve(cfg.market, risk, sc, cfg.search, cfg.cone)
        res = simulate_on(policy, sim_sc, cfg.x0)
        try:
            sharpe = sharpe_ratio(res, cfg.x0, policy.curve)
        except ValueError:
            sharpe = math.nan
        row = {"gamma_plus": float(risk.gamma_plus[0]), "gamma_minus": float(risk.gamma_minus[0]),
               "sharpe": sharpe}
        for t in range(T):
            for side, K in (("plus", policy.K_plus[t]), ("minus", policy.K_minus[t])):
                row.update({f"K{t}_{side}_{a}": float(k) for a, k in zip(assets, K)})
            row.update({f"a{t}_plus": coeffs.a_plus[t], f"a{t}_minus": coeffs.a_minus[t],
                        f"b{t}_plus": coeffs.b_plus[t], f"b{t}_minus": coeffs.b_minus[t]})
        rows.append(row)
        log.info("%s=%g: Sharpe %.4f", param, v, sharpe)
    cols = _sweep_columns(assets, T)
    if fmt == "json":
        _write_json(out / "sweep.json", {"assets": list(assets), "horizon": T, "parameter": param,
                                          "rows": rows})
        name = "sweep.json"
    else:
        with (out / "sweep.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in rows:
                w.writerow([_fmt(row[c]) for c in cols])
        name = "sweep.csv"
    print(f"wrote {name} ({len(rows)} rows) to {out}")
    return EXIT_OK


def _rows_from_dir(d: Path):
    """Table rows ``(assets, T, rows)`` from sweep.csv/sweep.json or a single solve."""
    if (d / "sweep.csv").is_file():
        with (d / "sweep.csv").open(newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [{k: float(v) for k, v in r.items()} for r in reader]
            header = reader.fieldnames or []
        if not rows:
            raise ConfigError(f"{d / 'sweep.csv'} has no rows")
        T = 1 + max(int(c[1:].split("_")[0]) for c in header if c.startswith("a") and c[1].isdigit())
        assets = [c[len("K0_plus_"):] for c in header if c.startswith("K0_plus_")]
        return assets, T, rows
    if (d / "sweep.json").is_file():
        data = json.loads((d / "sweep.json").read_text())
        return data["assets"], int(data["horizon"]), data["rows"]
    if (d / "policy.json").is_file() and (d / "coefficients.json").is_file():
        policy = _load_policy(d / "policy.json")
        coeffs = CoefficientTable.from_dict(json.loads((d / "coefficients.json").read_text()))
        assets = [f"asset{i}" for i in range(policy.n_assets)]
        gp = gm = math.nan
        if (d / "diagnostics.json").is_file():
            diag = json.loads((d / "diagnostics.json").read_text())
            assets = diag.get("assets", assets)
            gp, gm = diag.get("gamma_plus", [gp])[0], diag.get("gamma_minus", [gm])[0]
        row = {"gamma_plus": gp, "gamma_minus": gm}
        for t in range(policy.horizon):
            for side, K in (("plus", policy.K_plus[t]), ("minus", policy.K_minus[t])):
                row.update({f"K{t}_{side}_{a}": float(k) for a, k in zip(assets, K)})
            row.update({f"a{t}_plus": coeffs.a_plus[t], f"a{t}_minus": coeffs.a_minus[t],
                        f"b{t}_plus": coeffs.b_plus[t], f"b{t}_minus": coeffs.b_minus[t]})
        return assets, policy.horizon, [row]
    raise ConfigError(f"no sweep.csv, sweep.json or policy.json + coefficients.json in {d}")


def _r4(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def cmd_report(directory, out=None) -> int:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"not a directory: {d}")
    try:
        assets, T, rows = _rows_from_dir(d)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{d}: unreadable artifacts ({exc})") from None
    out = _ensure_dir(out if out is not None else d)

    def vec(row, t, side):
        return "[" + ",".join(_r4(row[f"K{t}_{side}_{a}"]) for a in assets) + "]'"

    text = io.StringIO()
    table = io.StringIO()
    w = csv.writer(table, lineterminator="\n")
    w.writerow(["t", "gamma_plus", "gamma_minus", *(f"K_plus_{a}" for a in assets),
                *(f"K_minus_{a}" for a in assets), "a_plus", "a_minus", "b_plus", "b_minus"])
    for t in range(T - 1, -1, -1):
        body = [[_r4(r["gamma_plus"]), _r4(r["gamma_minus"]), vec(r, t, "plus"), vec(r, t, "minus"),
                 _r4(r[f"a{t}_plus"]), _r4(r[f"a{t}_minus"]), _r4(r[f"b{t}_plus"]),
                 _r4(r[f"b{t}_minus"])] for r in rows]
        head = ["gamma+", "gamma-", f"K_{t}^+", f"K_{t}^-", f"a_{t}^+", f"a_{t}^-", f"b_{t}^+",
                f"b_{t}^-"]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        line = "  ".join(h.rjust(wd) for h, wd in zip(head, widths))
        text.write(line + "\n" + "-" * len(line) + "\n")
        for b in body:
            text.write("  ".join(x.rjust(wd) for x, wd in zip(b, widths)) + "\n")
        text.write("\n")
        for r in rows:
            w.writerow([t, _r4(r["gamma_plus"]), _r4(r["gamma_minus"]),
                        *(_r4(r[f"K{t}_plus_{a}"]) for a in assets),
                        *(_r4(r[f"K{t}_minus_{a}"]) for a in assets),
                        _r4(r[f"a{t}_plus"]), _r4(r[f"a{t}_minus"]),
                        _r4(r[f"b{t}_plus"]), _r4(r[f"b{t}_minus"])])
    if rows and "sharpe" in rows[0]:
        text.write("Sharpe ratio\n")
        for r in rows:
            text.write(f"  gamma+={_r4(r['gamma_plus'])} gamma-={_r4(r['gamma_minus'])}: "
                       f"{_r4(r['sharpe'])}\n")
    (out / "report.txt").write_text(text.getvalue())
    (out / "report.csv").write_text(table.getvalue())
    sys.stdout.write(text.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcportfolio",
                                description="Time-consistent behavioral mean-variance portfolios.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("solve", help="backward-solve the policy")
    common(sp)
    sp.add_argument("--seed", type=int, help="scenario seed (overrides config)")
    sp.add_argument("--scenarios", type=int, metavar="N", help="scenario count (overrides config)")
    sp.add_argument("--cone", help="no_shorting, long_only, none or a cone file")

    sp = sub.add_parser("simulate", help="Monte Carlo evaluation of a solved policy")
    common(sp)
    sp.add_argument("--policy", required=True, help="policy.json written by solve")
    sp.add_argument("--seed", type=int, help="simulation seed (overrides config)")
    sp.add_argument("--paths", type=int, help="number of paths (overrides config)")
    sp.add_argument("--scenarios", type=int, metavar="N",
                    help="scenario count of the solve set used for the closed forms")

    sp = sub.add_parser("sweep", help="solve for a list of risk-aversion values")
    common(sp)
    sp.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sp.add_argument("--values", required=True, type=float, nargs="+")
    sp.add_argument("--seed", type=int, help="scenario seed (overrides config)")
    sp.add_argument("--scenarios", type=int, metavar="N", help="scenario count (overrides config)")
    sp.add_argument("--cone", help="no_shorting, long_only, none or a cone file")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("report", help="format solve or sweep artifacts as tables")
    sp.add_argument("dir", help="directory holding sweep.csv/sweep.json or policy.json")
    sp.add_argument("--out", help="where to write report.txt/report.csv (default: dir)")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if getattr(args, "scenarios", None) is not None:
        changes["n_scenarios"] = args.scenarios
    if args.command == "simulate":
        if args.seed is not None:
            changes["sim_seed"] = args.seed
        if args.paths is not None:
            changes["sim_paths"] = args.paths
    elif getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "cone", None) is not None:
        changes["cone"] = _cone_from(args.cone, cfg.market.n_assets, Path.cwd())
    cfg = replace(cfg, **changes)
    if cfg.n_scenarios < 2 or cfg.sim_paths < 2:
        raise ConfigError("scenario and path counts must be at least 2")
    return cfg


def run(args) -> int:
    if args.command == "report":
        return cmd_report(args.dir, args.out)
    cfg = _apply_overrides(load_config(args.config), args)
    if args.command == "solve":
        return cmd_solve(cfg, args.out)
    if args.command == "simulate":
        return cmd_simulate(cfg, args.policy, args.out)
    return cmd_sweep(cfg, args.param, args.values, args.out, args.format)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ValidityError as exc:
        print(f"error: validity check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, MarketError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

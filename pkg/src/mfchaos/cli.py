"""Command-line front end: config parsing, dispatch, CSV artifacts.

Config files are flat `key = value` lines with dotted sections
(`model.name = linear`, `sim.dt = 0.01`); `#` starts a comment. Flags
override file values. Every run writes a manifest echoing the resolved
configuration plus seed and library versions, which is enough to
reproduce the run byte for byte. Artifacts are staged under a temporary
name and renamed into place only on success, so a failing run leaves no
partial output.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import inspect
import os
import sys
import tempfile

import numpy as np
import scipy

from . import __version__, chaos, engine, model as model_mod, solver, yamada
from .engine import BlowUpError, EngineError, SimConfig
from .model import ModelError


class ConfigError(Exception):
    pass


_DEFAULTS: dict[str, str] = {
    "seed": "0",
    "out": ".",
    "model.name": "linear",
    "model.p": "4.0",
    "init.name": "gaussian",
    "sim.T": "1.0",
    "sim.dt": "0.01",
    "sim.N": "256",
    "sim.r": "0.0",
    "sim.workers": "1",
    "record.form": "wide",
    "chaos.N_list": "64,128,256,512,1024,2048,4096",
    "chaos.replicas": "20",
    "chaos.times": "0.5,1.0",
    "solve.M": "10000",
    "solve.tol": "1e-3",
    "solve.max_iter": "25",
    "solve.common_noise": "0",
    "yamada.epsilon": "0.05,0.1,0.3",
    "yamada.n_list": "4,16,64,256",
    "check.box": "-3,3",
    "check.samples": "10000",
}

# keys that are accepted but have no default (absent unless set)
_OPTIONAL = {
    "model.a", "model.c", "model.sigma0", "model.kappa", "model.theta",
    "model.beta", "model.r", "model.m", "model.atoms", "model.alpha",
    "init.value", "init.mean", "init.std", "init.tail", "init.lo", "init.hi",
    "chaos.M", "chaos.bin_width", "solve.lambda",
}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path!r}: {e}") from e
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected `key = value`, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "subcommand" or key.startswith("version."):
            continue   # manifest echo lines; a manifest doubles as a config
        if key not in _DEFAULTS and key not in _OPTIONAL:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        values[key] = val
    return values


class RunConfig:
    """Resolved configuration: file values patched by flag overrides."""

    def __init__(self, values: dict[str, str]):
        self.values = dict(_DEFAULTS)
        self.provided = set(values)
        for k, v in values.items():
            if k not in _DEFAULTS and k not in _OPTIONAL:
                raise ConfigError(f"unknown key {k!r}")
            self.values[k] = v

    def has(self, key: str) -> bool:
        return key in self.values

    def raw(self, key: str) -> str:
        return self.values[key]

    def _convert(self, key: str, conv, what: str):
        try:
            return conv(self.values[key])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"key {key!r}: expected {what}, got {self.values[key]!r}") from e

    def get_float(self, key: str) -> float:
        return self._convert(key, float, "a number")

    def get_int(self, key: str) -> int:
        return self._convert(key, lambda s: int(str(s), 0), "an integer")

    def get_bool(self, key: str) -> bool:
        return self._convert(key, lambda s: bool(int(s)), "0 or 1")

    def get_floats(self, key: str) -> list[float]:
        return self._convert(key, lambda s: [float(x) for x in str(s).split(",") if x.strip()],
                             "a comma-separated number list")

    def get_ints(self, key: str) -> list[int]:
        return self._convert(key, lambda s: [int(x) for x in str(s).split(",") if x.strip()],
                             "a comma-separated integer list")

    # -- assembled objects ---------------------------------------------------

    def sim_config(self) -> SimConfig:
        if self.has("model.alpha"):
            alpha = self.get_float("model.alpha")
            if not (0.5 <= alpha <= 1.0):
                raise ConfigError(
                    f"key 'model.alpha': {alpha!r} outside the admissible "
                    f"Hoelder range [1/2, 1]")
        try:
            return SimConfig(
                T=self.get_float("sim.T"), dt=self.get_float("sim.dt"),
                N=self.get_int("sim.N"), seed=self.get_int("seed"),
                r=self.get_float("sim.r"),
                moment_order=self.get_float("model.p"),
                workers=self.get_int("sim.workers"),
            )
        except ValueError as e:
            msg = str(e)
            key = "sim.dt" if "horizon" in msg else ("sim.r" if "delay" in msg else "sim")
            raise ConfigError(f"key {key!r}: {msg}") from e

    def model(self) -> model_mod.ModelSpec:
        name = self.raw("model.name")
        if name not in model_mod.MODEL_ZOO:
            raise ConfigError(f"key 'model.name': unknown model {name!r} "
                              f"(available: {sorted(model_mod.MODEL_ZOO)})")
        factory = model_mod.MODEL_ZOO[name]
        accepted = set(inspect.signature(factory).parameters)
        params = {}
        for key in list(self.values):
            if not key.startswith("model.") or key == "model.name":
                continue
            pname = key.split(".", 1)[1]
            pname = {"p": "p"}.get(pname, pname)
            if pname not in accepted:
                if key in _OPTIONAL and key in self.values and key not in _DEFAULTS:
                    raise ConfigError(f"key {key!r}: model {name!r} does not take "
                                      f"parameter {pname!r}")
                continue
            if pname in ("m",):
                params[pname] = self.raw(key)
            elif pname in ("atoms",):
                params[pname] = self.get_int(key)
            else:
                params[pname] = self.get_float(key)
        try:
            return factory(**params)
        except ValueError as e:
            msg = str(e)
            key = "model.alpha" if "alpha" in msg else "model"
            if "alpha" in msg:
                msg += " (admissible Hoelder range [1/2, 1])"
            raise ConfigError(f"key {key!r}: {msg}") from e

    def initial_law(self):
        name = self.raw("init.name")
        if name not in engine.INITIAL_LAWS:
            raise ConfigError(f"key 'init.name': unknown initial law {name!r} "
                              f"(available: {sorted(engine.INITIAL_LAWS)})")
        cls = engine.INITIAL_LAWS[name]
        accepted = set(inspect.signature(cls).parameters)
        params = {}
        for key in list(self.values):
            if not key.startswith("init.") or key == "init.name":
                continue
            pname = {"mean": "loc", "std": "scale"}.get(key.split(".", 1)[1],
                                                        key.split(".", 1)[1])
            if pname in accepted:
                params[pname] = self.get_float(key)
        try:
            return cls(**params)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"key 'init.name': bad parameters for {name!r}: {e}") from e

    def manifest_lines(self, subcommand: str) -> list[str]:
        lines = [f"subcommand = {subcommand}"]
        for k in sorted(self.values):
            lines.append(f"{k} = {self.values[k]}")
        lines.append(f"version.mfchaos = {__version__}")
        lines.append(f"version.numpy = {np.__version__}")
        lines.append(f"version.scipy = {scipy.__version__}")
        return lines


class ArtifactWriter:
    """Stage files under temporary names, publish them all on success."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.staged: list[tuple[str, str]] = []
        os.makedirs(out_dir, exist_ok=True)

    def path_for(self, name: str) -> str:
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
        os.close(fd)
        self.staged.append((tmp, os.path.join(self.out_dir, name)))
        return tmp

    def commit(self) -> None:
        for tmp, final in self.staged:
            os.replace(tmp, final)
        self.staged = []

    def abort(self) -> None:
        for tmp, _ in self.staged:
            try:
                os.unlink(tmp)
            except OSError:
                pass
        self.staged = []


def _write_lines(path: str, lines) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def _sim_and_model(rc: RunConfig):
    """Build (SimConfig, ModelSpec), adopting the model's delay span as the
    simulation window when sim.r was left unset."""
    mdl = rc.model()
    span = mdl.delay_measure.span
    cfg = rc.sim_config()
    if span > 0:
        if "sim.r" not in rc.provided:
            rc.values["sim.r"] = repr(span)
            cfg = rc.sim_config()
        elif cfg.r + 1e-12 < span:
            raise ConfigError(
                f"key 'sim.r': window {cfg.r} is shorter than the model's "
                f"delay span {span}")
    return cfg, mdl


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(rc: RunConfig, art: ArtifactWriter) -> int:
    cfg, mdl = _sim_and_model(rc)
    rec = engine.simulate_interacting(cfg, mdl, rc.initial_law())
    rec.write_csv(art.path_for("record.csv"), form=rc.raw("record.form"))
    return 0


def _cmd_solve(rc: RunConfig, art: ArtifactWriter) -> int:
    cfg, mdl = _sim_and_model(rc)
    lam = rc.get_float("solve.lambda") if rc.has("solve.lambda") else None
    res = solver.solve_fixed_point(
        cfg, mdl, rc.initial_law(), M=rc.get_int("solve.M"), lam=lam,
        tol=rc.get_float("solve.tol"), max_iter=rc.get_int("solve.max_iter"),
        common_noise=rc.get_bool("solve.common_noise"))
    res.flow.write_csv(art.path_for("flow.csv"))
    res.write_diagnostics_csv(art.path_for("diagnostics.csv"))
    if not res.converged:
        print(f"non-convergence after {res.iterations} iterations "
              f"(noise floor {res.noise_floor:g}); diagnostics written", file=sys.stderr)
        return 4
    return 0


def _reference(rc: RunConfig, cfg: SimConfig, mdl) -> solver.MeasureFlow:
    n_list = rc.get_ints("chaos.N_list")
    M = rc.get_int("chaos.M") if rc.has("chaos.M") else 8 * max(n_list)
    return chaos.build_reference_flow(cfg, mdl, rc.initial_law(), M)


def _cmd_chaos_rate(rc: RunConfig, art: ArtifactWriter) -> int:
    cfg, mdl = _sim_and_model(rc)
    ref = _reference(rc, cfg, mdl)
    report = chaos.estimate_chaos_rate(cfg, mdl, rc.get_ints("chaos.N_list"),
                                       rc.get_int("chaos.replicas"), ref,
                                       workers=cfg.workers)
    report.write_csv(art.path_for("rate.csv"))
    report.write_summary_csv(art.path_for("summary.csv"))
    report.write_runs_csv(art.path_for("runs.csv"))
    return 0


def _cmd_coupling(rc: RunConfig, art: ArtifactWriter) -> int:
    cfg, mdl = _sim_and_model(rc)
    ref = _reference(rc, cfg, mdl)
    rep = chaos.coupling_error_curve(cfg, mdl, ref, rc.get_ints("chaos.N_list"),
                                     rc.get_int("chaos.replicas"), workers=cfg.workers)
    rep.write_csv(art.path_for("coupling.csv"))
    return 0


def _cmd_tv_study(rc: RunConfig, art: ArtifactWriter) -> int:
    cfg, mdl = _sim_and_model(rc)
    ref = _reference(rc, cfg, mdl)
    bw = rc.get_float("chaos.bin_width") if rc.has("chaos.bin_width") else None
    try:
        rep = chaos.marginal_tv_study(cfg, mdl, ref, rc.get_ints("chaos.N_list"),
                                      rc.get_int("chaos.replicas"),
                                      rc.get_floats("chaos.times"), bin_width=bw,
                                      workers=cfg.workers)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    rep.write_csv(art.path_for("tv.csv"))
    return 0


def _cmd_check_assumptions(rc: RunConfig, art: ArtifactWriter) -> int:
    mdl = rc.model()
    box = rc.get_floats("check.box")
    if len(box) != 2:
        raise ConfigError("key 'check.box': expected `lo,hi`")
    report = model_mod.check_assumptions(mdl, box=(box[0], box[1]),
                                         sample_count=rc.get_int("check.samples"),
                                         seed=rc.get_int("seed"))
    lines = ["check,estimate,declared,passed"]
    declared = {"K_b": mdl.K_b, "K_B": mdl.K_B, "K_sigma": mdl.K_sigma}
    for name, est, const, ok in report.rows():
        dv = declared.get(const, "")
        lines.append(f"{name},{est!r},{dv!r},{int(ok)}")
    lines.append(f"# {report.note}")
    _write_lines(art.path_for("assumptions.csv"), lines)
    print("assumption audit:", "pass" if report.all_ok else "VIOLATIONS FOUND")
    return 0


def _cmd_yamada_verify(rc: RunConfig, art: ArtifactWriter) -> int:
    eps_list = rc.get_floats("yamada.epsilon")
    n_list = rc.get_ints("yamada.n_list")
    lines = ["epsilon,check,max_violation,passed"]
    for eps in eps_list:
        yw = yamada.make_yamada(eps)
        grid = np.linspace(-2.0, 2.0, 10_001)
        v = yw.V(grid)
        vp = yw.V_prime(grid)
        ax = np.abs(grid)
        checks = {
            "V_lower": float(np.max((ax - eps) - v)),
            "V_upper": float(np.max(v - ax)),
            "Vp_range": float(max(np.max(np.sign(grid) * vp) - 1.0,
                                  np.max(-np.sign(grid) * vp))),
            "mass": float(abs(yw.mass() - 1.0)),
        }
        lo, hi = yw.support
        sg = np.exp(np.linspace(np.log(lo), np.log(hi), 10_001))
        checks["Vpp_bound"] = float(np.max(yw.V_second(sg) * sg - 2.0 * eps))
        off = np.array([lo * 0.5, hi * 2.0])
        checks["Vpp_support"] = float(np.max(yw.V_second(off)))
        for name, viol in checks.items():
            lines.append(f"{eps!r},{name},{viol!r},{int(viol <= 1e-8)}")
    # mollification audit on the square-root diffusion
    mdl = model_mod.make_sqrt_model(sigma0=1.0)
    grid = np.linspace(-2.0, 2.0, 2001)
    base = mdl.sigma(0.0, grid)
    for n in n_list:
        sn = yamada.mollify_sigma(mdl, n)(0.0, grid)
        gap = float(np.max(np.abs(sn - base)))
        bound = yamada.mollifier_error_bound(mdl.K_sigma, mdl.alpha, n)
        lines.append(f"n={n},mollify_sup_gap,{gap!r},{int(gap <= bound * (1 + 1e-6))}")
    _write_lines(art.path_for("yamada_audit.csv"), lines)
    return 0


_SUBCOMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "chaos-rate": _cmd_chaos_rate,
    "coupling": _cmd_coupling,
    "tv-study": _cmd_tv_study,
    "check-assumptions": _cmd_check_assumptions,
    "yamada-verify": _cmd_yamada_verify,
}


def parse_config(path: str | None, overrides: dict[str, str]) -> RunConfig:
    values = parse_config_file(path) if path else {}
    for k, v in overrides.items():
        if k not in _DEFAULTS and k not in _OPTIONAL:
            raise ConfigError(f"unknown key {k!r} in override")
        values[k] = v
    return RunConfig(values)


def run(subcommand: str, rc: RunConfig) -> int:
    if subcommand not in _SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    art = ArtifactWriter(rc.raw("out"))
    try:
        status = _SUBCOMMANDS[subcommand](rc, art)
        _write_lines(art.path_for("run_manifest.txt"), rc.manifest_lines(subcommand))
        art.commit()
        return status
    except Exception:
        art.abort()
        raise


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfchaos",
        description="mean-field particle simulations and propagation-of-chaos experiments")
    parser.add_argument("subcommand", choices=sorted(_SUBCOMMANDS))
    parser.add_argument("--config", help="path to a `key = value` config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    parser.add_argument("--epsilon", help="shorthand for --set yamada.epsilon=...")
    args = parser.parse_args(argv)

    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            print(f"config error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.epsilon is not None:
        overrides["yamada.epsilon"] = args.epsilon

    try:
        rc = parse_config(args.config, overrides)
        return run(args.subcommand, rc)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except BlowUpError as e:
        print(f"numerical blow-up: {e}", file=sys.stderr)
        return 3
    except ModelError as e:
        print(f"model error: {e}", file=sys.stderr)
        return 3
    except EngineError as e:
        # setup-level engine complaints (grid/flow mismatches) are config errors
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 invariant failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from typing import Dict, List, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from . import __version__
from .config import RunConfig, load_config
from .evolution import (EvolvedState, expectation_series, expectation_value,
                        quantum_liouville_residual, renormalized, trace_of_state)
from .linsys import (InputError, IntegrationError, RangeError, StepControl,
                     classical_trajectory, fundamental_matrix)
from .models import (CATALOGUE, ModelDefinition, ModelError, build_damped_oscillator,
                     build_generic, build_magnetic_charge)
from .polynomial import DegreeCapError
from .states import (EigenstateError, MagneticStateSpec, OscillatorSpec, eigenstate_residual,
                     ground_state, magnetic_spectrum, oscillator_eigenstate,
                     oscillator_spectrum, magnetic_eigenstate)
from .symbols import GaussPolySymbol, SymbolError, moyal_star, symbol_distance
from .symplectic import (PseudoHamiltonianData, SymplecticStructure, canonical_omega0,
                         evaluate_action, first_variation)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return "%.17g" % x


def _csv(header: List[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(r if isinstance(r, str) else _fmt(r) for r in row) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# pipeline assembly
# ---------------------------------------------------------------------------

def build_model(cfg: RunConfig) -> ModelDefinition:
    m = cfg.model
    if m.name == "damped_oscillator":
        model = build_damped_oscillator(m.omega, m.alpha, cfg.hbar, m.variant)
    elif m.name == "magnetic_charge":
        model = build_magnetic_charge(m.e, m.H_field, cfg.hbar, m.friction)
    else:
        model = build_generic(m.A, m.J, None, cfg.hbar)
    omega0 = model.omega0 if cfg.omega0 is None else np.array(cfg.omega0, dtype=float)
    return model.with_omega0(omega0 * cfg.omega0_scale)


def build_initial_state(model: ModelDefinition, cfg: RunConfig) -> GaussPolySymbol:
    """Eigenstate in the canonical frame, renormalized for the model's seed."""
    if model.name.startswith("damped_oscillator"):
        rho = oscillator_eigenstate(OscillatorSpec(model.parameters["omega"], cfg.hbar, cfg.state.n),
                                    tol=cfg.tolerances.eigen)
    elif model.name == "magnetic_charge":
        B = model.parameters["B"]
        if B <= 0:
            raise ModelError("magnetic eigenstates need a positive effective field (e H > 0)")
        rho = magnetic_eigenstate(MagneticStateSpec(B, cfg.hbar, cfg.state.n, cfg.state.l),
                                  tol=cfg.tolerances.eigen)
    else:
        Pi = np.linalg.inv(canonical_omega0(model.dim))
        rho = ground_state(model.observables["H0"], Pi, cfg.hbar)
    if np.allclose(model.omega0, canonical_omega0(model.dim)):
        return rho
    flow0 = fundamental_matrix(model.system, 0.0)
    return renormalized(rho, SymplecticStructure(model.omega0, flow0), cfg.hbar)


def state_energy(model: ModelDefinition, cfg: RunConfig) -> Dict[str, float]:
    if model.name.startswith("damped_oscillator"):
        return {"E": OscillatorSpec(model.parameters["omega"], cfg.hbar, cfg.state.n).energy}
    if model.name == "magnetic_charge" and model.parameters["B"] > 0:
        s = MagneticStateSpec(model.parameters["B"], cfg.hbar, cfg.state.n, cfg.state.l)
        return {"E": s.energy, "M": s.angular_momentum}
    return {}


class Pipeline:
    def __init__(self, cfg: RunConfig, model: Optional[ModelDefinition] = None):
        self.cfg = cfg
        self.model = build_model(cfg) if model is None else model
        ic = cfg.integration
        sc = StepControl(ic.rtol, ic.atol, ic.method, ic.step, cfg.time.samples)
        self.flow = fundamental_matrix(self.model.system, cfg.time.t_max, sc)
        self.ss = SymplecticStructure(self.model.omega0, self.flow)
        self.rho0 = build_initial_state(self.model, cfg)
        self.state = EvolvedState(self.rho0, self.flow)
        self.times = self.flow.t_grid

    def observable(self, name: str) -> GaussPolySymbol:
        try:
            return self.model.observables[name]
        except KeyError:
            raise ConfigError(f"unknown observable {name!r} for model {self.model.name}; "
                              f"available: {sorted(self.model.observables)}") from None

    def series(self, name: str):
        s = expectation_series(self.observable(name), self.state, self.ss, self.cfg.hbar,
                               self.times, name)
        s.metadata = {"model": self.model.name}
        return s


def manifest(cfg: RunConfig, model: ModelDefinition, command: str,
             artifacts: List[str], extra: Optional[dict] = None) -> dict:
    out = {
        "command": command,
        "version": __version__,
        "model": model.name,
        "parameters": {k: v for k, v in sorted(model.parameters.items())},
        "omega0": np.asarray(model.omega0).tolist(),
        "hbar": cfg.hbar,
        "state": {"n": cfg.state.n, "l": cfg.state.l, **state_energy(model, cfg)},
        "tolerances": cfg.tolerances.model_dump(),
        "config": cfg.model_dump(mode="json"),
        "artifacts": sorted(artifacts),
    }
    if extra:
        out.update(extra)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _wigner_rows(rho: GaussPolySymbol, axes, extent, points):
    from .symbols import sample_grid
    coords, vals = sample_grid(rho, axes, extent, points)
    return [[*coords[k, list(axes)], vals[k].real, vals[k].imag] for k in range(len(vals))]


def _wigner_artifacts(pipe: Pipeline, out: str, fmt: str, times) -> List[str]:
    cfg = pipe.cfg
    axes = cfg.wigner.axes
    if any(a < 0 or a >= pipe.model.dim for a in axes):
        raise ConfigError(f"wigner axes {axes} out of range for dimension {pipe.model.dim}")
    header = [pipe.model.coordinates[a] for a in axes] + ["re", "im"]
    written = []
    for k, t in enumerate(times):
        rows = _wigner_rows(pipe.state.at(t), axes, cfg.wigner.extent, cfg.wigner.points)
        if fmt == "csv":
            name = f"wigner_{k:03d}.csv"
            atomic_write(os.path.join(out, name), _csv(header, rows))
        else:
            name = f"wigner_{k:03d}.json"
            atomic_write(os.path.join(out, name), _json({"t": t, "columns": header, "rows": rows}))
        written.append(name)
    return written


def cmd_simulate(cfg: RunConfig, out: str, fmt: str) -> int:
    pipe = Pipeline(cfg)
    artifacts = []
    all_series = [pipe.series(name) for name in cfg.observables]
    if fmt == "csv":
        for s in all_series:
            name = f"{s.observable_name}.csv"
            atomic_write(os.path.join(out, name), s.to_csv())
            artifacts.append(name)
    else:
        atomic_write(os.path.join(out, "series.json"),
                     _json({s.observable_name: s.to_dict() for s in all_series}))
        artifacts.append("series.json")
    for t in cfg.wigner.times:
        pipe.flow._check_range(t)
    artifacts += _wigner_artifacts(pipe, out, fmt, cfg.wigner.times)
    atomic_write(os.path.join(out, "manifest.json"),
                 _json(manifest(cfg, pipe.model, "simulate", artifacts)))
    return EXIT_OK


def _check(name: str, residual: float, tol: float, passed: Optional[bool] = None, **info) -> dict:
    residual = float(residual)
    ok = bool(residual <= tol) if passed is None else bool(passed)
    return {"name": name, "passed": ok, "residual": residual, "tolerance": tol, **info}


def _random_poly_symbol(rng, dim, degree):
    terms = {}
    for _ in range(4):
        k = [0] * dim
        for _ in range(int(rng.integers(0, degree + 1))):
            k[int(rng.integers(dim))] += 1
        terms[tuple(k)] = complex(rng.normal(), rng.normal())
    return GaussPolySymbol(dim, poly_terms=terms)


def run_verification(cfg: RunConfig) -> List[dict]:
    """Invariant suite; returns one record per check."""
    tol = cfg.tolerances
    pipe = Pipeline(cfg)
    model, ss, hbar = pipe.model, pipe.ss, cfg.hbar
    star_hbar = cfg.verify.inject_star_hbar or hbar
    pi0 = ss.pi0
    checks = []

    # Eigenstates are pure with respect to the canonical seed form; with any
    # other seed the state-intrinsic checks run in the canonical frame.
    canonical = canonical_omega0(model.dim)
    frame = "canonical"
    if not np.allclose(model.omega0, canonical):
        pipe_c = Pipeline(cfg, model.with_omega0(canonical))
    else:
        pipe_c = pipe
    ss_c, pi_c = pipe_c.ss, pipe_c.ss.pi0

    # eigenvalue equations at t = 0, with the (possibly injected) star product
    E = state_energy(model, cfg)
    rho0 = pipe_c.rho0
    if "E" in E:
        res = eigenstate_residual(rho0, model.observables["H"], E["E"], pi_c, star_hbar,
                                  ss_c.delta(0.0))
        scale = max(1.0, rho0.max_abs_coeff())
        checks.append(_check("eigen_residual", res / scale, tol.eigen, frame=frame))
    else:
        res = symbol_distance(moyal_star(rho0, rho0, pi_c, star_hbar), rho0)
        checks.append(_check("eigen_residual", res, tol.eigen, frame=frame,
                             note="idempotency of ground state"))
    if "M" in E:
        L = model.observables["L"]
        res = max(symbol_distance(moyal_star(L, rho0, pi_c, star_hbar), rho0 * E["M"]),
                  symbol_distance(moyal_star(rho0, L, pi_c, star_hbar), rho0 * E["M"]))
        checks.append(_check("angular_momentum_residual", res / max(1.0, rho0.max_abs_coeff()),
                             tol.eigen, frame=frame))

    # normalization and idempotency along the grid
    sample_t = sorted({float(pipe.times[0]), float(pipe.times[len(pipe.times) // 2]),
                       float(pipe.times[-1])})
    drift = max(abs(trace_of_state(pipe.state, t, ss, hbar) - 1.0) for t in pipe.times)
    checks.append(_check("trace_normalization", drift, tol.trace))
    idem = 0.0
    for t in sample_t:
        rho = pipe_c.state.at(t)
        d = symbol_distance(moyal_star(rho, rho, ss_c.pi(t), star_hbar), rho)
        idem = max(idem, d / max(1.0, rho.max_abs_coeff()))
    checks.append(_check("idempotency_persistence", idem, tol.idempotency, frame=frame))

    # Tr(F * rho) = Tr(F rho)
    tp = 0.0
    for name in cfg.observables:
        F = pipe.observable(name)
        for t in sample_t:
            a = expectation_value(F, pipe.state, t, ss, hbar, frame="current")
            b = expectation_value(F, pipe.state, t, ss, hbar, pointwise=True, frame="current")
            tp = max(tp, abs(a - b) / max(1.0, abs(b)))
    checks.append(_check("trace_of_star_product", tp, tol.trace_product))

    # associativity on seeded random polynomials
    rng = np.random.default_rng(cfg.verify.seed)
    assoc = 0.0
    for _ in range(cfg.verify.random_trials):
        F, G, K = (_random_poly_symbol(rng, model.dim, 3) for _ in range(3))
        lhs = moyal_star(moyal_star(F, G, pi0, star_hbar), K, pi0, star_hbar)
        rhs = moyal_star(F, moyal_star(G, K, pi0, star_hbar), pi0, star_hbar)
        assoc = max(assoc, symbol_distance(lhs, rhs))
    checks.append(_check("associativity", assoc, tol.associativity))

    # independence of the seed 2-form
    scaled = model.with_omega0(model.omega0 * cfg.verify.omega0_scale)
    other = Pipeline(cfg, scaled)
    other.state = EvolvedState(renormalized(pipe.rho0, other.ss, hbar), other.flow)
    indep = 0.0
    for name in cfg.observables:
        a = pipe.series(name).values
        b = other.series(name).values
        indep = max(indep, float(np.max(np.abs(a - b))))
    checks.append(_check("omega0_independence", indep, tol.omega0_independence,
                         scale=cfg.verify.omega0_scale))

    # quantum Liouville residual and its stencil order
    if pipe.flow.t_max > 0:
        data = PseudoHamiltonianData(ss)
        t_mid = 0.5 * pipe.flow.t_max
        h = min(1e-2, 0.25 * t_mid)
        r1 = quantum_liouville_residual(pipe.state, data.hamiltonian, t_mid, ss, star_hbar, h=h)
        r2 = quantum_liouville_residual(pipe.state, data.hamiltonian, t_mid, ss, star_hbar, h=h / 2)
        scale = max(1.0, pipe.state.at(t_mid).max_abs_coeff())
        if max(r1, r2) / scale < 1e-9:
            order, ok = float("nan"), True
        else:
            order = float(np.log2(r1 / r2)) if r2 > 0 else float("inf")
            ok = abs(order - 2.0) <= tol.liouville_order
        checks.append(_check("liouville_residual_order", r2 / scale, 1e-9, passed=ok,
                             observed_order=order, h=h))

        # structure equation Omega' = -(Omega A + A^T Omega), 4th-order stencil
        hs = min(1e-3, 0.25 * t_mid)
        Om = [ss.omega(t_mid + k * hs) for k in (-2, -1, 1, 2)]
        fd = (Om[0] - 8 * Om[1] + 8 * Om[2] - Om[3]) / (12 * hs)
        exact = ss.omega_dot(t_mid)
        defect = float(np.max(np.abs(fd - exact)) / max(1.0, np.max(np.abs(exact))))
        checks.append(_check("structure_equation", defect, tol.structure))
    return checks


def cmd_verify(cfg: RunConfig, out: str, fmt: str) -> int:
    checks = run_verification(cfg)
    model = build_model(cfg)
    passed = all(c["passed"] for c in checks)
    report = {"passed": passed, "checks": checks}
    atomic_write(os.path.join(out, "report.json"), _json(report))
    atomic_write(os.path.join(out, "manifest.json"),
                 _json(manifest(cfg, model, "verify", ["report.json"],
                                {"injected_star_hbar": cfg.verify.inject_star_hbar})))
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: "
              f"residual={c['residual']:.3e} tol={c['tolerance']:.1e}")
    return EXIT_OK if passed else EXIT_INVARIANT


def cmd_spectrum(cfg: RunConfig, out: str, fmt: str) -> int:
    model = build_model(cfg)
    sp = cfg.spectrum
    if model.name.startswith("damped_oscillator"):
        header = ["n", "E"]
        rows = [[str(n), e] for n, e in oscillator_spectrum(model.parameters["omega"], cfg.hbar, sp.n_max)]
    elif model.name == "magnetic_charge":
        header = ["n", "l", "E", "M"]
        rows = [[str(n), str(l), e, m] for n, l, e, m in
                magnetic_spectrum(sp.B_eff or model.parameters["B"], cfg.hbar, sp.n_max, sp.l_max)]
    else:
        raise ConfigError("spectrum is available for the oscillator and magnetic models only")
    if fmt == "csv":
        text, name = _csv(header, rows), "spectrum.csv"
    else:
        recs = [{h: (int(v) if isinstance(v, str) else v) for h, v in zip(header, r)} for r in rows]
        text, name = _json(recs), "spectrum.json"
    atomic_write(os.path.join(out, name), text)
    atomic_write(os.path.join(out, "manifest.json"),
                 _json(manifest(cfg, model, "spectrum", [name])))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_models(cfg: Optional[RunConfig], out: Optional[str], fmt: str) -> int:
    listing = {name: {k: v for k, v in entry.items() if k != "builder"}
               for name, entry in CATALOGUE.items()}
    text = _json(listing)
    if out is not None:
        atomic_write(os.path.join(out, "models.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_action_data(cfg: RunConfig, out: str, fmt: str) -> int:
    model = build_model(cfg)
    ac = cfg.action
    ic = cfg.integration
    flow = fundamental_matrix(model.system, ac.t_max,
                              StepControl(ic.rtol, ic.atol, ic.method, ic.step, 2))
    ss = SymplecticStructure(model.omega0, flow)
    data = PseudoHamiltonianData(ss)
    x0 = np.ones(model.dim) if ac.x0 is None else np.array(ac.x0, dtype=float)
    if x0.shape != (model.dim,):
        raise ConfigError(f"action.x0 must have {model.dim} entries")
    rows = []
    for N in ac.grid_points:
        ts = np.linspace(0.0, ac.t_max, N)
        path = np.array([classical_trajectory(flow, x0, t) for t in ts])
        S = evaluate_action(path, ts, ss, data)
        dS = first_variation(path, ts, ss, data, eps=ac.eps)
        # control: a path that is not a solution has an O(1) first variation
        s = ts / ac.t_max
        bent = path + np.outer(np.sin(np.pi * s) ** 2, np.ones(model.dim))
        dS_ctrl = first_variation(bent, ts, ss, data, eps=ac.eps)
        rows.append([str(N), ts[1] - ts[0], S, dS, dS_ctrl])
    header = ["N", "dt", "action", "first_variation", "control_variation"]
    if fmt == "csv":
        text, name = _csv(header, rows), "action.csv"
    else:
        text = _json([{h: (int(v) if isinstance(v, str) else v) for h, v in zip(header, r)}
                      for r in rows])
        name = "action.json"
    atomic_write(os.path.join(out, name), text)
    atomic_write(os.path.join(out, "manifest.json"),
                 _json(manifest(cfg, model, "action-data", [name])))
    return EXIT_OK


def cmd_wigner_grid(cfg: RunConfig, out: str, fmt: str) -> int:
    pipe = Pipeline(cfg)
    times = cfg.wigner.times or [0.0, cfg.time.t_max]
    for t in times:
        pipe.flow._check_range(t)
    artifacts = _wigner_artifacts(pipe, out, fmt, times)
    atomic_write(os.path.join(out, "manifest.json"),
                 _json(manifest(cfg, pipe.model, "wigner-grid", artifacts,
                                {"wigner_times": list(times)})))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "models": cmd_models,
    "action-data": cmd_action_data,
    "wigner-grid": cmd_wigner_grid,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqlinear", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--out", help="output directory (default: output.dir from config)")
        p.add_argument("--format", choices=["csv", "json"], help="table format")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a dotted configuration key, value parsed as YAML")
    return parser


def _config_message(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        lines.append(f"  {loc or '<root>'}: {e['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "models" and args.config is None and not args.override:
            return cmd_models(None, args.out, args.format or "json")
        cfg = load_config(args.config, args.override)
        out = args.out or cfg.output.dir
        fmt = args.format or cfg.output.format
        return COMMANDS[args.command](cfg, out, fmt)
    except ValidationError as err:
        print(_config_message(err), file=sys.stderr)
        return EXIT_CONFIG
    except (yaml.YAMLError, OSError, ConfigError, ModelError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, EigenstateError, SymbolError, DegreeCapError, RangeError,
            np.linalg.LinAlgError, FloatingPointError) as err:
        print(f"numerical failure in {type(err).__module__}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: YAML ingestion, validation and echo.

A configuration is a YAML mapping with the sections ``system``,
``forcing``, ``solver`` and one settings block per subcommand. Matrices
are given inline (row-major nested lists) or as paths to Matrix Market
files, resolved relative to the configuration file.

Example
-------
.. code-block:: yaml

    system:
      model: two_dof
      params: {m: 1.0, k: 1.0, c: 0.3}
      nonlinearity: {type: cubic, coeff: 0.5, dof: 0}
    forcing:
      type: harmonic
      amplitudes: [0.01, 0.01]
      omega: 1.0
    sweep: {omega_start: 0.3, omega_stop: 2.2, points: 100}
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError

MODELS = ("two_dof", "chain", "matrices")
NONLINEARITIES = ("none", "cubic", "play", "chain")
FORCINGS = ("harmonic", "quasiperiodic")
METHODS = ("picard", "newton", "hybrid")
ROUTES = ("auto", "full", "position")
SCHEMES = ("trapezoid", "spectral")

DEFAULTS = {
    "solver": {"method": "hybrid", "m": 128, "tol": 1e-8, "max_iter": 200, "route": "auto",
               "scheme": "trapezoid"},
    "sweep": {"omega_start": 0.3, "omega_stop": 2.2, "points": 100},
    "continuation": {"omega_start": 0.5, "omega_stop": 2.0, "dp": 0.05, "max_points": 500},
    "qp_sweep": {"omega1": [0.8, 1.2, 20], "omega2": [1.5, 1.95, 20], "K": 3, "K_max": 10},
    "backbone": {"seed_amplitude": 1e-3, "dp": 0.02, "max_points": 60, "mode": 0,
                 "phase_dof": 0, "amplitude_stop": None},
    "output": {"path": "results.csv", "jobs": 1},
}


@dataclass
class RunConfig:
    """Validated configuration with every default materialized."""

    system: dict
    forcing: dict
    solver: dict
    sweep: dict = field(default_factory=dict)
    continuation: dict = field(default_factory=dict)
    qp_sweep: dict = field(default_factory=dict)
    backbone: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: str = "."

    def to_dict(self):
        """Plain mapping suitable for :func:`yaml.safe_dump` (the echo)."""
        return {k: copy.deepcopy(getattr(self, k))
                for k in ("system", "forcing", "solver", "sweep", "continuation", "qp_sweep",
                          "backbone", "output")}

    def echo(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # ------------------------------------------------------------ builders

    def build_system(self):
        from .bench import build_chain, build_two_dof, chain_nonlinearity, cubic_spring, play_spring
        from .model import MechanicalSystem

        s = self.system
        p = s.get("params", {})
        nl_spec = s.get("nonlinearity", {"type": "none"})
        if s["model"] == "two_dof":
            n = 2
        elif s["model"] == "chain":
            n = int(p.get("n", 20))
        else:
            n = len(self._matrix("M"))
        kind = nl_spec.get("type", "none")
        if kind == "cubic":
            nl = cubic_spring(float(nl_spec.get("coeff", 0.5)), n, int(nl_spec.get("dof", 0)))
        elif kind == "play":
            nl = play_spring(float(nl_spec["alpha"]), float(nl_spec["beta"]), n,
                             int(nl_spec.get("dof", 0)))
        elif kind == "chain":
            nl = chain_nonlinearity(n, float(nl_spec.get("kappa", 0.5)))
        else:
            nl = None
        if s["model"] == "two_dof":
            return build_two_dof(float(p.get("m", 1.0)), float(p.get("k", 1.0)),
                                 float(p.get("c", 0.3)), nl)
        if s["model"] == "chain":
            sys = build_chain(n, float(p.get("m", 1.0)), float(p.get("k", 1.0)),
                              float(p.get("c", 1.0)), float(p.get("kappa", 0.5)))
            return sys if kind == "chain" else MechanicalSystem(sys.M, sys.C, sys.K, nl)
        return MechanicalSystem(self._matrix("M"), self._matrix("C"), self._matrix("K"), nl)

    def _matrix(self, key):
        value = self.system[key]
        if isinstance(value, str):
            from scipy.io import mmread

            A = mmread(self._path(value))
            return np.asarray(A.todense() if hasattr(A, "todense") else A, dtype=float)
        return np.asarray(value, dtype=float)

    def _path(self, value):
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    def build_forcing(self, omega=None, omega2=None):
        from .forcing import harmonic_forcing, qper_forcing

        f = self.forcing
        if f["type"] == "harmonic":
            om = float(f.get("omega", 1.0) if omega is None else omega)
            return harmonic_forcing(np.asarray(f["amplitudes"], dtype=float), om)
        om1 = float(f.get("omega1", 1.0) if omega is None else omega)
        om2 = float(f.get("omega2", np.sqrt(3.0)) if omega2 is None else omega2)
        return qper_forcing(om1, om2, float(f.get("amplitude", 0.01)),
                            n=self.n_dof(), dof=int(f.get("dof", 0)))

    def n_dof(self):
        s = self.system
        if s["model"] == "two_dof":
            return 2
        if s["model"] == "chain":
            return int(s.get("params", {}).get("n", 20))
        return len(self._matrix("M"))


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    out.update(given or {})
    return out


def _check_enum(problems, where, value, allowed):
    if value not in allowed:
        problems.append(f"{where}: {value!r} is not one of {', '.join(allowed)}")


def _check_positive(problems, where, value, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
    if integer:
        ok = ok and float(value) == int(value)
    if not ok:
        problems.append(f"{where}: expected a positive {'integer' if integer else 'number'}, got {value!r}")


def config_from_dict(data, base_dir="."):
    """Validate a parsed mapping; raises :class:`ConfigError` listing every problem."""
    problems = []
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", ["top level is not a mapping"])
    known = {"system", "forcing", "solver", "sweep", "continuation", "qp_sweep", "backbone", "output"}
    for key in sorted(set(data) - known):
        problems.append(f"unknown section {key!r}")
    system = copy.deepcopy(data.get("system"))
    if not isinstance(system, dict):
        problems.append("system: section is required")
        system = {"model": "two_dof"}
    system.setdefault("nonlinearity", {"type": "none"})
    system.setdefault("params", {})
    _check_enum(problems, "system.model", system.get("model"), MODELS)
    nl = system["nonlinearity"]
    if not isinstance(nl, dict):
        problems.append("system.nonlinearity: expected a mapping")
    else:
        _check_enum(problems, "system.nonlinearity.type", nl.get("type", "none"), NONLINEARITIES)
        if nl.get("type") == "play":
            for key in ("alpha", "beta"):
                if key not in nl:
                    problems.append(f"system.nonlinearity.{key}: required for a play spring")
    if system.get("model") == "matrices":
        for key in ("M", "C", "K"):
            value = system.get(key)
            if value is None:
                problems.append(f"system.{key}: required for model 'matrices'")
            elif isinstance(value, str):
                path = value if os.path.isabs(value) else os.path.join(base_dir, value)
                if not os.path.isfile(path):
                    problems.append(f"system.{key}: file not found: {path}")
    forcing = copy.deepcopy(data.get("forcing"))
    if not isinstance(forcing, dict):
        problems.append("forcing: section is required")
        forcing = {"type": "harmonic", "amplitudes": []}
    forcing.setdefault("type", "harmonic")
    _check_enum(problems, "forcing.type", forcing["type"], FORCINGS)
    if forcing["type"] == "harmonic" and "amplitudes" not in forcing:
        problems.append("forcing.amplitudes: required for harmonic forcing")
    solver = _merge(DEFAULTS["solver"], data.get("solver"))
    _check_enum(problems, "solver.method", solver["method"], METHODS)
    _check_enum(problems, "solver.route", solver["route"], ROUTES)
    _check_enum(problems, "solver.scheme", solver["scheme"], SCHEMES)
    _check_positive(problems, "solver.m", solver["m"], integer=True)
    if isinstance(solver["m"], (int, float)) and solver["m"] < 8:
        problems.append(f"solver.m: must be at least 8, got {solver['m']}")
    _check_positive(problems, "solver.tol", solver["tol"])
    _check_positive(problems, "solver.max_iter", solver["max_iter"], integer=True)
    sections = {k: _merge(DEFAULTS[k], data.get(k)) for k in
                ("sweep", "continuation", "qp_sweep", "backbone", "output")}
    _check_positive(problems, "sweep.points", sections["sweep"]["points"], integer=True)
    _check_positive(problems, "continuation.dp", sections["continuation"]["dp"])
    _check_positive(problems, "output.jobs", sections["output"]["jobs"], integer=True)
    for key in ("omega1", "omega2"):
        spec = sections["qp_sweep"][key]
        if not (isinstance(spec, list) and len(spec) == 3):
            problems.append(f"qp_sweep.{key}: expected [start, stop, count]")
    if problems:
        raise ConfigError(f"{len(problems)} configuration problem(s)", problems)
    return RunConfig(system, forcing, solver, base_dir=base_dir, **sections)


def parse_config(path):
    """Read and validate a YAML configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", [str(path)]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"YAML parse error at {where}", [f"{where}: {exc}"]) from exc
    return config_from_dict(data, os.path.dirname(os.path.abspath(path)))

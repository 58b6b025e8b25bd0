"""Command-line front end: ``horbit <subcommand> [--config PATH] [--seed N] [--out DIR] [--budget N]``.

Every experiment is described by a JSON config.  Without ``--config`` the
packaged default for the subcommand is used.  Results go to stdout and, with
``--out``, to a file in that directory.  Exit status is 0 on success, 2 when
a tolerance check fails and 1 on any error.
"""

import argparse
import json
import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.stats import special_ortho_group

from . import lie
from . import matrix_core as mc
from .cocycles import (OrbitalCochain, PhiCochain, TauCochain,
                       cyclicity_defect, hochschild_defect, orbital_integral, phi_px, tau_ax)
from .deformation import (CSV_HEADER, convergence_table, final_within_errors,
                          monotone_within_errors, trace_limit_check)
from .errors import HorbitError, InvalidInputError
from .motion import motion_preset
from .quadrature import IntegrationScheme, cyclic_elements, rotation2, rotation_x
from .testfunctions import CompactPolynomial, DeformationFunction, TestFunction

COMMANDS = ("decompose", "orbital", "higher-orbital", "cocycle-check", "cyclic-check",
            "deform-limit", "trace-limit", "selftest")

DEFAULT_CONFIGS = {
    "decompose": "decompose_sl3r.json",
    "orbital": "orbital_sl2r.json",
    "higher-orbital": "higher_orbital_finitecyclic.json",
    "cocycle-check": "cocycle_finitecyclic.json",
    "cyclic-check": "cyclic_finitecyclic.json",
    "deform-limit": "deform_limit_sl2r.json",
    "trace-limit": "trace_limit_sl2r.json",
}

REDUCTIVE = ("SL2R", "SL3R")
MOTION = ("FiniteCyclic", "SE2", "SE3", "CartanMotion")


class ConfigError(InvalidInputError):
    def __init__(self, field, message):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


# ---------------------------------------------------------------- config parsing

def default_config_path(command):
    return resources.files("horbit").joinpath("configs", DEFAULT_CONFIGS[command])


def load_config(path=None, command=None):
    if path is None:
        text = default_config_path(command).read_text()
    else:
        text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("<file>", "top level must be an object")
    return cfg


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(key, "missing")
    return cfg[key]


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment description."""
    raw: dict
    preset_name: str
    preset_params: dict
    scheme: IntegrationScheme

    @property
    def reductive(self):
        return self.preset_name in REDUCTIVE

    def group(self):
        return lie.load_preset(self.preset_name)

    def motion(self):
        return motion_preset(self.preset_name, **self.preset_params)

    def space(self):
        return self.group() if self.reductive else self.motion()


def parse_scheme(d, field="scheme", seed=None, budget=None):
    if not isinstance(d, dict):
        raise ConfigError(field, "must be an object")
    d = dict(d)
    if budget is not None:
        d["budget"] = budget
    if seed is not None:
        d["seed"] = seed
    for key in ("budget", "nodes", "batches"):
        if key in d and (not isinstance(d[key], int) or d[key] <= 0):
            raise ConfigError(f"{field}.{key}", f"must be a positive integer, got {d[key]!r}")
    if "seed" in d and (not isinstance(d["seed"], int) or d["seed"] < 0):
        raise ConfigError(f"{field}.seed", "must be a non-negative integer")
    allowed = {"kind", "budget", "nodes", "seed", "batches"}
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{field}.{sorted(extra)[0]}", "unknown key")
    try:
        return IntegrationScheme(**d)
    except InvalidInputError as exc:
        raise ConfigError(f"{field}.kind", str(exc)) from None


def parse_run_config(cfg, seed=None, budget=None):
    preset = _require(cfg, "preset")
    if isinstance(preset, str):
        preset = {"name": preset}
    if not isinstance(preset, dict) or "name" not in preset:
        raise ConfigError("preset", "must be a name or an object with 'name'")
    name = preset["name"]
    if name not in REDUCTIVE + MOTION:
        raise ConfigError("preset.name", f"unknown preset {name!r}")
    params = {k: v for k, v in preset.items() if k != "name"}
    scheme = parse_scheme(cfg.get("scheme", {}), seed=seed, budget=budget)
    rc = RunConfig(cfg, name, params, scheme)
    try:
        rc.space()
    except HorbitError as exc:
        raise ConfigError("preset", str(exc)) from None
    return rc


def parse_t_grid(cfg):
    ts = _require(cfg, "t_grid")
    if not isinstance(ts, list) or not ts:
        raise ConfigError("t_grid", "must be a non-empty list")
    for t in ts:
        if not isinstance(t, (int, float)) or not t > 0:
            raise ConfigError("t_grid", f"entries must be positive, got {t!r}")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ConfigError("t_grid", "must be strictly decreasing")
    return [float(t) for t in ts]


def parse_x(rc, spec):
    """Element x: {'signs': [...]}, {'angle': theta}, {'power': j} or {'matrix': [[...]]}."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("x", "must be an object with exactly one of signs/angle/power/matrix")
    (kind, val), = spec.items()
    if kind == "matrix":
        return np.asarray(val, dtype=float)
    if kind == "signs":
        return np.diag(np.asarray(val, dtype=float))
    if kind == "angle":
        if rc.preset_name in ("SL2R", "SE2"):
            return rotation2(float(val))
        if rc.preset_name == "SE3":
            return rotation_x(float(val))
        raise ConfigError("x.angle", f"not available for {rc.preset_name}")
    if kind == "power":
        if rc.preset_name != "FiniteCyclic":
            raise ConfigError("x.power", "only for FiniteCyclic")
        return cyclic_elements(int(rc.preset_params.get("m", 3)))[int(val) % int(rc.preset_params.get("m", 3))]
    raise ConfigError(f"x.{kind}", "unknown x specification")


def parse_function(rc, d, domain, i):
    field = f"functions[{i}]"
    if not isinstance(d, dict):
        raise ConfigError(field, "must be an object")
    compact = CompactPolynomial.from_config(d.get("compact", [[1.0, []]]))
    center = np.asarray(_require_f(d, "center", field), dtype=float)
    radius = float(_require_f(d, "radius", field))
    if not radius > 0:
        raise ConfigError(f"{field}.radius", "must be positive")
    space = rc.space()
    dim = space.dim_p if rc.reductive else space.dim_V
    if center.shape != (dim,):
        raise ConfigError(f"{field}.center", f"must have length {dim}")
    if domain == "deformation":
        return DeformationFunction(compact, center, radius, space)
    if domain == "group":
        return TestFunction(compact, center, radius, "group", space)
    return TestFunction(compact, center, radius, "motion")


def _require_f(d, key, field):
    if key not in d:
        raise ConfigError(f"{field}.{key}", "missing")
    return d[key]


def parse_functions(rc, cfg, domain, count=None):
    fs = _require(cfg, "functions")
    if not isinstance(fs, list):
        raise ConfigError("functions", "must be a list")
    if count is not None and len(fs) != count:
        raise ConfigError("functions", f"expected {count} functions, got {len(fs)}")
    return [parse_function(rc, d, domain, i) for i, d in enumerate(fs)]


def _nodes(cfg):
    nodes = cfg.get("nodes")
    if nodes is None:
        return None
    if not isinstance(nodes, dict):
        raise ConfigError("nodes", "must be an object mapping factor names to node counts")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in nodes.items()}


def _tolerance(cfg, key, default):
    tol = cfg.get("tolerance", {})
    val = tol.get(key, default)
    if not isinstance(val, (int, float)) or val <= 0:
        raise ConfigError(f"tolerance.{key}", "must be positive")
    return float(val)


# ---------------------------------------------------------------- formatting

def fmt(v):
    return repr(float(v))


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _matrix(m):
    return [[float(v) for v in row] for row in np.asarray(m)]


# ---------------------------------------------------------------- subcommands

def random_group_elements(n, count, seed, scale=1.0):
    """k exp(X) with k Haar-random in SO(n) and X Gaussian in p of the given scale."""
    rng = np.random.default_rng(seed)
    k = special_ortho_group.rvs(n, size=count, random_state=rng).reshape(count, n, n)
    A = rng.normal(size=(count, n, n)) * scale
    X = 0.5 * (A + np.swapaxes(A, -1, -2))
    X = X - np.trace(X, axis1=-2, axis2=-1)[:, None, None] * np.eye(n) / n
    return k @ mc.mat_exp(X)


def decomposition_errors(g, group):
    """Max relative round-trip errors of the Cartan, Iwasawa and KAK factorizations."""
    scale = np.abs(g).max(axis=(-2, -1))
    k, X = lie.cartan_decompose(g)
    cart = np.abs(k @ mc.mat_exp(X) - g).max(axis=(-2, -1)) / scale
    iw = lie.iwasawa_decompose(g, group)
    iwa = np.abs(iw.reconstruct() - g).max(axis=(-2, -1)) / scale
    k1, H, k2 = lie.kak_decompose(g, group)
    kak = np.abs(k1 @ mc.mat_exp(H) @ k2 - g).max(axis=(-2, -1)) / scale
    return {"cartan": float(cart.max()), "iwasawa": float(iwa.max()), "kak": float(kak.max())}


def cmd_decompose(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    if not rc.reductive:
        raise ConfigError("preset.name", "decompose needs SL2R or SL3R")
    group = rc.group()
    tol = _tolerance(cfg, "absolute", 1e-10)
    out = {"preset": group.name}
    if "matrices" in cfg:
        g = np.asarray(cfg["matrices"], dtype=float)
        if g.ndim != 3 or g.shape[1:] != (group.n, group.n):
            raise ConfigError("matrices", f"must be a list of {group.n}x{group.n} matrices")
        for i, gi in enumerate(g):
            if abs(np.linalg.det(gi) - 1.0) > 1e-8:
                raise ConfigError(f"matrices[{i}]", "determinant is not 1")
        k, X = lie.cartan_decompose(g)
        iw = lie.iwasawa_decompose(g, group)
        k1, H, k2 = lie.kak_decompose(g, group)
        out["elements"] = [{
            "cartan": {"k": _matrix(k[i]), "X": _matrix(X[i])},
            "iwasawa": {"kappa": _matrix(iw.kappa[i]), "mu": _matrix(iw.mu[i]),
                        "H": [float(v) for v in iw.H_coords[i]], "n": _matrix(iw.n_part[i])},
            "kak": {"k1": _matrix(k1[i]), "H": [float(v) for v in group.a_coords(H[i])],
                    "k2": _matrix(k2[i])},
        } for i in range(len(g))]
    else:
        r = cfg.get("random", {})
        count = r.get("count", 1000)
        if not isinstance(count, int) or count <= 0:
            raise ConfigError("random.count", "must be a positive integer")
        seed = args.seed if args.seed is not None else int(r.get("seed", 0))
        g = random_group_elements(group.n, count, seed, float(r.get("scale", 1.0)))
        out["count"] = count
    errs = decomposition_errors(g, group)
    out["maxError"] = errs
    out["tolerance"] = tol
    out["pass"] = all(e <= tol for e in errs.values())
    return dumps(out), "json", out["pass"]


def cmd_orbital(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    if rc.preset_name != "SL2R":
        raise ConfigError("preset.name", "orbital integrals are implemented on SL2R")
    x = parse_x(rc, _require(cfg, "x"))
    f, = parse_functions(rc, cfg, "group", 1)
    est = orbital_integral(rc.group(), x, f, rc.scheme, _nodes(cfg))
    return dumps({"preset": rc.preset_name, **est.to_dict()}), "json", True


def cmd_higher_orbital(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    x = parse_x(rc, _require(cfg, "x"))
    if rc.reductive:
        group = rc.group()
        fs = parse_functions(rc, cfg, "group", group.dim_a + 1)
        ev = phi_px(group, x, fs, rc.scheme, _nodes(cfg))
    else:
        preset = rc.motion()
        fs = parse_functions(rc, cfg, "motion", preset.n + 1)
        ev = tau_ax(preset, x, fs, rc.scheme, _nodes(cfg))
    return dumps({"preset": rc.preset_name, "degree": ev.degree, **ev.to_dict()}), "json", True


def _cochain(rc, cfg, x):
    conv = parse_scheme(cfg.get("convolution_scheme", {"kind": "tensor", "nodes": 8}),
                        "convolution_scheme")
    kind = cfg.get("cochain")
    nodes = _nodes(cfg)
    if kind == "orbital":
        if rc.preset_name != "SL2R":
            raise ConfigError("cochain", "the orbital cochain is implemented on SL2R")
        return OrbitalCochain(rc.group(), x, conv, nodes), "group"
    if kind not in (None, "higher"):
        raise ConfigError("cochain", f"unknown cochain {kind!r}")
    if rc.reductive:
        return PhiCochain(rc.group(), x, conv, nodes), "group"
    return TauCochain(rc.motion(), x, conv, nodes), "motion"


def _defect_report(rc, defect, cfg):
    scale = max(abs(t.value) for t in defect.terms)
    if rc.scheme.deterministic:
        tol = _tolerance(cfg, "relative", 1e-6)
        ok = abs(defect.value) <= tol * scale
        rule = {"relative": tol}
    else:
        k = _tolerance(cfg, "sigma", 3.0)
        ok = abs(defect.value) <= k * defect.std_error
        rule = {"sigma": k}
    out = {"preset": rc.preset_name, "defect": _estimate_dict(defect),
           "terms": [_estimate_dict(t) for t in defect.terms],
           "maxTermMagnitude": scale, "tolerance": rule, "pass": bool(ok)}
    return dumps(out), "json", bool(ok)


def _estimate_dict(e):
    return {"value": float(e.value), "stdError": float(e.std_error), "samples": int(e.samples)}


def cmd_cocycle_check(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    x = parse_x(rc, _require(cfg, "x"))
    cochain, domain = _cochain(rc, cfg, x)
    fs = parse_functions(rc, cfg, domain, cochain.degree + 2)
    return _defect_report(rc, hochschild_defect(cochain, fs, rc.scheme), cfg)


def cmd_cyclic_check(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    x = parse_x(rc, _require(cfg, "x"))
    cochain, domain = _cochain(rc, cfg, x)
    fs = parse_functions(rc, cfg, domain, cochain.degree + 1)
    return _defect_report(rc, cyclicity_defect(cochain, fs, rc.scheme), cfg)


def _csv(rows):
    lines = [CSV_HEADER]
    lines += [",".join(fmt(v) for v in r.csv_fields()) for r in rows]
    return "\n".join(lines) + "\n"


def _rows_ok(rows, cfg):
    k = _tolerance(cfg, "sigma", 3.0)
    return monotone_within_errors(rows, k) and final_within_errors(rows, k)


def cmd_deform_limit(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    if not rc.reductive:
        raise ConfigError("preset.name", "deform-limit needs SL2R or SL3R")
    group = rc.group()
    x = parse_x(rc, _require(cfg, "x"))
    ts = parse_t_grid(cfg)
    fs = parse_functions(rc, cfg, "deformation", group.dim_a + 1)
    rows = convergence_table(ts, group, x, fs, rc.scheme, _nodes(cfg))
    return _csv(rows), "csv", _rows_ok(rows, cfg)


def cmd_trace_limit(cfg, args):
    rc = parse_run_config(cfg, args.seed, args.budget)
    if not rc.reductive:
        raise ConfigError("preset.name", "trace-limit needs a reductive preset")
    group = rc.group()
    x = parse_x(rc, _require(cfg, "x"))
    ts = parse_t_grid(cfg)
    f, = parse_functions(rc, cfg, "deformation", 1)
    rows = trace_limit_check(group, x, f, ts, rc.scheme, _nodes(cfg))
    return _csv(rows), "csv", _rows_ok(rows, cfg)


def selftest_checks():
    """Fast internal consistency checks; returns a list of (name, ok, detail)."""
    out = []
    for name in REDUCTIVE:
        group = lie.load_preset(name)
        g = random_group_elements(group.n, 200, 1, 1.0)
        errs = decomposition_errors(g, group)
        out.append((f"decompose {name}", max(errs.values()) <= 1e-10, errs))
        jp = lie.j_phi(group)
        want = 2.0 ** (-0.5) if group.n == 2 else 2.0 ** (-1.5)
        out.append((f"J_phi {name}", abs(jp - want) <= 1e-12, jp))
        X = group.p_matrix(np.linspace(-0.4, 0.5, group.dim_p))
        # ad_X^2 on p has eigenvalues (lambda_i - lambda_j)^2, i < j
        lam = np.linalg.eigvalsh(X)
        gaps = [abs(a - b) for i, a in enumerate(lam) for b in lam[i + 1:]]
        direct = float(np.prod([math.sinh(e) / e if e > 1e-12 else 1.0 for e in gaps]))
        out.append((f"J series {name}", abs(group.jacobian_J(X) - direct) <= 1e-10 * direct,
                    float(group.jacobian_J(X))))
    P = motion_preset("FiniteCyclic", m=3)
    f0 = TestFunction(CompactPolynomial.constant(), [0.2, 0.1, 0.0], 0.8)
    f1 = TestFunction(CompactPolynomial.constant(), [-0.1, 0.0, 0.2], 0.7)
    sc = IntegrationScheme(kind="tensor", nodes=8)
    d = cyclicity_defect(TauCochain(P, cyclic_elements(3)[1], sc,
                                    {"v1": (16, 16, 4), "w": (16, 4)}), [f0, f1], sc)
    scale = max(abs(t.value) for t in d.terms)
    out.append(("tau cyclicity FiniteCyclic(3)", abs(d.value) <= 1e-5 * scale,
                {"defect": float(d.value), "maxTerm": float(scale)}))
    return out


def cmd_selftest(cfg, args):
    checks = selftest_checks()
    lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in checks]
    return "\n".join(lines) + "\n", "txt", all(ok for _, ok, _ in checks)


HANDLERS = {
    "decompose": cmd_decompose,
    "orbital": cmd_orbital,
    "higher-orbital": cmd_higher_orbital,
    "cocycle-check": cmd_cocycle_check,
    "cyclic-check": cmd_cyclic_check,
    "deform-limit": cmd_deform_limit,
    "trace-limit": cmd_trace_limit,
    "selftest": cmd_selftest,
}


def run(command, cfg, args):
    """Run a subcommand on a parsed config; returns (text, extension, passed)."""
    return HANDLERS[command](cfg, args)


def build_parser():
    p = argparse.ArgumentParser(prog="horbit", description="Higher orbital integrals and their deformation limits.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment config (default: packaged config)")
        s.add_argument("--seed", type=int, help="override the scheme seed")
        s.add_argument("--out", help="directory for the result file")
        s.add_argument("--budget", type=int, help="override the scheme budget")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = {} if args.command == "selftest" else load_config(args.config, args.command)
        if args.budget is not None and args.budget <= 0:
            raise ConfigError("--budget", f"must be positive, got {args.budget}")
        text, ext, ok = run(args.command, cfg, args)
        sys.stdout.write(text)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            name = cfg.get("output") or f"{args.command}.{ext}"
            (out / name).write_text(text)
    except (HorbitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not ok:
        print("tolerance check failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

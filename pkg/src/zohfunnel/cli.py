"""Command-line front end.

Subcommands:
  design    derive the certified gain/sampling-period block from a config
  simulate  run the sampled closed loop and write trace.csv + certificate
  verify    re-check a written trace against its certificate
  sweep     grid-sweep config entries and tabulate feasibility per point

The controller section may pin beta and tau explicitly; otherwise the
derived gain and the certified sampling-period bound are used. Operating
points outside the certified regime (gain below the derived minimum, or
tau above tau_max) are rejected unless --unsafe is given.

Exit codes: 0 success/feasible, 2 infeasible (design or run or failed
verification), 3 configuration error (including uncertified operating
points without --unsafe and command-line usage errors), 4 numerical blowup.
"""

import argparse
import csv
import io
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import __version__
from .controller import ControlLawConfig
from .design import WorstCaseBounds, design_for_linear_plant, explain_tau
from .exceptions import ConfigError, FunnelViolation, InfeasibleDesign, NumericalBlowup
from .plant import LinearIOPlant, mass_on_car
from .signals import ConstantFunnel, ConstantReference, ExponentialFunnel, SinusoidReference
from .sim import SimConfig, simulate
from .traceio import (certificate_mapping, params_from_certificate,
                      read_certificate, read_trace, write_certificate, write_trace)
from .verify import check_trace

_SECTIONS = ("plant", "reference", "funnel", "controller", "simulation", "design", "output")


def _require_mapping(spec, where: str) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(spec).__name__}")
    return spec


def _known_keys(spec: dict, where: str, allowed) -> None:
    unknown = sorted(set(spec) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


def _num(spec: dict, where: str, key: str, default=None) -> float:
    if key not in spec:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return float(default)
    value = spec[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    cfg = _require_mapping(cfg, str(path))
    _known_keys(cfg, str(path), _SECTIONS)
    for section in ("plant", "reference", "funnel", "controller"):
        if section not in cfg:
            raise ConfigError(f"{path}: missing required section '{section}'")
    return cfg


def build_plant(spec):
    spec = _require_mapping(spec, "plant")
    kind = spec.get("kind")
    if kind == "mass_on_car":
        _known_keys(spec, "plant", ("kind", "m1", "m2", "k", "d", "theta"))
        try:
            return mass_on_car(
                m1=_num(spec, "plant", "m1", 4.0),
                m2=_num(spec, "plant", "m2", 1.0),
                k=_num(spec, "plant", "k", 2.0),
                d=_num(spec, "plant", "d", 1.0),
                theta=_num(spec, "plant", "theta", np.pi / 4),
            )
        except ValueError as exc:
            raise ConfigError(f"plant: {exc}") from None
    if kind == "linear":
        _known_keys(spec, "plant", ("kind", "R0", "R1", "S", "Gamma", "Q", "P", "eta0"))
        for key in ("R0", "R1", "S", "Gamma", "Q", "P"):
            if key not in spec:
                raise ConfigError(f"plant.{key}: required for kind 'linear'")
        try:
            return LinearIOPlant(
                R0=np.asarray(spec["R0"], dtype=float),
                R1=np.asarray(spec["R1"], dtype=float),
                S=np.asarray(spec["S"], dtype=float),
                Gamma=np.asarray(spec["Gamma"], dtype=float),
                Q=np.asarray(spec["Q"], dtype=float),
                P=np.asarray(spec["P"], dtype=float),
                eta0=None if spec.get("eta0") is None else np.asarray(spec["eta0"], dtype=float),
            )
        except ValueError as exc:
            raise ConfigError(f"plant: {exc}") from None
    raise ConfigError(f"plant.kind: expected 'mass_on_car' or 'linear', got {kind!r}")


def build_reference(spec):
    spec = _require_mapping(spec, "reference")
    kind = spec.get("kind")
    if kind == "sinusoid":
        _known_keys(spec, "reference", ("kind", "channels"))
        if "channels" not in spec:
            raise ConfigError("reference.channels: required for kind 'sinusoid'")
        try:
            return SinusoidReference(spec["channels"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"reference.channels: {exc}") from None
    if kind == "constant":
        _known_keys(spec, "reference", ("kind", "values"))
        if "values" not in spec:
            raise ConfigError("reference.values: required for kind 'constant'")
        try:
            return ConstantReference(spec["values"])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"reference.values: {exc}") from None
    raise ConfigError(f"reference.kind: expected 'sinusoid' or 'constant', got {kind!r}")


def build_funnel(spec):
    spec = _require_mapping(spec, "funnel")
    kind = spec.get("kind")
    try:
        if kind == "constant":
            _known_keys(spec, "funnel", ("kind", "width"))
            return ConstantFunnel(_num(spec, "funnel", "width"))
        if kind == "exponential":
            _known_keys(spec, "funnel", ("kind", "a", "b", "c"))
            return ExponentialFunnel(
                a=_num(spec, "funnel", "a"),
                b=_num(spec, "funnel", "b"),
                c=_num(spec, "funnel", "c"),
            )
    except ValueError as exc:
        raise ConfigError(f"funnel: {exc}") from None
    raise ConfigError(f"funnel.kind: expected 'constant' or 'exponential', got {kind!r}")


class _Resolved:
    """Everything needed to run: built objects, design block, flags."""

    def __init__(self, plant, reference, funnel, law, params, tau, certified_beta, tau_certified):
        self.plant = plant
        self.reference = reference
        self.funnel = funnel
        self.law = law
        self.params = params
        self.tau = tau
        self.certified_beta = certified_beta
        self.tau_certified = tau_certified


def resolve_config(cfg: dict, unsafe: bool = False, variant: str = None,
                   need_tau: bool = True) -> _Resolved:
    """Build the experiment and derive/override the design block.

    controller.beta and controller.tau are optional overrides; absent, the
    derived gain and the certified tau_max are used. Operating points
    outside the certified regime require --unsafe (a config inconsistency
    otherwise, per the override rules).
    """
    plant = build_plant(cfg["plant"])
    reference = build_reference(cfg["reference"])
    funnel = build_funnel(cfg["funnel"])
    if reference.dim != plant.output_dim:
        raise ConfigError(
            f"reference: dimension {reference.dim} does not match plant output dimension {plant.output_dim}"
        )

    cspec = _require_mapping(cfg["controller"], "controller")
    _known_keys(cspec, "controller", ("lambda", "variant", "beta", "tau"))
    lam = _num(cspec, "controller", "lambda", 0.7)
    variant = variant or str(cspec.get("variant", "free"))
    beta_override = None if "beta" not in cspec else _num(cspec, "controller", "beta")
    tau_override = None if "tau" not in cspec else _num(cspec, "controller", "tau")

    dspec = _require_mapping(cfg.get("design", {}) or {}, "design")
    _known_keys(dspec, "design", ("beta_margin", "e1_initial_norm", "f_max", "g_max", "g_min"))
    beta_margin = _num(dspec, "design", "beta_margin", 1.01)
    bounds_keys = [k for k in ("f_max", "g_max", "g_min") if k in dspec]
    bounds_override = None
    if bounds_keys:
        if len(bounds_keys) != 3:
            raise ConfigError("design: bounds override needs all of f_max, g_max, g_min")
        try:
            bounds_override = WorstCaseBounds(
                f_max=_num(dspec, "design", "f_max"),
                g_max=_num(dspec, "design", "g_max"),
                g_min=_num(dspec, "design", "g_min"),
            )
        except ValueError as exc:
            raise ConfigError(f"design: {exc}") from None

    e1_init = None
    if "e1_initial_norm" in dspec:
        e1_init = _num(dspec, "design", "e1_initial_norm")
    elif isinstance(cfg.get("simulation"), dict) and cfg["simulation"].get("y0") is not None:
        y0 = np.asarray(cfg["simulation"]["y0"], dtype=float)
        yr0, _, _ = reference.eval(0.0)
        phi0, _ = funnel.eval(0.0)
        e1_init = float(phi0 * np.linalg.norm(y0 - yr0))
    if e1_init is None:
        e1_init = 0.0

    def derive(b_override, allow_infeasible):
        try:
            return design_for_linear_plant(
                plant, reference, funnel, lam=lam, beta_margin=beta_margin,
                e1_initial_norm=e1_init, bounds_override=bounds_override,
                beta_override=b_override, allow_infeasible_tau=allow_infeasible,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    derived = derive(None, True)
    certified_beta = True
    params = derived
    if beta_override is not None and beta_override != derived.beta:
        certified_beta = beta_override >= derived.beta
        if not certified_beta and not unsafe:
            raise ConfigError(
                f"controller.beta: {beta_override:g} is below the certified minimum "
                f"{derived.beta:g}; pass --unsafe to force it"
            )
        params = derive(beta_override, unsafe or certified_beta)

    tau = tau_override
    tau_certified = certified_beta and params.tau_max > 0
    if tau is None:
        if need_tau:
            if not tau_certified:
                raise ConfigError(
                    "controller.tau: required, because no sampling period is certified "
                    "at this operating point"
                )
            tau = params.tau_max
    else:
        tau_certified = tau_certified and tau <= params.tau_max
        if not tau_certified and not unsafe:
            raise ConfigError(
                f"controller.tau: {tau:g} exceeds the certified maximum {params.tau_max:g}; "
                f"pass --unsafe to force it"
            )

    try:
        law = ControlLawConfig(beta=params.beta, lam=lam, variant=variant)
    except ValueError as exc:
        raise ConfigError(f"controller: {exc}") from None
    return _Resolved(plant, reference, funnel, law, params, tau, certified_beta, tau_certified)


def build_simconfig(cfg: dict, tau: float) -> SimConfig:
    if "simulation" not in cfg:
        raise ConfigError("missing required section 'simulation'")
    spec = _require_mapping(cfg["simulation"], "simulation")
    _known_keys(spec, "simulation",
                ("horizon", "substeps", "record_stride", "backend", "y0", "ydot0"))
    try:
        return SimConfig(
            tau=tau,
            horizon=_num(spec, "simulation", "horizon"),
            substeps=int(spec.get("substeps", 20)),
            record_stride=int(spec.get("record_stride", 1)),
            backend=str(spec.get("backend", "auto")),
            y0=None if spec.get("y0") is None else np.asarray(spec["y0"], dtype=float),
            ydot0=None if spec.get("ydot0") is None else np.asarray(spec["ydot0"], dtype=float),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"simulation: {exc}") from None


def _output_paths(cfg: dict) -> dict:
    spec = _require_mapping(cfg.get("output", {}) or {}, "output")
    _known_keys(spec, "output", ("trace", "certificate", "report"))
    return {k: str(v) for k, v in spec.items()}


def _spec_blocks(cfg: dict) -> dict:
    blocks = {}
    for section in ("plant", "reference", "funnel", "controller", "simulation"):
        if section in cfg:
            blocks[section] = json.loads(json.dumps(cfg[section]))
    return blocks


def _print_params(params) -> None:
    order = ("xi", "eps1", "gamma_bar", "kappa0", "eps_hat", "e_hat", "beta",
             "f_tilde", "kappa1", "lam", "tau_max", "m_phi", "f_max", "g_max", "g_min")
    for key in order:
        print(f"{key:<10} = {getattr(params, key):.10g}")
    print()
    print(explain_tau(params).render())


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    res = resolve_config(cfg, unsafe=args.unsafe, need_tau=False)
    _print_params(res.params)
    if not res.certified_beta:
        print(f"note: beta = {res.params.beta:g} is a forced override, not the derived gain")
    if res.params.tau_max <= 0:
        print("note: no positive sampling period is certified at this operating point")
    elif res.tau is not None and res.tau != res.params.tau_max:
        status = "within" if res.tau_certified else "OUTSIDE"
        print(f"note: configured tau = {res.tau:g} is {status} the certified budget {res.params.tau_max:g}")
    if args.out:
        cert = certificate_mapping(res.params, certified_beta=res.certified_beta,
                                   package_version=__version__, **_spec_blocks(cfg))
        if res.tau is not None:
            cert["tau"] = res.tau
            cert["tau_certified"] = res.tau_certified
        write_certificate(args.out, cert)
        print(f"certificate written to {args.out}")
    return 0


def _summary_line(trace, report=None) -> str:
    status = "feasible" if trace.feasible else f"left the funnel at t = {trace.violation_time:.6g}"
    bits = [
        f"{status}",
        f"samples = {len(trace.sample_t)}",
        f"backend = {trace.backend}",
    ]
    if report is not None:
        bits.insert(1, f"max phi*||e|| = {report.funnel_margin:.4g}")
        bits.insert(2, f"max ||u|| = {report.input_max:.4g}")
    return "  ".join(bits)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    res = resolve_config(cfg, unsafe=args.unsafe, variant=args.variant)
    sim_cfg = build_simconfig(cfg, res.tau)
    out = args.out or _output_paths(cfg).get("trace", "trace.csv")
    cert_path = args.cert or _output_paths(cfg).get("certificate") or os.path.splitext(out)[0] + ".cert"

    trace = simulate(res.plant, res.reference, res.funnel, res.law, sim_cfg)
    write_trace(out, trace)
    report = check_trace(trace, res.funnel, res.reference, res.params, gain=res.law.gain)
    cert = certificate_mapping(
        res.params,
        certified_beta=res.certified_beta,
        tau=sim_cfg.tau, horizon=sim_cfg.horizon, substeps=sim_cfg.substeps,
        record_stride=sim_cfg.record_stride, backend=trace.backend,
        variant=res.law.variant.value, tau_certified=res.tau_certified,
        feasible=trace.feasible, violation_time=trace.violation_time,
        package_version=__version__, **_spec_blocks(cfg),
    )
    write_certificate(cert_path, cert)
    print(_summary_line(trace, report))
    print(f"trace written to {out}, certificate to {cert_path}")
    return 0 if trace.feasible else 2


def cmd_verify(args) -> int:
    cert = read_certificate(args.cert)
    params = params_from_certificate(cert)
    for key in ("funnel", "reference", "tau"):
        if key not in cert:
            raise ConfigError(f"{args.cert}: certificate lacks '{key}', cannot verify")
    funnel = build_funnel(cert["funnel"])
    reference = build_reference(cert["reference"])
    try:
        trace = read_trace(
            args.trace, tau=float(cert["tau"]),
            variant=str(cert.get("variant", "free")),
            feasible=cert.get("feasible"), violation_time=cert.get("violation_time"),
        )
    except FileNotFoundError:
        raise ConfigError(f"trace file not found: {args.trace}") from None
    report = check_trace(trace, funnel, reference, params)
    for line in report.summary_lines():
        print(line)
    if args.report:
        write_certificate(args.report, report.as_dict())
        print(f"report written to {args.report}")
    return 0 if report.passed else 2


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        nxt = node.get(key)
        if not isinstance(nxt, dict):
            nxt = {}
            node[key] = nxt
        node = nxt
    node[keys[-1]] = value


def _parse_grid(specs) -> list:
    axes = []
    for spec in specs:
        name, sep, values = spec.partition("=")
        if not sep or not name or not values:
            raise ConfigError(f"--grid expects name=v1,v2,..., got {spec!r}")
        parsed = []
        for chunk in values.split(","):
            if chunk == "":
                raise ConfigError(f"--grid {name}: empty value in {values!r}")
            parsed.append(yaml.safe_load(chunk))
        axes.append((name, parsed))
    return axes


_SWEEP_COLS = ("status", "feasible", "funnel_margin", "e2_sample_max",
               "input_max", "beta", "tau", "tau_max", "violation_time")


def _sweep_point(base_cfg: dict, names, values, unsafe: bool, variant) -> dict:
    cfg = json.loads(json.dumps(base_cfg))
    for name, value in zip(names, values):
        _set_path(cfg, name, value)
    row = {name: value for name, value in zip(names, values)}
    row.update({col: "" for col in _SWEEP_COLS})
    try:
        res = resolve_config(cfg, unsafe=unsafe, variant=variant)
        sim_cfg = build_simconfig(cfg, res.tau)
        row.update(beta=res.params.beta, tau=sim_cfg.tau, tau_max=res.params.tau_max)
        trace = simulate(res.plant, res.reference, res.funnel, res.law, sim_cfg)
        report = check_trace(trace, res.funnel, res.reference, res.params, gain=res.law.gain)
        row.update(
            status="ok" if trace.feasible else "violated",
            feasible=trace.feasible,
            funnel_margin=f"{report.funnel_margin:.10g}",
            e2_sample_max=f"{report.e2_sample_max:.10g}",
            input_max=f"{report.input_max:.10g}",
            violation_time="" if trace.violation_time is None else f"{trace.violation_time:.10g}",
        )
    except (ConfigError, InfeasibleDesign, FunnelViolation, NumericalBlowup) as exc:
        kind = "blowup" if isinstance(exc, NumericalBlowup) else "error"
        row.update(status=f"{kind}: {exc}")
    return row


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    axes = _parse_grid(args.grid)
    if not axes:
        raise ConfigError("sweep: at least one --grid axis is required")
    names = [name for name, _ in axes]
    combos = list(itertools.product(*(values for _, values in axes)))

    workers = int(os.environ.get("ZOHFUNNEL_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, itertools.repeat(cfg), itertools.repeat(names),
                                 combos, itertools.repeat(args.unsafe), itertools.repeat(args.variant)))
    else:
        rows = [_sweep_point(cfg, names, combo, args.unsafe, args.variant) for combo in combos]

    header = names + list(_SWEEP_COLS)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row.get(col, "") for col in header])  # quotes error messages with commas
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        ok = sum(1 for row in rows if row["status"] == "ok")
        print(f"{len(rows)} points swept, {ok} feasible; table written to {args.out}")
    else:
        print(text, end="")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage problems are configuration problems: exit 3, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(3, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="zohfunnel",
        description="Sampled-data funnel tracking: design, simulate, verify.",
    )
    parser.add_argument("--version", action="version", version=f"zohfunnel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", help="derive gain and sampling-period certificate")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--out", help="write certificate to this path")
    p.add_argument("--unsafe", action="store_true",
                   help="accept operating points outside the certified regime")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="run the closed loop and record a trace")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--out", help="trace CSV path (default from output section, else trace.csv)")
    p.add_argument("--cert", help="certificate path (default: trace path with .cert)")
    p.add_argument("--variant", choices=("free", "deriv"),
                   help="override controller.variant from the config")
    p.add_argument("--unsafe", action="store_true",
                   help="run even when gain or sampling period is not certified")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="re-check a recorded trace against its certificate")
    p.add_argument("trace", help="trace CSV written by simulate")
    p.add_argument("cert", help="certificate written alongside the trace")
    p.add_argument("--report", help="also write the full report as JSON")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="grid-sweep config entries, one table row per point")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--grid", action="append", default=[], metavar="PATH=V1,V2,...",
                   help="dotted config path and comma-separated values; repeatable")
    p.add_argument("--out", help="write the sweep table CSV here (default: stdout)")
    p.add_argument("--variant", choices=("free", "deriv"),
                   help="override controller.variant from the config")
    p.add_argument("--unsafe", action="store_true",
                   help="simulate uncertified points instead of rejecting them")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except InfeasibleDesign as exc:
        print(f"design infeasible: {exc}", file=sys.stderr)
        return 2
    except FunnelViolation as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowup as exc:
        print(f"numerical blowup: {exc}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()

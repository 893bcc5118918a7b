"""Command-line front end: extract, qfactor, sweep, spar and fit.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
from datetime import datetime, timezone
import io
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from . import config as cfgmod
from .errors import CPWError, ConfigError, InputError, NumericalError
from .mtl import characteristic_impedance, parameterize_coupler
from .netsolver import find_pole, s_matrix
from .perturb import shift_and_q_matched, shift_general
from .resfit import PARAMS, UNITS, fit, pole_from_model, read_trace
from .xsection import CrossSection, PULMatrices, extract_matrices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def quantity(value, unit):
    """JSON leaf with units; non-finite values become null plus a flag."""
    if isinstance(value, complex):
        return {
            "re": quantity(value.real, unit)["value"],
            "im": quantity(value.imag, unit)["value"],
            "unit": unit,
        }
    value = float(value)
    if math.isfinite(value):
        return {"value": value, "unit": unit}
    return {"value": None, "unit": unit, "flag": "infinite" if value > 0 else "-infinite"}


def _matrix(M, unit):
    return {"value": np.asarray(M, dtype=float).tolist(), "unit": unit}


def _line_impedance(cpw, mat):
    w, s = cpw
    pul = extract_matrices(CrossSection.coplanar([w], [s, s]), mat)
    return float(characteristic_impedance(pul).Z[0, 0])


def _extract(cfg):
    pul = extract_matrices(cfg.cross_section, cfg.materials)
    order = [cfg.feedline_index, cfg.resonator_index]
    C = pul.C[np.ix_(order, order)]
    pul2 = PULMatrices.from_capacitance(C, pul.c_l, ("feedline", "resonator"))
    coupler = parameterize_coupler(pul2, cfg.l_c)
    if cfg.coupler_override:
        coupler = coupler.replace(**cfg.coupler_override)
    Z_f = _line_impedance(cfg.feedline_cpw, cfg.materials) if cfg.feedline_cpw else coupler.Z1
    Z_r = _line_impedance(cfg.resonator_cpw, cfg.materials) if cfg.resonator_cpw else coupler.Z2
    return pul2, coupler, Z_f, Z_r


def run_extract(cfg):
    pul, coupler, Z_f, Z_r = _extract(cfg)
    return {
        "matrices": {
            "names": list(pul.names),
            "C": _matrix(pul.C, "F/m"),
            "L": _matrix(pul.L, "H/m"),
            "lc_residual": quantity(pul.lc_residual(), "1"),
        },
        "c_l": quantity(pul.c_l, "m/s"),
        "coupler": {
            "kappa": quantity(coupler.kappa, "1"),
            "gamma": quantity(coupler.gamma, "1"),
            "Z1": quantity(coupler.Z1, "ohm"),
            "Z2": quantity(coupler.Z2, "ohm"),
            "l_c": quantity(coupler.l_c, "m"),
        },
        "lines": {"Z_f": quantity(Z_f, "ohm"), "Z_r": quantity(Z_r, "ohm")},
    }


def _network(cfg):
    pul, coupler, Z_f, Z_r = _extract(cfg)
    return cfg.network(coupler, Z_r, Z_f)


def _rel(a, b):
    if not (math.isfinite(a) and math.isfinite(b)) or b == 0:
        return math.nan
    return (a - b) / b


def run_qfactor(cfg):
    out = run_extract(cfg)
    spec = _network(cfg)
    p = cfg.mode
    pole = find_pole(spec, p)
    pert = shift_general(spec, p)
    net = {
        "case": spec.case or "explicit",
        "Z_i": quantity(complex(spec.Z_i), "ohm"),
        "Z_o": quantity(complex(spec.Z_o), "ohm"),
        "Z_t1": quantity(complex(spec.Z_t1) if math.isfinite(abs(spec.Z_t1)) else math.inf, "ohm"),
        "Z_t2": quantity(complex(spec.Z_t2) if math.isfinite(abs(spec.Z_t2)) else math.inf, "ohm"),
        "total_length": quantity(spec.total_length, "m"),
        "mode": p,
        "f_r0": quantity(spec.zeroth_order_frequency(p), "Hz"),
    }
    numeric = {
        "f_p": quantity(complex(pole.f_p), "Hz"),
        "f_r": quantity(pole.f_r, "Hz"),
        "Q_l": quantity(pole.Q_l, "1"),
        "iterations": pole.iterations,
    }
    perturbative = {
        "method": "closed-form" if spec.case else "finite-difference",
        "delta_f": quantity(pert.delta_f, "Hz"),
        "f_r": quantity(pert.f_r, "Hz"),
        "Q_e": quantity(pert.Q_e, "1"),
        "orders": list(pert.orders),
    }
    agreement = {
        "Q_relative_deviation": quantity(_rel(pert.Q_e, pole.Q_l), "1"),
        "shift_relative_deviation": quantity(
            _rel(pert.delta_f, pole.f_r - spec.zeroth_order_frequency(p)), "1"
        ),
    }
    if spec.case and cfg.ports == "matched":
        m = shift_and_q_matched(spec, p)
        perturbative["matched_formula"] = {
            "delta_f": quantity(m.delta_f, "Hz"),
            "Q_e": quantity(m.Q_e, "1"),
        }
    out.update(network=net, numeric_pole=numeric, perturbative=perturbative, agreement=agreement)
    return out


def _sweep_point(args):
    raw, param, value = args
    cfg = cfgmod.parse(cfgmod.with_value(raw, param, value))
    rep = run_qfactor(cfg)
    return {
        "value": value,
        "kappa": rep["coupler"]["kappa"]["value"],
        "Z1": rep["coupler"]["Z1"]["value"],
        "Z2": rep["coupler"]["Z2"]["value"],
        "f_r": rep["numeric_pole"]["f_r"]["value"],
        "Q_l": rep["numeric_pole"]["Q_l"]["value"],
        "Q_e_perturbative": rep["perturbative"]["Q_e"]["value"],
        "delta_f_perturbative": rep["perturbative"]["delta_f"]["value"],
    }


SWEEP_UNITS = {
    "kappa": "1", "Z1": "ohm", "Z2": "ohm", "f_r": "Hz", "Q_l": "1",
    "Q_e_perturbative": "1", "delta_f_perturbative": "Hz",
}  # fmt: skip


def run_sweep(cfg, parallel=1):
    if cfg.sweep is None:
        raise ConfigError("missing required field", "sweep")
    sw = cfg.sweep
    values = cfgmod.sweep_values(sw)
    # validate the parameter path before dispatching work
    cfgmod.with_value(cfg.raw, sw["parameter"], values[0])
    jobs = [(cfg.raw, sw["parameter"], v) for v in values]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    return {"parameter": sw["parameter"], "units": SWEEP_UNITS, "points": rows}


def spar_frequencies(cfg, spec):
    sp = cfg.spar
    if "start_Hz" in sp:
        return np.linspace(sp["start_Hz"], sp["stop_Hz"], sp["count"])
    pole = find_pole(spec, cfg.mode)
    if math.isfinite(pole.Q_l):
        half = 0.5 * sp["span_linewidths"] * pole.f_r / pole.Q_l
    else:
        half = 0.05 * spec.free_spectral_range
    return np.linspace(pole.f_r - half, pole.f_r + half, sp["count"])


def run_spar(cfg):
    """S-parameters on a frequency grid, in the time convention of the fit model
    (complex conjugate of the network solution)."""
    spec = _network(cfg)
    freqs = spar_frequencies(cfg, spec)
    S = np.conj(np.array([s_matrix(spec, f) for f in freqs]))
    return freqs, S


def run_fit(path, trace_format="reim", header=None, conjugate=False):
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
    if not files:
        raise InputError(f"{path}: no trace files")
    records = []
    for p in files:
        f, s = read_trace(p, trace_format, header)
        res = fit(f, s, conjugate=conjugate)
        m = res.model
        pole = pole_from_model(m)
        records.append(
            {
                "trace": p.name,
                "parameters": {k: quantity(getattr(m, k), UNITS[k]) for k in PARAMS},
                "stderr": {k: quantity(res.stderr[k], UNITS[k]) for k in PARAMS},
                "covariance": {"order": list(PARAMS), "value": res.covariance.tolist()},
                "Q_i": quantity(m.Q_i, "1"),
                "Q_i_uncorrected": quantity(m.Q_i_uncorrected, "1"),
                "Q_i_convention": "1/Q_i = 1/Q_l - cos(phi)/Q_e; uncorrected drops cos(phi)",
                "pole": {
                    "f_p": quantity(pole.f_p, "Hz"),
                    "A": quantity(pole.A, "1"),
                    "B": quantity(pole.B, "Hz"),
                },
                "residual_rms": quantity(res.residual_rms, "1"),
                "conjugated": conjugate,
            }
        )
    return records


# ------------------------------------------------------------------ output


def _flatten(obj, prefix=""):
    """(key, value, unit) rows for a nested report."""
    rows = []
    if isinstance(obj, dict) and "unit" in obj and ("value" in obj or "re" in obj):
        if "re" in obj:
            rows.append((prefix + ".re", obj["re"], obj["unit"]))
            rows.append((prefix + ".im", obj["im"], obj["unit"]))
        else:
            rows.append((prefix, json.dumps(obj["value"]) if isinstance(obj["value"], list)
                         else obj["value"], obj["unit"]))  # fmt: skip
    elif isinstance(obj, dict):
        for k in sorted(obj):
            rows += _flatten(obj[k], f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        rows.append((prefix, json.dumps(obj), ""))
    else:
        rows.append((prefix, obj, ""))
    return rows


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def _json_text(command, results, cfg_raw=None):
    doc = {
        "command": command,
        "version": __version__,
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "results": results,
    }
    if cfg_raw is not None:
        doc["config"] = cfg_raw
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = cfgmod.load(args.config)
    if getattr(args, "mode", None) is not None:
        if args.mode < 1:
            raise ConfigError("must be >= 1", "--mode")
        raw = dict(cfg.raw, mode=args.mode)
        cfg = cfgmod.parse(raw)
    return cfg


def _cmd_report(args, runner):
    cfg = _load(args)
    results = runner(cfg)
    if args.format == "csv":
        return _csv_text(["field", "value", "unit"], _flatten(results))
    return _json_text(args.command, results, cfg.raw)


def _cmd_sweep(args):
    cfg = _load(args)
    results = run_sweep(cfg, args.parallel)
    if args.format == "csv":
        keys = ["value", *SWEEP_UNITS]
        return _csv_text(keys, ([row[k] for k in keys] for row in results["points"]))
    return _json_text("sweep", results, cfg.raw)


def _cmd_spar(args):
    cfg = _load(args)
    freqs, S = run_spar(cfg)
    if args.format == "csv":
        return _csv_text(
            ["f_Hz", "re_S21", "im_S21"],
            ((float(f), float(s.real), float(s.imag)) for f, s in zip(freqs, S[:, 1, 0])),
        )
    points = [
        {"f_Hz": float(f), "S11": [float(m[0, 0].real), float(m[0, 0].imag)],
         "S21": [float(m[1, 0].real), float(m[1, 0].imag)]}
        for f, m in zip(freqs, S)
    ]  # fmt: skip
    return _json_text("spar", {"points": points, "units": {"f_Hz": "Hz", "S": "1"}}, cfg.raw)


def _cmd_fit(args):
    header = {"auto": None, "yes": True, "no": False}[args.header]
    records = run_fit(args.trace, args.trace_format, header, args.conjugate)
    if args.format == "csv":
        keys = ["trace", *PARAMS, "Q_i", "Q_i_uncorrected"]
        rows = []
        for r in records:
            vals = [r["trace"]] + [r["parameters"][k]["value"] for k in PARAMS]
            rows.append(vals + [r["Q_i"]["value"], r["Q_i_uncorrected"]["value"]])
        return _csv_text(keys, rows)
    return _json_text("fit", records if Path(args.trace).is_dir() else records[0])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cpwq", description="Coplanar-waveguide resonator coupling and quality factors."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="design JSON (lengths in um)")
            p.add_argument("--mode", type=int, help="mode number p (overrides config)")
        p.add_argument("--out", help="write here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    common(sub.add_parser("extract", help="per-unit-length matrices and coupler parameters"))
    common(sub.add_parser("qfactor", help="numeric pole and perturbative Q side by side"))
    p = sub.add_parser("sweep", help="qfactor over the config's sweep range")
    common(p)
    p.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes")
    common(sub.add_parser("spar", help="S-parameter trace around the resonance"))
    p = sub.add_parser("fit", help="fit the notch model to S21 trace(s)")
    common(p, config=False)
    p.add_argument("trace", help="trace file, or a directory for batch mode")
    p.add_argument("--trace-format", choices=("reim", "magphase"), default="reim")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto")
    p.add_argument(
        "--conjugate", action="store_true", help="trace uses the exp(-i w t) convention"
    )
    return parser


COMMANDS = {
    "extract": lambda a: _cmd_report(a, run_extract),
    "qfactor": lambda a: _cmd_report(a, run_qfactor),
    "sweep": _cmd_sweep,
    "spar": _cmd_spar,
    "fit": _cmd_fit,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _emit(COMMANDS[args.command](args), args.out)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CPWError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

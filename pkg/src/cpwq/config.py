"""JSON design configuration: parsing, validation and conversion to model objects.

Lengths in the document are in micrometres, impedances in ohms, frequencies
in hertz.  Validation errors carry the dotted path of the offending field.
"""
import copy
from dataclasses import dataclass
import json
import math
from pathlib import Path
import re

import numpy as np

from .errors import ConfigError
from .materials import Materials
from .netsolver import TERMINATIONS, NetworkSpec
from .xsection import CrossSection

UM = 1e-6
ROLES = ("feedline", "resonator", "ground")


@dataclass(frozen=True)
class DesignConfig:
    raw: dict
    materials: Materials
    cross_section: CrossSection
    feedline_index: int  # position among the signal conductors
    resonator_index: int
    feedline_cpw: tuple  # (w, s) [m] or None
    resonator_cpw: tuple
    l_c: float
    l_s: float
    l_o: float
    termination: tuple  # (Z_t1, Z_t2)
    ports: object  # "matched", "feedline" or (Z_i, Z_o)
    mode: int
    sweep: dict
    spar: dict
    coupler_override: dict  # replaces extracted kappa / Z1 / Z2

    def network(self, coupler, Z_r, Z_f_line):
        if self.ports == "matched":
            Zi = Zo = coupler.Z1
        elif self.ports == "feedline":
            Zi = Zo = Z_f_line
        else:
            Zi, Zo = self.ports
        return NetworkSpec(coupler, Z_r, self.l_s, self.l_o, Zi, Zo, *self.termination)


def _get(d, key, path, kind=None, required=True, default=None):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", path)
    if key not in d:
        if required:
            raise ConfigError("missing required field", f"{path}.{key}" if path else key)
        return default
    v = d[key]
    p = f"{path}.{key}" if path else key
    if kind == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"expected a finite number, got {v!r}", p)
        return float(v)
    if kind == "positive":
        v = _get(d, key, path, "number")
        if v <= 0:
            raise ConfigError(f"must be positive, got {v}", p)
        return v
    return v


def _impedance(v, path):
    if v == "open":
        return math.inf
    if v == "short":
        return 0.0
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
        return float(v)
    raise ConfigError(f"expected 'open', 'short', a number or [re, im], got {v!r}", path)


def _cpw(d, key):
    if key not in d or d[key] is None:
        return None
    sub = d[key]
    return (_get(sub, "width_um", key, "positive") * UM, _get(sub, "gap_um", key, "positive") * UM)


def _materials(d):
    m = _get(d, "materials", "")
    try:
        if "epsilon_eff" in m:
            if "epsilon_r" in m:
                raise ConfigError("give epsilon_eff or epsilon_r, not both", "materials")
            return Materials.from_epsilon_eff(
                _get(m, "epsilon_eff", "materials", "number"),
                _get(m, "mu_r", "materials", "number", required=False, default=1.0),
            )
        return Materials(
            _get(m, "epsilon_r", "materials", "number"),
            _get(m, "mu_r", "materials", "number", required=False, default=1.0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "materials") from None


def _cross_section(d):
    xs = _get(d, "cross_section", "")
    widths = _get(xs, "widths_um", "cross_section")
    gaps = _get(xs, "gaps_um", "cross_section")
    roles = _get(xs, "roles", "cross_section")
    for name, seq in (("widths_um", widths), ("gaps_um", gaps), ("roles", roles)):
        if not isinstance(seq, list):
            raise ConfigError("expected a list", f"cross_section.{name}")
    for k, v in enumerate(widths + gaps):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            field = "widths_um" if k < len(widths) else "gaps_um"
            idx = k if k < len(widths) else k - len(widths)
            raise ConfigError(f"expected a positive number, got {v!r}", f"cross_section.{field}[{idx}]")
    if len(roles) != len(widths):
        raise ConfigError("need one role per width", "cross_section.roles")
    for k, r in enumerate(roles):
        if r not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {r!r}", f"cross_section.roles[{k}]")
    if roles.count("feedline") != 1 or roles.count("resonator") != 1:
        raise ConfigError("need exactly one feedline and one resonator", "cross_section.roles")
    if len(gaps) != len(widths) + 1:
        raise ConfigError("need one more gap than widths", "cross_section.gaps_um")
    extent = xs.get("ground_extent_um")
    if extent is not None:
        extent = _get(xs, "ground_extent_um", "cross_section", "positive") * UM
    try:
        cs = CrossSection.coplanar(
            [w * UM for w in widths],
            [g * UM for g in gaps],
            names=list(roles),
            grounds=[r == "ground" for r in roles],
            ground_extent=extent,
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "cross_section") from None
    signal = [r for r in roles if r != "ground"]
    return cs, signal.index("feedline"), signal.index("resonator")


def _termination(d):
    t = d.get("termination", "a")
    if isinstance(t, str):
        if t not in TERMINATIONS:
            raise ConfigError(f"unknown case {t!r}; use a, b, c or an object", "termination")
        return TERMINATIONS[t]
    if isinstance(t, dict):
        return (
            _impedance(_get(t, "Z_t1", "termination"), "termination.Z_t1"),
            _impedance(_get(t, "Z_t2", "termination"), "termination.Z_t2"),
        )
    raise ConfigError("expected a case letter or {Z_t1, Z_t2}", "termination")


def _ports(d):
    p = d.get("ports", "matched")
    if p in ("matched", "feedline"):
        return p
    if isinstance(p, dict):
        zi = _impedance(_get(p, "Z_i", "ports"), "ports.Z_i")
        zo = _impedance(_get(p, "Z_o", "ports"), "ports.Z_o")
        for name, z in (("Z_i", zi), ("Z_o", zo)):
            if not (complex(z).real > 0 and math.isfinite(abs(z))):
                raise ConfigError("port impedance needs a positive finite real part", f"ports.{name}")
        return (zi, zo)
    raise ConfigError("expected 'matched', 'feedline' or {Z_i, Z_o}", "ports")


def _override(d):
    o = d.get("coupler_override")
    if o is None:
        return {}
    if not isinstance(o, dict):
        raise ConfigError("expected an object", "coupler_override")
    out = {}
    for key, v in o.items():
        if key not in ("kappa", "Z1", "Z2"):
            raise ConfigError("only kappa, Z1 and Z2 can be overridden", f"coupler_override.{key}")
        out[key] = _get(o, key, "coupler_override", "number")
    if "kappa" in out and not abs(out["kappa"]) < 1:
        raise ConfigError("|kappa| must be < 1", "coupler_override.kappa")
    for key in ("Z1", "Z2"):
        if key in out and out[key] <= 0:
            raise ConfigError("must be positive", f"coupler_override.{key}")
    return out


def _sweep(d):
    s = d.get("sweep")
    if s is None:
        return None
    param = _get(s, "parameter", "sweep")
    if not isinstance(param, str):
        raise ConfigError("expected a string", "sweep.parameter")
    start = _get(s, "start", "sweep", "number")
    stop = _get(s, "stop", "sweep", "number")
    count = _get(s, "count", "sweep")
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ConfigError("expected a positive integer", "sweep.count")
    scale = s.get("scale", "linear")
    if scale not in ("linear", "log"):
        raise ConfigError("expected 'linear' or 'log'", "sweep.scale")
    if scale == "log" and (start <= 0 or stop <= 0):
        raise ConfigError("log sweep needs positive bounds", "sweep")
    return {"parameter": param, "start": start, "stop": stop, "count": count, "scale": scale}


def _spar(d):
    s = d.get("spar") or {}
    out = {"count": s.get("count", 401)}
    if isinstance(out["count"], bool) or not isinstance(out["count"], int) or out["count"] < 2:
        raise ConfigError("expected an integer >= 2", "spar.count")
    if "start_Hz" in s or "stop_Hz" in s:
        out["start_Hz"] = _get(s, "start_Hz", "spar", "positive")
        out["stop_Hz"] = _get(s, "stop_Hz", "spar", "positive")
        if out["stop_Hz"] <= out["start_Hz"]:
            raise ConfigError("stop_Hz must exceed start_Hz", "spar")
    else:
        out["span_linewidths"] = _get(s, "span_linewidths", "spar", "positive", False, 10.0)
    return out


def parse(d):
    """Validate a config document and build a :class:`DesignConfig`."""
    if not isinstance(d, dict):
        raise ConfigError("top level must be an object")
    if "config" in d and "cross_section" not in d:
        d = d["config"]  # a report document carries its config
    mat = _materials(d)
    cs, fi, ri = _cross_section(d)
    lengths = _get(d, "lengths_um", "")
    l_c = _get(lengths, "l_c", "lengths_um", "number") * UM
    l_s = _get(lengths, "l_s", "lengths_um", "number") * UM
    l_o = _get(lengths, "l_o", "lengths_um", "number") * UM
    for name, v in (("l_c", l_c), ("l_s", l_s), ("l_o", l_o)):
        if v < 0:
            raise ConfigError("must be non-negative", f"lengths_um.{name}")
    if l_c + l_s + l_o <= 0:
        raise ConfigError("total length must be positive", "lengths_um")
    mode = d.get("mode", 1)
    if isinstance(mode, bool) or not isinstance(mode, int) or mode < 1:
        raise ConfigError("expected an integer >= 1", "mode")
    return DesignConfig(
        raw=copy.deepcopy(d),
        materials=mat,
        cross_section=cs,
        feedline_index=fi,
        resonator_index=ri,
        feedline_cpw=_cpw(d, "feedline_cpw"),
        resonator_cpw=_cpw(d, "resonator_cpw"),
        l_c=l_c,
        l_s=l_s,
        l_o=l_o,
        termination=_termination(d),
        ports=_ports(d),
        mode=mode,
        sweep=_sweep(d),
        spar=_spar(d),
        coupler_override=_override(d),
    )


def load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse(doc)


_INDEX = re.compile(r"^(\w+)(?:\[(\d+)\])?$")


def _resolve_alias(raw, name):
    if name != "w3":
        return name
    roles = raw.get("cross_section", {}).get("roles", [])
    inner = [k for k, r in enumerate(roles) if r == "ground"]
    if len(inner) != 1:
        raise ConfigError("'w3' needs exactly one inner ground strip", "sweep.parameter")
    return f"cross_section.widths_um[{inner[0]}]"


def with_value(raw, path, value):
    """Copy of the config document with the field at dotted ``path`` replaced."""
    path = _resolve_alias(raw, path)
    doc = copy.deepcopy(raw)
    node = doc
    parts = path.split(".")
    for k, part in enumerate(parts):
        m = _INDEX.match(part)
        if not m:
            raise ConfigError(f"bad path component {part!r}", "sweep.parameter")
        key, idx = m.group(1), m.group(2)
        last = k == len(parts) - 1
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"no field {path!r} in config", "sweep.parameter")
        if idx is None:
            if last:
                node[key] = value
            else:
                node = node[key]
        else:
            seq = node[key]
            i = int(idx)
            if not isinstance(seq, list) or i >= len(seq):
                raise ConfigError(f"index out of range in {path!r}", "sweep.parameter")
            if last:
                seq[i] = value
            else:
                node = seq[i]
    return doc


def sweep_values(sweep):
    if sweep["scale"] == "log":
        return np.geomspace(sweep["start"], sweep["stop"], sweep["count"]).tolist()
    return np.linspace(sweep["start"], sweep["stop"], sweep["count"]).tolist()

"""Run configuration, snapshot files and output locations.

Configuration files are INI-style (``configparser``) with the sections
``[grid]``, ``[params]``, ``[init]``, ``[control]``, ``[outputs]`` and, for
refinement studies, ``[study]``. Every value is validated on load by the
constructors of the objects it feeds.
"""
from __future__ import annotations

import configparser
import io
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridError, GridSpec
from .initial_data import InitExpr, InitialDataError
from .state import FluidState, ModelParams
from .timeint import StepControl

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "write_snapshot",
    "read_snapshot",
    "dump_csv",
    "output_dir",
    "thread_count",
    "ENV_OUTPUT_DIR",
    "ENV_THREADS",
]

ENV_OUTPUT_DIR = "KORTEWEG_FV_OUTPUT_DIR"
ENV_THREADS = "KORTEWEG_FV_THREADS"

MAGIC = b"KFVSNAP\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIIdddI")
_NAME_LEN = 16
FIELD_NAMES = ("rho", "m_x", "m_y")


class ConfigError(ValueError):
    """Configuration that fails validation; the message names the offending key."""


# ---------------------------------------------------------------------------
# configuration


def _float(sec, key, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] missing required key {key!r}")
        return default
    try:
        return float(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {sec[key]!r} is not a number") from exc


def _int(sec, key, default=None):
    v = _float(sec, key, default)
    if int(v) != v:
        raise ConfigError(f"[{sec.name}] {key} must be an integer, got {sec[key]!r}")
    return int(v)


def _times(text):
    text = (text or "").strip()
    if not text:
        return ()
    try:
        return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse time list {text!r}") from exc


def _levels(text):
    out = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        try:
            M, N = item.split("x")
            out.append((int(M), int(N)))
        except ValueError as exc:
            raise ConfigError(f"[study] level {item!r} is not of the form MxN") from exc
    return tuple(out)


def parse_lambda_policy(text: str):
    """``rusanov_auto`` -> None; ``fixed:<value>`` -> the value."""
    text = text.strip()
    if text == "rusanov_auto":
        return None
    if text.startswith("fixed:"):
        try:
            return float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"[params] lambda_policy {text!r}: value is not a number") from exc
    raise ConfigError(f"[params] lambda_policy must be 'rusanov_auto' or 'fixed:<value>', got {text!r}")


@dataclass
class RunConfig:
    grid: GridSpec
    params: ModelParams
    init: InitExpr
    control: StepControl
    outputs: dict = field(default_factory=dict)
    study: dict | None = None
    source: str | None = None

    def to_ini(self) -> str:
        """Fully resolved configuration in the input format."""
        cp = configparser.ConfigParser()
        cp.optionxform = str
        g = self.grid
        cp["grid"] = {"Lx": repr(g.Lx), "Ly": repr(g.Ly), "M": str(g.M), "N": str(g.N)}
        p = self.params
        cp["params"] = {
            "k": repr(p.k),
            "gamma": repr(p.gamma),
            "kappa": repr(p.kappa),
            "mu": repr(p.mu),
            "eta": repr(p.eta),
            "lambda_policy": "rusanov_auto" if p.lambda_fixed is None else f"fixed:{p.lambda_fixed!r}",
            "cfl": repr(p.cfl),
        }
        if p.rho_floor is not None:
            cp["params"]["rho_floor"] = repr(p.rho_floor)
        defaults = InitExpr()
        cp["init"] = {
            k: repr(v) if isinstance(v, float) else str(v)
            for k, v in self.init.as_dict().items()
            if k not in ("Lx", "Ly") and (v != getattr(defaults, k) or k == "density")
        }
        c = self.control
        cp["control"] = {
            "t_end": repr(c.t_end),
            "method": c.method,
            "snapshot_stride": str(c.snapshot_stride),
            "snapshot_times": ", ".join(repr(t) for t in c.snapshot_times),
            "tol_E": repr(c.tol_E),
            "max_retries": str(c.max_retries),
            "korteweg_dt_constant": repr(c.korteweg_dt_constant),
            "deterministic": str(c.deterministic).lower(),
        }
        if math.isfinite(c.dt_max):
            cp["control"]["dt_max"] = repr(c.dt_max)
        if c.cfl is not None:
            cp["control"]["cfl"] = repr(c.cfl)
        cp["outputs"] = {k: str(v) for k, v in self.outputs.items()}
        if self.study is not None:
            st = dict(self.study)
            st["levels"] = ", ".join(f"{M}x{N}" for M, N in st["levels"])
            st["compare_times"] = ", ".join(repr(t) for t in st.get("compare_times", ()))
            cp["study"] = {k: str(v) for k, v in st.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(text: str, source: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case-sensitive (A and a are different parameters)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    for name in ("grid", "params", "init", "control"):
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
    try:
        gs = cp["grid"]
        grid = GridSpec(_float(gs, "Lx", 1.0), _float(gs, "Ly", 1.0), _int(gs, "M"), _int(gs, "N"))

        ps = cp["params"]
        mu, eta = _float(ps, "mu", 0.0), _float(ps, "eta", 0.0)
        if (mu > 0) != (eta > 0):
            msg = (
                f"mu={mu} and eta={eta}: exactly one viscosity is positive. The energy-variational "
                "framework covers only the inviscid case (both zero) or both positive."
            )
            log.warning(msg)
            raise ConfigError(msg)
        params = ModelParams(
            k=_float(ps, "k", 1.0),
            gamma=_float(ps, "gamma", 2.0),
            kappa=_float(ps, "kappa", 1e-3),
            mu=mu,
            eta=eta,
            lambda_fixed=parse_lambda_policy(ps.get("lambda_policy", "rusanov_auto")),
            cfl=_float(ps, "cfl", 0.4),
            rho_floor=_float(ps, "rho_floor") if "rho_floor" in ps else None,
        )

        init = InitExpr.from_mapping(dict(cp["init"]), grid.Lx, grid.Ly)

        cs = cp["control"]
        det = cs.get("deterministic", "true").strip().lower()
        if det not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigError(f"[control] deterministic must be a boolean, got {det!r}")
        control = StepControl(
            t_end=_float(cs, "t_end"),
            cfl=_float(cs, "cfl") if "cfl" in cs else None,
            dt_max=_float(cs, "dt_max", math.inf),
            method=cs.get("method", "ssprk3").strip(),
            snapshot_stride=_int(cs, "snapshot_stride", 1),
            snapshot_times=_times(cs.get("snapshot_times", "")),
            tol_E=_float(cs, "tol_E", 1e-8),
            max_retries=_int(cs, "max_retries", 12),
            korteweg_dt_constant=_float(cs, "korteweg_dt_constant", 4.0),
            deterministic=det in ("true", "yes", "1"),
        )

        outputs = dict(cp["outputs"]) if "outputs" in cp else {}
        outputs.setdefault("directory", "korteweg_run")
        outputs.setdefault("formats", "binary")
        bad = set(f.strip() for f in outputs["formats"].split(",")) - {"binary", "csv"}
        if bad:
            raise ConfigError(f"[outputs] unknown formats {sorted(bad)}")

        study = None
        if "study" in cp:
            ss = cp["study"]
            if "levels" not in ss:
                raise ConfigError("[study] missing required key 'levels'")
            study = {
                "levels": _levels(ss["levels"]),
                "compare_times": _times(ss.get("compare_times", "")),
                "min_decrease": _float(ss, "min_decrease", 1.2),
                "workers": _int(ss, "workers", 1),
            }
            lv = study["levels"]
            for (M0, N0), (M1, N1) in zip(lv, lv[1:]):
                if (M1, N1) != (2 * M0, 2 * N0):
                    raise ConfigError(f"[study] levels must double: {M0}x{N0} -> {M1}x{N1}")
            if "Lx" in ss or "Ly" in ss:
                if _float(ss, "Lx", grid.Lx) != grid.Lx or _float(ss, "Ly", grid.Ly) != grid.Ly:
                    raise ConfigError("[study] domain lengths differ from [grid]; all levels must share L")
    except (GridError, InitialDataError) as exc:
        raise ConfigError(str(exc)) from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(grid, params, init, control, outputs, study, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text, str(path))


def output_dir(cfg: RunConfig | None = None, override=None) -> Path:
    """Explicit override, then ``$KORTEWEG_FV_OUTPUT_DIR``, then ``[outputs] directory``."""
    if override is not None:
        return Path(override)
    env = os.environ.get(ENV_OUTPUT_DIR)
    if env:
        return Path(env)
    if cfg is not None:
        return Path(cfg.outputs.get("directory", "korteweg_run"))
    return Path("korteweg_run")


def thread_count(default: int = 1) -> int:
    env = os.environ.get(ENV_THREADS)
    if not env:
        return default
    try:
        n = int(env)
    except ValueError as exc:
        raise ConfigError(f"{ENV_THREADS}={env!r} is not an integer") from exc
    if n < 1:
        raise ConfigError(f"{ENV_THREADS} must be >= 1")
    return n


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(s: FluidState, path) -> None:
    """Binary snapshot: fixed header, 16-byte field names, then one payload per field.

    Header ``<8sIIIdddI``: magic, version, M, N, Lx, Ly, t, field count.
    Payloads are little-endian float64 in C order of the ``[i, j]`` array
    (``j`` varies fastest).
    """
    g = s.grid
    fields_ = (s.rho, s.m[0], s.m[1])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.M, g.N, g.Lx, g.Ly, s.t, len(fields_)))
        for name in FIELD_NAMES:
            fh.write(name.encode("ascii").ljust(_NAME_LEN, b"\x00"))
        for f in fields_:
            fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_snapshot(path) -> FluidState:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, M, N, Lx, Ly, t, nf = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    names = [data[off + k * _NAME_LEN: off + (k + 1) * _NAME_LEN].rstrip(b"\x00").decode("ascii") for k in range(nf)]
    off += nf * _NAME_LEN
    if tuple(names) != FIELD_NAMES:
        raise ValueError(f"{path}: unexpected fields {names}")
    expected = off + nf * M * N * 8
    if len(data) != expected:
        raise ValueError(f"{path}: payload has {len(data) - off} bytes, expected {nf * M * N * 8}")
    arr = np.frombuffer(data, dtype="<f8", offset=off).reshape(nf, M, N).astype(float)
    grid = GridSpec(Lx, Ly, M, N)
    return FluidState(grid, arr[0].copy(), arr[1:].copy(), t)


def dump_csv(s: FluidState, path) -> None:
    """One line per cell: ``i, j, x, y, rho, m_x, m_y`` (meant for small grids)."""
    g = s.grid
    x, y = g.cell_centers()
    I, J = np.meshgrid(np.arange(g.M), np.arange(g.N), indexing="ij")
    table = np.column_stack([a.ravel() for a in (I, J, x, y, s.rho, s.m[0], s.m[1])])
    np.savetxt(path, table, delimiter=",", header="i,j,x,y,rho,m_x,m_y", comments="",
               fmt=["%d", "%d", "%.17g", "%.17g", "%.17g", "%.17g", "%.17g"])

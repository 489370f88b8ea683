"""File formats: run configs (JSON), curve and dataset CSVs, fit reports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .analytic import DecoherenceCurve, Protocol
from .noise_model import (
    ConfigurationError,
    PowerLawSpectrum,
    QubitConfig,
    RtnSource,
    UNIT_SCALE,
    discretize,
)

SCHEMA_VERSION = 1
CURVE_HEADER = ["t_us", "value", "stderr"]
DATASET_HEADER = ["cos_theta", "t_us", "phi_se", "stderr"]
COMPARE_HEADER = ["alpha", "cos_theta", "t_us", "model", "value", "stderr"]


class DataError(ValueError):
    """A data file is malformed; the message names the offending line."""


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


@dataclass
class RunConfig:
    """Everything a command needs; energies in ``unit``, rates in inverse microseconds."""

    epsilon: float = 0.0
    delta: float = 1.0
    unit: str = "us^-1"
    alpha: Optional[float] = None
    s: float = 0.0
    gamma_min: Optional[float] = None
    gamma_max: Optional[float] = None
    g: float = 0.0
    theta_mode: str = "locked"
    theta: Optional[float] = None
    sources: Optional[list] = None
    protocol: str = "PhiSE"
    t_max: float = 4.0
    n_points: int = 200
    trajectories: int = 100_000
    seed: int = 0
    alphas: Optional[list] = None
    cos_thetas: Optional[list] = None
    noise_level: float = 0.0
    gamma1_ex: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.unit not in UNIT_SCALE:
            raise ConfigurationError(f"unit: unknown unit {self.unit!r}")
        if self.theta_mode not in ("locked", "explicit"):
            raise ConfigurationError(f"theta_mode: expected 'locked' or 'explicit', got {self.theta_mode!r}")
        if self.theta_mode == "explicit" and self.theta is None and not self.sources:
            raise ConfigurationError("theta: required when theta_mode is 'explicit'")
        try:
            Protocol(self.protocol)
        except ValueError:
            raise ConfigurationError(f"protocol: expected ER, SE or PhiSE, got {self.protocol!r}") from None
        if not self.t_max > 0:
            raise ConfigurationError("t_max: must be positive")
        if self.n_points < 2:
            raise ConfigurationError("n_points: need at least 2")
        if self.trajectories < 1:
            raise ConfigurationError("trajectories: must be >= 1")
        if self.noise_level < 0:
            raise ConfigurationError("noise_level: must be >= 0")
        self.qubit()
        if self.sources is None:
            if self.alpha is None or self.gamma_min is None:
                raise ConfigurationError("alpha: a spectrum (alpha, gamma_min) or an explicit 'sources' list is required")
            self.spectrum()
        else:
            self.source_list()

    def qubit(self) -> QubitConfig:
        try:
            return QubitConfig.from_units(self.epsilon, self.delta, self.unit)
        except ConfigurationError as exc:
            raise ConfigurationError(f"epsilon/delta: {exc}") from None

    def noise_theta(self, cos_theta: Optional[float] = None) -> float:
        if cos_theta is not None:
            return math.acos(cos_theta)
        if self.theta_mode == "explicit" and self.theta is not None:
            return float(self.theta)
        return self.qubit().theta

    def spectrum(self, cos_theta: Optional[float] = None, alpha: Optional[float] = None) -> PowerLawSpectrum:
        try:
            return PowerLawSpectrum(
                alpha=self.alpha if alpha is None else alpha,
                s=self.s,
                gamma_min=self.gamma_min,
                gamma_max=self.gamma_max,
                g=self.g,
                theta=self.noise_theta(cos_theta),
            )
        except ConfigurationError as exc:
            msg = str(exc)
            key = next((k for k in ("gamma_max", "gamma_min", "alpha", "g") if msg.startswith(k)), "spectrum")
            raise ConfigurationError(f"{key}: {msg}") from None

    def source_list(self, cos_theta: Optional[float] = None) -> list[RtnSource]:
        if self.sources is None:
            return discretize(self.spectrum(cos_theta))
        out = []
        for i, item in enumerate(self.sources):
            if not isinstance(item, dict) or not {"g", "gamma"} <= item.keys() or item.keys() - {"g", "gamma", "theta_k"}:
                raise ConfigurationError(f"sources[{i}]: expected keys g, gamma and optional theta_k")
            theta_k = item.get("theta_k")
            if theta_k is None or self.theta_mode == "locked":
                theta_k = self.noise_theta(cos_theta)
            try:
                out.append(RtnSource(float(item["g"]), float(item["gamma"]), float(theta_k)))
            except ConfigurationError as exc:
                raise ConfigurationError(f"sources[{i}]: {exc}") from None
        return out

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_points)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"{unknown[0]}: unknown config key")
        return cls(**data)


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def write_curve_csv(path, curve: DecoherenceCurve):
    err = curve.stderr if curve.stderr is not None else [None] * len(curve)
    with open(path, "w", newline="") as fh:
        fh.write(f"# protocol: {curve.protocol.value}\n")
        for key in sorted(curve.meta):
            if isinstance(curve.meta[key], (int, float, str)):
                fh.write(f"# {key}: {curve.meta[key]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for t, v, e in zip(curve.times, curve.values, err):
            w.writerow([_fmt(t), _fmt(v), _fmt(e)])


def _data_rows(path, header):
    """Yield ``(line_number, row)`` after checking the header; skips ``#`` comments."""
    with open(path, newline="") as fh:
        seen_header = False
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if not seen_header:
                if [c.strip() for c in row] != header:
                    raise DataError(f"{path}:{lineno}: expected header {','.join(header)}")
                seen_header = True
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row
        if not seen_header:
            raise DataError(f"{path}: missing header {','.join(header)}")


def _num(text, path, lineno, name, optional=False):
    text = text.strip()
    if optional and text == "":
        return None
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {name} is not a number: {text!r}") from None
    if not math.isfinite(val):
        raise DataError(f"{path}:{lineno}: {name} is not finite")
    return val


def read_curve_csv(path, protocol=Protocol.PHI_SE) -> DecoherenceCurve:
    with open(path) as fh:
        for line in fh:
            if line.startswith("# protocol:"):
                protocol = line.split(":", 1)[1].strip()
                break
    t, v, e = [], [], []
    for lineno, row in _data_rows(path, CURVE_HEADER):
        t.append(_num(row[0], path, lineno, "t_us"))
        v.append(_num(row[1], path, lineno, "value"))
        e.append(_num(row[2], path, lineno, "stderr", optional=True))
    stderr = None if all(x is None for x in e) else np.array([np.nan if x is None else x for x in e])
    try:
        return DecoherenceCurve(protocol, t, v, stderr)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_dataset_csv(path, curves: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for cos_theta in sorted(curves):
            c = curves[cos_theta]
            err = c.stderr if c.stderr is not None else [None] * len(c)
            for t, v, e in zip(c.times, c.values, err):
                w.writerow([_fmt(cos_theta), _fmt(t), _fmt(v), _fmt(e)])


def read_dataset_csv(path) -> dict:
    """Group a dataset CSV by working point into PhiSE curves."""
    groups: dict = {}
    for lineno, row in _data_rows(path, DATASET_HEADER):
        c = _num(row[0], path, lineno, "cos_theta")
        if not 0.0 <= c <= 1.0:
            raise DataError(f"{path}:{lineno}: cos_theta must lie in [0, 1]")
        t = _num(row[1], path, lineno, "t_us")
        v = _num(row[2], path, lineno, "phi_se")
        e = _num(row[3], path, lineno, "stderr", optional=True)
        if e is not None and e < 0:
            raise DataError(f"{path}:{lineno}: stderr must be non-negative")
        g = groups.setdefault(c, ([], [], [], []))
        if g[0] and t <= g[0][-1]:
            raise DataError(f"{path}:{lineno}: t_us must increase within a working point")
        for lst, x in zip(g, (t, v, e, lineno)):
            lst.append(x)
    if not groups:
        raise DataError(f"{path}: no data rows")
    curves = {}
    for c, (t, v, e, _) in groups.items():
        stderr = None if any(x is None for x in e) else np.array(e)
        curves[c] = DecoherenceCurve(Protocol.PHI_SE, t, v, stderr, {"cos_theta": c})
    return curves


def write_compare_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for alpha, cos_theta, t, model, value, err in rows:
            w.writerow([_fmt(alpha), _fmt(cos_theta), _fmt(t), model, _fmt(value), _fmt(err)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def report_to_json(report) -> str:
    data = {"schema_version": SCHEMA_VERSION, **report.to_dict()}
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def curve_to_json(curve: DecoherenceCurve) -> str:
    data = {
        "schema_version": SCHEMA_VERSION,
        "protocol": curve.protocol.value,
        "t_us": curve.times,
        "value": curve.values,
        "stderr": curve.stderr,
        "meta": curve.meta,
    }
    return json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n"


def report_table(report) -> str:
    """Plain-text summary in the layout of a noise-characteristics table."""

    def f(x, spec=".4g"):
        return "-" if x is None else format(x, spec)

    lines = ["working points", f"{'cos_theta':>10} {'Gamma_3':>10} {'gamma_c':>10} {'Gamma_G':>10} {'rms':>10}"]
    for p in report.per_point:
        lines.append(
            f"{p.cos_theta:>10.4g} {p.gamma3_hat:>10.4g} {p.gamma_c_hat:>10.4g} {p.gamma_G_hat:>10.4g} {p.residual_rms:>10.2e}"
        )
    lines.append("")
    if report.underdetermined:
        lines.append(f"global parameters: underdetermined ({report.underdetermined})")
        return "\n".join(lines) + "\n"
    rows = [
        ("g (us^-1)", f(report.g_hat)),
        ("gamma_min (us^-1)", f"{f(report.gamma_min_hat)} +- {f(report.gamma_min_stderr, '.2g')}"),
        ("n(gamma)", "-" if report.alpha_hat is None else f"{report.alpha_hat:.4g} gamma^({f(report.s_hat, 'g')}-1)"),
        ("Gamma_1 th (us^-1)", f(report.gamma1_th)),
        ("Gamma_1 ex (us^-1)", f(report.gamma1_ex)),
        ("th/ex", f(report.consistency_ratio, ".3g")),
    ]
    width = max(len(r[0]) for r in rows)
    lines += [f"{k:<{width}}  {v}" for k, v in rows]
    if report.gamma_min_flag:
        lines.append(f"gamma_min {report.gamma_min_flag}")
    if report.consistency_verdict:
        lines.append(report.consistency_verdict)
    lines += report.notes
    return "\n".join(lines) + "\n"

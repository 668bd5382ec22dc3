"""Experiment configuration files (TOML), strictly validated.

Schema::

    [channel]
    kind = "bsc"
    h = {type = "constant", q = 0.1}          # or {type = "affine", c0 = 0.1, c1 = 0.3}

    [procedure]
    L = 2
    M = 32
    eps_prime = 0.05
    thresholds = "ndagger"                  # or "manual" with lambda1, lambda2, a_A, a_R
    eps = 0.1                                  # target error; required by eps0 = "auto"
    eps0 = 0.0                                 # number or "auto"
    N0 = "auto"                                # number or "auto"
    max_stage1_queries = "auto"
    info_density_mode = "nominal"              # or "realized"
    stage1_decode = "max_index"                # or "argmax_density"

    [run]
    trials = 1000
    seed = 1
    workers = 1
    target = "uniform"                         # or "grid"
    adversaries = ["uniform_random", "offset_heuristic"]
    output_dir = "out"

    [bounds]
    stage2_expectation = "asymptotic"          # or "mc"
    stage2_runs = 10000
    eps = 0.1                                  # figure presets
    eps_prime = 0.05
    N = 100
    N_values = [...]
    L_values = [...]
    use_config_channel = false

    [sweep]
    "procedure.L" = [2, 4, 8]                  # dotted path -> values

Every section except ``[channel]`` and ``[procedure]`` is optional. Unknown
keys are rejected with the line they appear on.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import ChannelError, channel_from_spec
from .eavesdropper import STRATEGIES
from .procedure import ParameterError, ProcedureConfig, eps0_for_target, select_parameters
from .bounds import nonasymptotic_eps_bar

OUTPUT_ENV = "TWENTYQ_OUTPUT_DIR"

_SCHEMA = {
    "channel": {"kind", "h"},
    "procedure": {
        "L", "M", "eps_prime", "thresholds", "lambda1", "lambda2", "a_A", "a_R",
        "eps", "eps0", "N0", "max_stage1_queries", "info_density_mode", "stage1_decode",
    },
    "run": {"trials", "seed", "workers", "target", "adversaries", "output_dir"},
    "bounds": {
        "stage2_expectation", "stage2_runs", "eps", "eps_prime", "N",
        "N_values", "L_values", "use_config_channel",
    },
    "sweep": None,
}
_H_KEYS = {"constant": {"type", "q"}, "affine": {"type", "c0", "c1"}}


class ConfigError(ValueError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source, self.line = source, line
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _locate(text: str, section: str | None, key: str | None) -> int | None:
    """Best-effort line number of ``key`` inside ``[section]`` (or of the header)."""
    if not text:
        return None
    current = None
    header_line = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1).strip('"')
            if current == section:
                header_line = n
                if key is None:
                    return n
            continue
        if key is None or current != section:
            continue
        if re.match(rf'^"?{re.escape(key)}"?\s*(=|\.)', line):
            return n
    return header_line


@dataclass
class ExperimentConfig:
    procedure: ProcedureConfig
    raw: dict
    eps: float | None = None
    trials: int = 1000
    seed: int = 0
    workers: int = 1
    target: str = "uniform"
    adversaries: tuple[str, ...] = ("uniform_random", "offset_heuristic")
    output_dir: str = "out"
    bounds: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    source: str = "<config>"

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical config, ignoring settings that cannot change results."""
        raw = copy.deepcopy(self.raw)
        for key in ("workers", "output_dir"):
            raw.get("run", {}).pop(key, None)
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", str(path), int(m.group(1)) if m else None) from exc
    return build_experiment(raw, text, str(path))


def build_experiment(raw: dict, text: str = "", source: str = "<config>") -> ExperimentConfig:
    def fail(msg, section=None, key=None):
        raise ConfigError(msg, source, _locate(text, section, key))

    for section, body in raw.items():
        if section not in _SCHEMA:
            fail(f"unknown section [{section}]", section)
        if not isinstance(body, dict):
            fail(f"[{section}] must be a table", section)
        allowed = _SCHEMA[section]
        if allowed is None:
            continue
        for key in body:
            if key not in allowed:
                fail(f"unknown key {key!r} in [{section}]", section, key)
    for section in ("channel", "procedure"):
        if section not in raw:
            fail(f"missing section [{section}]")

    ch_spec = raw["channel"]
    h = ch_spec.get("h")
    if isinstance(h, dict):
        allowed = _H_KEYS.get(h.get("type"))
        if allowed is None:
            fail(f"channel.h.type must be one of {sorted(_H_KEYS)}", "channel", "h")
        extra = set(h) - allowed
        if extra:
            fail(f"unknown key(s) {sorted(extra)} in channel.h", "channel", "h")
        missing = allowed - set(h)
        if missing:
            fail(f"channel.h is missing {sorted(missing)}", "channel", "h")
    try:
        channel = channel_from_spec(ch_spec)
    except (ChannelError, KeyError) as exc:
        fail(f"invalid channel: {exc}", "channel", "h" if "h" in ch_spec else None)

    proc = raw["procedure"]

    def need(key, kind=(int, float)):
        if key not in proc:
            fail(f"procedure.{key} is required", "procedure")
        v = proc[key]
        if isinstance(v, bool) or not isinstance(v, kind):
            fail(f"procedure.{key} has the wrong type", "procedure", key)
        return v

    L, M = need("L", int), need("M", int)
    eps_prime = float(need("eps_prime"))
    eps = proc.get("eps")
    mode = proc.get("thresholds", "ndagger")
    try:
        if mode == "ndagger":
            for k in ("lambda1", "lambda2", "a_A", "a_R"):
                if k in proc:
                    fail(f"procedure.{k} conflicts with thresholds = 'ndagger'", "procedure", k)
            ch = select_parameters(L, eps_prime, channel)
            lam1, lam2, a_A, a_R = ch.lambda1, ch.lambda2, ch.a_A, ch.a_R
        elif mode == "manual":
            lam1, lam2 = float(need("lambda1")), float(need("lambda2"))
            a_A, a_R = float(need("a_A")), float(need("a_R"))
        else:
            fail("procedure.thresholds must be 'ndagger' or 'manual'", "procedure", "thresholds")

        eps0 = proc.get("eps0", 0.0)
        if eps0 == "auto":
            if eps is None:
                fail("eps0 = 'auto' needs procedure.eps", "procedure", "eps0")
            eps0 = eps0_for_target(float(eps), nonasymptotic_eps_bar(L, lam1, lam2, a_A, eps_prime))
        elif isinstance(eps0, bool) or not isinstance(eps0, (int, float)):
            fail("procedure.eps0 must be a number or 'auto'", "procedure", "eps0")

        extras = {}
        for key in ("N0", "max_stage1_queries"):
            v = proc.get(key, "auto")
            if v != "auto":
                if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                    fail(f"procedure.{key} must be a positive integer or 'auto'", "procedure", key)
                extras[key] = v
        for key in ("info_density_mode", "stage1_decode"):
            if key in proc:
                extras[key] = proc[key]
        if extras.get("info_density_mode", "nominal") not in ("nominal", "realized"):
            fail("procedure.info_density_mode must be 'nominal' or 'realized'", "procedure", "info_density_mode")
        if extras.get("stage1_decode", "max_index") not in ("max_index", "argmax_density"):
            fail("procedure.stage1_decode must be 'max_index' or 'argmax_density'", "procedure", "stage1_decode")

        procedure = ProcedureConfig(
            channel=channel, L=L, M=M, lambda1=lam1, lambda2=lam2, a_A=a_A, a_R=a_R,
            eps_prime=eps_prime, eps0=float(eps0), **extras,
        )
    except ParameterError as exc:
        fail(f"invalid procedure: {exc}", "procedure")

    run = raw.get("run", {})

    def run_int(key, default, lo=0):
        v = run.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            fail(f"run.{key} must be an integer >= {lo}", "run", key)
        return v

    adversaries = tuple(run.get("adversaries", ("uniform_random", "offset_heuristic")))
    for a in adversaries:
        if a not in STRATEGIES:
            fail(f"unknown adversary {a!r}", "run", "adversaries")
    target = run.get("target", "uniform")
    if target not in ("uniform", "grid"):
        fail("run.target must be 'uniform' or 'grid'", "run", "target")

    bounds = dict(raw.get("bounds", {}))
    if bounds.get("stage2_expectation", "asymptotic") not in ("asymptotic", "mc"):
        fail("bounds.stage2_expectation must be 'asymptotic' or 'mc'", "bounds", "stage2_expectation")

    sweep = raw.get("sweep", {})
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            fail(f"sweep axis {key!r} needs a non-empty list", "sweep", key)
        parts = key.split(".")
        if parts[0] not in ("channel", "procedure", "run") or len(parts) < 2:
            fail(f"sweep axis {key!r} must be a dotted path into [channel], [procedure] or [run]", "sweep", key)

    return ExperimentConfig(
        procedure=procedure,
        raw=raw,
        eps=None if eps is None else float(eps),
        trials=run_int("trials", 1000, 1),
        seed=run_int("seed", 0),
        workers=run_int("workers", 1, 1),
        target=target,
        adversaries=adversaries,
        output_dir=str(run.get("output_dir", "out")),
        bounds=bounds,
        sweep=dict(sweep),
        source=source,
    )


def with_overrides(raw: dict, overrides: dict) -> dict:
    """Copy of ``raw`` with dotted-path ``overrides`` applied and ``[sweep]`` removed."""
    out = copy.deepcopy(raw)
    out.pop("sweep", None)
    for path, value in overrides.items():
        node = out
        *parents, leaf = path.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out

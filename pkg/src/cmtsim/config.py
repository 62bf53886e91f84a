"""Flat key=value configuration with strict validation.

Config files are plain text: one ``dotted.key = value`` per line, ``#``
starts a comment, blank lines are ignored.  Unknown keys are rejected by
name, as are values the key's converter refuses.  Command line overrides
(``--set key=value``) go through exactly the same table.
"""


class ConfigError(Exception):
    def __init__(self, key, msg, line=None):
        at = f" (line {line})" if line is not None else ""
        super().__init__(f"config key {key!r}{at}: {msg}")
        self.key = key


def _int(lo=None, hi=None):
    def conv(s):
        v = int(s)
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ValueError(f"out of range {v}")
        return v
    return conv


def _float(lo=None, hi=None):
    def conv(s):
        v = float(s)
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ValueError(f"out of range {v}")
        return v
    return conv


def _choice(*allowed):
    def conv(s):
        s = str(s).strip()
        if s not in allowed:
            raise ValueError(f"must be one of {allowed}")
        return s
    return conv


def _csv(conv_one):
    def conv(s):
        if isinstance(s, (list, tuple)):
            return list(s)
        parts = [p.strip() for p in str(s).split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return [conv_one(p) for p in parts]
    return conv


def _flag(s):
    v = int(s)
    if v not in (0, 1):
        raise ValueError("must be 0 or 1")
    return v


_PROB = _float(0.0, 1.0)

# key -> (default, converter)
SCHEMA = {
    "engine.master_seed": (1, _int(0)),
    "scenario.template": ("A", _choice("A", "B", "C")),
    "scenario.loss": (0.05, _PROB),
    "scenario.load": (0.5, _float(0.0, 1.0)),
    "scenario.grid": (None, _csv(float)),
    "scenario.seeds": (list(range(10)), _csv(int)),
    "scenario.algos": (["cmt-cc", "cmt-berp"],
                       _csv(_choice("cmt-cc", "cmt-berp", "mptcp-coupled"))),
    "scenario.file_size": (60_000_000, _int(1)),
    "scenario.edge_loss": (0.01, _PROB),
    "scenario_c.edge_loss": (0.0, _PROB),
    "link.prop_delay": (0.010, _float(0.0)),
    "link.queue_capacity": (50, _int(1)),
    "link.header_overhead": (48, _int(0)),
    "transport.chunk_bytes": (1452, _int(1)),
    "transport.dupthresh": (4, _int(1)),
    "transport.rto_initial": (1.0, _float(1e-3)),
    "transport.rto_min": (1.0, _float(1e-3)),
    "transport.rto_max": (60.0, _float(1e-3)),
    "transport.rtx_policy": ("rtx-ssthresh", _choice("rtx-ssthresh", "rtx-same")),
    "transport.delayed_ack_factor": (2, _int(1)),
    "transport.delayed_ack_timeout": (0.2, _float(0.0)),
    "transport.rwnd": (16_000_000, _int(1)),
    "transport.initial_cwnd_mtus": (2, _int(1)),
    "transport.mtu": (1500, _int(1)),
    "cc.algo": ("cmt-berp", _choice("cmt-cc", "cmt-berp", "mptcp-coupled")),
    "cc.p": (0.9, _float(0.0, 1.0)),
    "cc.pa_scope": ("per-path", _choice("per-path", "global")),
    "output.results_path": ("results.csv", str),
    "output.trace_path": ("trace.csv", str),
    "output.trace_interval": (0.1, _float(1e-6)),
    "output.trace": (0, _flag),
    "sim.time_cap": (10_000.0, _float(1.0)),
}


def defaults() -> dict:
    return {k: v for k, (v, _) in SCHEMA.items()}


def set_value(cfg, key, raw, line=None):
    try:
        _, conv = SCHEMA[key]
    except KeyError:
        raise ConfigError(key, "unknown key", line) from None
    try:
        cfg[key] = conv(raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(key, f"bad value {raw!r}: {e}", line) from None


def load_file(cfg, path):
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(str(path), f"unreadable config file: {e}") from None
    for i, raw_line in enumerate(lines, start=1):
        text = raw_line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(text, "expected key=value", i)
        key, _, value = text.partition("=")
        set_value(cfg, key.strip(), value.strip(), line=i)
    return cfg


def apply_overrides(cfg, pairs):
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(pair, "expected key=value")
        key, _, value = pair.partition("=")
        set_value(cfg, key.strip(), value.strip())
    return cfg

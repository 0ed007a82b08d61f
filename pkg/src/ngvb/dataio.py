"""File formats: LIBSVM datasets, trace CSVs, and run checkpoints.

All text, all locale-free.  Floats are written with repr so they survive a
round trip bit-for-bit; the checkpoint stores enough state (parameters,
momentum, RNG state, smoothing tail) that a resumed run continues exactly
where the interrupted one left off.
"""

import hashlib
from dataclasses import asdict

import numpy as np

from .errors import CheckpointError, ValidationError
from .model import Dataset
from .optimizer import ResumeState, TraceRecord, smooth_lower_bound
from .varfam import GaussianMeanField, StiefelFlow

TRACE_HEADER = "t,lower_bound,smoothed_lb,grad_norm,kappa,M_t,alpha_t,wall_time_s"

_CHECKPOINT_MAGIC = "ngvb-checkpoint-v1"


# ---------------------------------------------------------------------------
# LIBSVM
# ---------------------------------------------------------------------------


def parse_libsvm(text, covariate_limit=100):
    """Parse LIBSVM text into a Dataset with an intercept column prepended.

    Each line is `label index:value index:value ...` with 1-based, strictly
    increasing indices.  Labels +1/-1 map to 1/0 ({0,1} accepted as-is).
    Features beyond `covariate_limit` are dropped; missing entries are zero.
    """
    if covariate_limit < 1:
        raise ValidationError(f"covariate limit must be >= 1, got {covariate_limit}")
    rows = []
    labels = []
    width = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            raw_label = float(tokens[0])
        except ValueError:
            raise ValidationError(f"line {lineno}: unparseable label {tokens[0]!r}") from None
        if raw_label not in (-1.0, 0.0, 1.0):
            raise ValidationError(f"line {lineno}: label must be +-1 or 0/1, got {tokens[0]}")
        label = 1.0 if raw_label == 1.0 else 0.0
        entries = []
        prev_index = 0
        for token in tokens[1:]:
            parts = token.split(":")
            if len(parts) != 2:
                raise ValidationError(f"line {lineno}: malformed pair {token!r}")
            try:
                index = int(parts[0])
                value = float(parts[1])
            except ValueError:
                raise ValidationError(f"line {lineno}: malformed pair {token!r}") from None
            if index < 1:
                raise ValidationError(f"line {lineno}: index {index} is not 1-based")
            if index <= prev_index:
                raise ValidationError(
                    f"line {lineno}: non-increasing index {index} after {prev_index}"
                )
            if not np.isfinite(value):
                raise ValidationError(f"line {lineno}: non-finite value in pair {token!r}")
            prev_index = index
            if index <= covariate_limit:
                entries.append((index, value))
                width = max(width, index)
        rows.append(entries)
        labels.append(label)
    if not rows:
        raise ValidationError("empty dataset: no data lines found")
    features = np.zeros((len(rows), width + 1))
    features[:, 0] = 1.0
    for i, entries in enumerate(rows):
        for index, value in entries:
            features[i, index] = value
    return Dataset(features=features, labels=np.array(labels), intercept=True)


def format_libsvm(features, labels):
    """Inverse of parse_libsvm for raw covariates (no intercept column).

    Labels {0,1} are written as -1/+1; zero entries are omitted.
    """
    features = np.asarray(features, dtype=float)
    lines = []
    for row, label in zip(features, labels):
        parts = ["+1" if label == 1 else "-1"]
        for j, value in enumerate(row, start=1):
            if value != 0.0:
                parts.append(f"{j}:{float(value)!r}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Trace CSV
# ---------------------------------------------------------------------------


def write_trace_csv(trace, path, window=50):
    """One row per iteration; the smoothed column uses a trailing window."""
    smoothed = smooth_lower_bound(trace, window) if trace else []
    lines = [TRACE_HEADER]
    for record, smooth in zip(trace, smoothed):
        lines.append(
            ",".join(
                [
                    str(record.t),
                    repr(float(record.lower_bound)),
                    repr(float(smooth)),
                    repr(float(record.grad_norm)),
                    repr(float(record.condition_number)),
                    str(record.m_t),
                    repr(float(record.alpha_t)),
                    repr(float(record.wall_time)),
                ]
            )
        )
    try:
        with open(path, "w") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as err:
        raise ValidationError(f"cannot write trace to {path}: {err}") from err


def read_trace_csv(path):
    """Returns (records, smoothed) parsed from a trace CSV."""
    try:
        with open(path) as handle:
            lines = [line for line in handle.read().splitlines() if line]
    except OSError as err:
        raise ValidationError(f"cannot read trace from {path}: {err}") from err
    if not lines or lines[0] != TRACE_HEADER:
        raise ValidationError(f"{path} is not a trace CSV (bad header)")
    records = []
    smoothed = []
    for line in lines[1:]:
        fields = line.split(",")
        if len(fields) != 8:
            raise ValidationError(f"{path}: malformed trace row {line!r}")
        records.append(
            TraceRecord(
                t=int(fields[0]),
                lower_bound=float(fields[1]),
                grad_norm=float(fields[3]),
                condition_number=float(fields[4]),
                m_t=int(fields[5]),
                alpha_t=float(fields[6]),
                wall_time=float(fields[7]),
            )
        )
        smoothed.append(float(fields[2]))
    return records, smoothed


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _canonical(obj):
    if isinstance(obj, dict):
        return tuple(sorted((k, _canonical(v)) for k, v in obj.items()))
    if isinstance(obj, (list, tuple)):
        return tuple(_canonical(v) for v in obj)
    return obj


def config_hash(config):
    """Stable digest of a config dataclass (or a plain mapping of fields)."""
    payload = config if isinstance(config, dict) else asdict(config)
    return hashlib.sha256(repr(_canonical(payload)).encode()).hexdigest()


def _format_floats(values):
    return " ".join(repr(float(v)) for v in np.asarray(values, dtype=float).ravel())


def _parse_floats(text):
    return np.array([float(tok) for tok in text.split()], dtype=float)


def checkpoint_save(path, state: ResumeState, config):
    family = state.family
    rng_state = state.rng_state
    if rng_state.get("bit_generator") != "PCG64":
        raise ValidationError("only PCG64 generator state is supported")
    lines = [
        f"format = {_CHECKPOINT_MAGIC}",
        f"config_hash = {config_hash(config)}",
        f"t = {state.t}",
        f"family = {family.family_tag}",
        f"layout = {family.layout_tag()}",
        f"params = {_format_floats(family.to_vector())}",
        f"momentum = {_format_floats(state.momentum)}",
        f"lb_tail = {_format_floats(state.lb_tail)}",
        f"best_smoothed = {float(state.best_smoothed)!r}",
        f"bad_checks = {state.bad_checks}",
        "rng_bit_generator = PCG64",
        f"rng_state_state = {rng_state['state']['state']}",
        f"rng_state_inc = {rng_state['state']['inc']}",
        f"rng_has_uint32 = {rng_state['has_uint32']}",
        f"rng_uinteger = {rng_state['uinteger']}",
    ]
    try:
        with open(path, "w") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as err:
        raise ValidationError(f"cannot write checkpoint to {path}: {err}") from err


def _rebuild_family(tag, layout, params):
    fields = dict(item.split("=") for item in layout.split()[1:])
    if tag == "gaussian":
        return GaussianMeanField.from_vector(params, int(fields["d"]))
    if tag == "stiefel-flow":
        return StiefelFlow.from_vector(
            params, int(fields["d"]), int(fields["K"]), fields["activation"]
        )
    raise CheckpointError(f"unknown family tag {tag!r}")


def checkpoint_load(path, config, *, expected_family=None) -> ResumeState:
    """Load a checkpoint; rejects config-hash or family mismatches and truncation."""
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    entries = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        if " = " not in line:
            raise CheckpointError(f"{path}: malformed checkpoint line {line!r}")
        key, _, value = line.partition(" = ")
        entries[key.strip()] = value
    required = [
        "format", "config_hash", "t", "family", "layout", "params", "momentum",
        "lb_tail", "best_smoothed", "bad_checks", "rng_bit_generator",
        "rng_state_state", "rng_state_inc", "rng_has_uint32", "rng_uinteger",
    ]
    missing = [key for key in required if key not in entries]
    if missing:
        raise CheckpointError(f"{path}: truncated checkpoint, missing {missing}")
    if entries["format"] != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if entries["config_hash"] != config_hash(config):
        raise CheckpointError(f"{path}: checkpoint was written under a different configuration")
    if expected_family is not None and entries["family"] != expected_family:
        raise CheckpointError(
            f"{path}: checkpoint family {entries['family']!r} != expected {expected_family!r}"
        )
    try:
        family = _rebuild_family(entries["family"], entries["layout"], _parse_floats(entries["params"]))
        momentum = _parse_floats(entries["momentum"])
        rng_state = {
            "bit_generator": "PCG64",
            "state": {
                "state": int(entries["rng_state_state"]),
                "inc": int(entries["rng_state_inc"]),
            },
            "has_uint32": int(entries["rng_has_uint32"]),
            "uinteger": int(entries["rng_uinteger"]),
        }
        return ResumeState(
            t=int(entries["t"]),
            family=family,
            momentum=momentum,
            rng_state=rng_state,
            lb_tail=list(_parse_floats(entries["lb_tail"])),
            best_smoothed=float(entries["best_smoothed"]),
            bad_checks=int(entries["bad_checks"]),
        )
    except (ValueError, ValidationError) as err:
        raise CheckpointError(f"{path}: corrupt checkpoint ({err})") from err

"""CSV tables, trajectory files and the binary state dump."""

from __future__ import annotations

import csv
import struct

import numpy as np

MAGIC = b"GOFBDUMP"
DUMP_VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")  # magic, version, M_modes, samples, state width

TRUNCATED = "# TRUNCATED"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, columns, rows, footer=None):
    """Write dict rows with the given column order; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
        if footer:
            fh.write(footer.rstrip("\n") + "\n")


def _parse(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path):
    """Return (columns, rows, footer_lines); comment lines starting with '#' are footers."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    footer = [ln for ln in lines if ln.startswith("#")]
    reader = csv.reader(body)
    columns = next(reader)
    rows = [dict(zip(columns, map(_parse, r))) for r in reader]
    return columns, rows, footer


def trajectory_columns(traj):
    return ["t", "norm_p", "norm_eps", "norm_z"] + [f"u_{i + 1}" for i in range(traj.u.shape[1])]


def write_trajectory_csv(traj, path):
    cols = trajectory_columns(traj)
    rows = []
    for k in range(len(traj)):
        row = {"t": traj.t[k], "norm_p": traj.norm_p[k], "norm_eps": traj.norm_eps[k],
               "norm_z": traj.norm_z[k]}
        row.update({f"u_{i + 1}": traj.u[k, i] for i in range(traj.u.shape[1])})
        rows.append(row)
    footer = None
    if traj.truncated:
        reason = traj.metadata.get("failure", "integration stopped early").replace("\n", " ")
        footer = f"{TRUNCATED}: {reason}"
    write_table(path, cols, rows, footer)


def read_trajectory_csv(path):
    """Return (array with one column per CSV column, columns, truncated flag)."""
    cols, rows, footer = read_table(path)
    data = np.array([[float(r[c]) for c in cols] for r in rows]).reshape(len(rows), len(cols))
    return data, cols, any(ln.startswith(TRUNCATED) for ln in footer)


def write_state_dump(path, t, states, M_modes):
    t = np.asarray(t, dtype="<f8")
    states = np.asarray(states, dtype="<f8")
    if states.ndim != 2 or states.shape[0] != t.shape[0]:
        raise ValueError("states must have one row per sample time")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, DUMP_VERSION, int(M_modes), t.shape[0], states.shape[1]))
        fh.write(t.tobytes())
        fh.write(states.tobytes())


def read_state_dump(path):
    """Return (t, states, M_modes)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError("file too short for a state dump header")
        magic, version, M, S, width = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError("not a state dump (bad magic)")
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        t = np.frombuffer(fh.read(8 * S), dtype="<f8")
        states = np.frombuffer(fh.read(8 * S * width), dtype="<f8").reshape(S, width)
    return t.astype(float), states.astype(float), M

"""
Plain-text serialisation of configurations, boundary conditions and chain
checkpoints, plus CSV/PPM writers with quarantined metadata headers.

Configuration files are line oriented::

    critpotts-config 1
    n 4
    n_prime 4
    topology box
    q 2
    p 0.5857864376269049
    kind bond
    bc fk
    boundary
    0 1
    1 1
    end
    config
    0 1
    1 0
    ...
    end

Boundary lines are ``vertex class_id`` for FK boundaries (vertices sharing a
positive id are wired, absent vertices are unwired) and ``vertex colour`` for
Potts boundaries. Checkpoints add ``clock``, ``seed``, ``position`` and
``mode`` header keys.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io as _io
import os
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ChainState, ScanMode, UpdateStream
from .lattice import Topology, build_lattice
from .model import FKBoundary, Params, PottsBoundary

MAGIC = "critpotts-config 1"


@dataclass
class ConfigRecord:
    config: np.ndarray
    bc: FKBoundary | PottsBoundary
    params: Params
    extra: dict


def _bc_lines(bc):
    if isinstance(bc, FKBoundary):
        kind = "fk-periodic" if bc.periodic else "fk"
        lines = [f"{v} {i + 1}" for i, c in enumerate(bc.classes) for v in c]
    else:
        kind = "potts-periodic" if bc.periodic else "potts"
        lines = [f"{v} {int(c)}" for v, c in enumerate(bc.colors) if c]
    return kind, sorted(lines, key=lambda s: int(s.split()[0]))


def dumps_config(config: np.ndarray, bc, params: Params, extra: dict | None = None) -> str:
    lat = bc.lattice
    kind, blines = _bc_lines(bc)
    out = [MAGIC, f"n {lat.n}", f"n_prime {lat.n_prime}", f"topology {lat.topology.value}",
           f"q {params.q!r}", f"p {params.p!r}",
           f"kind {'bond' if isinstance(bc, FKBoundary) else 'spin'}", f"bc {kind}"]
    for k, v in (extra or {}).items():
        out.append(f"{k} {v}")
    out.append("boundary")
    out.extend(blines)
    out.append("end")
    out.append("config")
    out.extend(f"{i} {int(x)}" for i, x in enumerate(np.asarray(config)))
    out.append("end")
    return "\n".join(out) + "\n"


def loads_config(text: str) -> ConfigRecord:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != MAGIC:
        raise ValueError("not a critpotts configuration file")
    head = {}
    i = 1
    while lines[i] != "boundary":
        k, _, v = lines[i].partition(" ")
        head[k] = v
        i += 1
    i += 1
    bl = []
    while lines[i] != "end":
        a, b = lines[i].split()
        bl.append((int(a), int(b)))
        i += 1
    i += 2  # "end", "config"
    vals = []
    while lines[i] != "end":
        a, b = lines[i].split()
        if int(a) != len(vals):
            raise ValueError(f"configuration index {a} out of order")
        vals.append(int(b))
        i += 1
    lat = build_lattice(int(head.pop("n")), int(head.pop("n_prime")), Topology(head.pop("topology")))
    params = Params(float(head.pop("q")), float(head.pop("p")))
    kind = head.pop("kind")
    bck = head.pop("bc")
    if bck.startswith("fk"):
        if bck == "fk-periodic":
            bc = FKBoundary.periodic_bc(lat)
        else:
            groups = {}
            for v, c in bl:
                groups.setdefault(c, []).append(v)
            bc = FKBoundary.from_partition(lat, groups.values())
        config = np.array(vals, dtype=np.uint8)
        bc.check_config(config)
    else:
        if bck == "potts-periodic":
            bc = PottsBoundary.periodic_bc(lat)
        else:
            bc = PottsBoundary.from_marking(lat, dict(bl))
        config = np.array(vals, dtype=np.int64)
    if (kind == "bond") != isinstance(bc, FKBoundary):
        raise ValueError("configuration kind does not match the boundary type")
    return ConfigRecord(config, bc, params, head)


def save_config(path, config, bc, params, extra=None):
    Path(path).write_text(dumps_config(config, bc, params, extra))


def load_config(path) -> ConfigRecord:
    return loads_config(Path(path).read_text())


def save_checkpoint(path, state: ChainState, stream: UpdateStream, bc, params: Params):
    """Chain state plus the stream seed and position, enough to resume exactly."""
    if state.position != stream.position:
        raise ValueError("state and stream are out of step")
    extra = {"clock": repr(float(state.clock)), "seed": stream.seed,
             "position": stream.position, "mode": stream.mode.value,
             "approximate": int(state.approximate)}
    save_config(path, state.config, bc, params, extra)


def load_checkpoint(path):
    """``(state, stream, bc, params)`` with the stream fast-forwarded."""
    rec = load_config(path)
    bc = rec.bc
    n_loc = len(bc.dynamic_edge_list) if isinstance(bc, FKBoundary) else len(bc.dynamic_site_list)
    stream = UpdateStream(int(rec.extra["seed"]), n_loc, ScanMode(rec.extra["mode"]))
    stream.seek(int(rec.extra["position"]))
    state = ChainState(rec.config, float(rec.extra["clock"]), stream.position,
                       bool(int(rec.extra.get("approximate", 0))))
    return state, stream, bc, rec.params


# --------------------------------------------------------------------------
# experiment outputs

def build_id() -> str:
    """``git describe`` of the source tree, or ``"unknown"`` outside a checkout."""
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                           cwd=os.path.dirname(__file__), capture_output=True, text=True,
                           timeout=10)
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def metadata_lines(meta: dict, timestamp: bool = True) -> list[str]:
    """``# key=value`` header lines; the timestamp is kept out of the body."""
    out = []
    if timestamp:
        out.append(f"# created={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    out.extend(f"# {k}={v}" for k, v in meta.items())
    return out


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def write_csv(path, header, rows, meta: dict, timestamp: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = "\n".join(metadata_lines(meta, timestamp))
    path.write_text((head + "\n" if head else "") + csv_text(header, rows))
    return path


def read_csv_body(path) -> str:
    """CSV text with the ``#`` metadata lines removed."""
    return "".join(ln for ln in Path(path).read_text().splitlines(keepends=True)
                   if not ln.startswith("#"))


def write_ppm(path, rgb: np.ndarray, comments=()) -> Path:
    """Binary PPM (P6) from an ``(H, W, 3)`` uint8 array."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) array")
    H, W, _ = rgb.shape
    head = "P6\n" + "".join(f"# {c}\n" for c in comments) + f"{W} {H}\n255\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(head.encode("ascii") + rgb.tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary PPM file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(int(data[pos:end]))
        pos = end
    pos += 1  # single whitespace after maxval
    W, H, maxval = tokens
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    body = np.frombuffer(data[pos:pos + W * H * 3], dtype=np.uint8)
    if body.size != W * H * 3:
        raise ValueError("truncated PPM body")
    return body.reshape(H, W, 3)

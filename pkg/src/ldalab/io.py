"""Run configuration, artifact writers and the binary grid format.

Config files are INI-style: a ``[common]`` section plus one section per
subcommand, keys named like the command-line flags (dashes or underscores).
The binary grid format is ``b"LDAGRID1"``, a little-endian uint32 header
length, a UTF-8 JSON header (dim, shape, h, boundary, origin) and the site
values as little-endian float64.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import platform
import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .lattice import GridDensity, build_lattice

MAGIC = b"LDAGRID1"
OUTPUT_ENV = "LDALAB_OUTPUT_ROOT"


def read_config(path, section: str) -> dict:
    """Keys of ``[common]`` overlaid by ``[section]``, names normalized to underscores."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise InputError(f"cannot read config file {path}")
    out = {}
    for name in ("common", section):
        if cp.has_section(name):
            out.update({k.replace("-", "_"): v for k, v in cp.items(name)})
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def output_dir(out=None) -> Path:
    """``out`` if given, else ``$LDALAB_OUTPUT_ROOT``, else ``./ldalab_out``."""
    root = out or os.environ.get(OUTPUT_ENV) or "ldalab_out"
    p = Path(root)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    return str(o)


def to_json(obj) -> str:
    def clean(x):
        if isinstance(x, float) and not np.isfinite(x):
            return None
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    return json.dumps(clean(json.loads(json.dumps(obj, default=_default))), indent=2,
                      sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n")
    return path


def write_csv(path, rows, header) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_default(x) if isinstance(x, (np.generic, np.ndarray)) else x for x in r])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def save_grid(path, rho: GridDensity) -> Path:
    m = rho.model
    header = dict(dim=m.dim, shape=list(m.shape), h=m.h, boundary=m.boundary,
                  origin=m.coords[0].tolist())
    hb = json.dumps(header).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(np.asarray(rho.values, dtype="<f8").tobytes())
    return path


def load_grid(path, pot=None) -> GridDensity:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise InputError(f"{path} is not a grid file")
    (n,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12:12 + n].decode())
    except ValueError as exc:
        raise InputError(f"corrupt grid header in {path}") from exc
    vals = np.frombuffer(data[12 + n:], dtype="<f8")
    model = build_lattice(header["dim"], header["shape"], header["h"], header["boundary"],
                          pot, header["origin"])
    return GridDensity(model, vals.copy())


def versions() -> dict:
    import matplotlib
    import scipy

    from . import __version__

    return dict(python=platform.python_version(), numpy=np.__version__, scipy=scipy.__version__,
                matplotlib=matplotlib.__version__, ldalab=__version__)


def write_manifest(outdir, config: dict, artifacts, wall_time: float, seeds=None) -> Path:
    """Manifest naming the config hash that produced every artifact."""
    h = config_hash(config)
    man = dict(config=config, config_hash=h, versions=versions(), seeds=seeds or [],
               wall_time=wall_time,
               artifacts=[dict(path=str(Path(a).name), config_hash=h) for a in artifacts])
    return write_json(Path(outdir) / "manifest.json", man)

"""Machine-readable output: CSV/JSON writers at 17 significant digits and
the per-run manifest.

Every output file embeds the manifest hash (CSV via a leading comment line,
JSON via a top-level key) so orphan files are detectable.  Nothing
wall-clock dependent is ever written: identical config + seed reruns are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PreconditionError

SIG_DIGITS_FORMAT = "%.17g"


def fmt(x) -> str:
    """Render a float with 17 significant digits (lossless round trip)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if np.isnan(xf):
        return "nan"
    return SIG_DIGITS_FORMAT % xf


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _jsonify(obj):
    """Recursively convert numpy scalars/arrays for JSON serialization,
    keeping full float precision via repr-level round trip."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):  # before int: bool is an int subclass
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical_json(_jsonify(config)).encode()).hexdigest()


def code_hash() -> str:
    """Hash of the package sources, for reproducibility stamps."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for f in sorted(root.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def _experiment_defining(config: dict) -> dict:
    """The config portion that determines results: everything except the
    output location and the worker hint (which must never change outputs)."""
    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in config.items()}
    if isinstance(cfg.get("run"), dict):
        cfg["run"].pop("out", None)
        cfg["run"].pop("workers", None)
    return cfg


def params_hash(config: dict) -> str:
    """Hash of the experiment-defining config (excludes output location)."""
    return config_hash(_experiment_defining(config))


def build_manifest(subcommand: str, config: dict, master_seed: int) -> dict:
    defining = _experiment_defining(config)
    manifest = {
        "subcommand": subcommand,
        "config": _jsonify(config),
        "master_seed": int(master_seed),
        "package_version": __version__,
        "code_hash": code_hash(),
        "params_hash": config_hash(defining),
    }
    # the hash covers the experiment-defining portion, so reruns into a
    # different directory still stamp identical outputs
    manifest["manifest_hash"] = config_hash(
        {k: v for k, v in manifest.items() if k != "config"}
        | {"config": _jsonify(defining)})
    return manifest


def write_manifest(out_dir: Path, manifest: dict) -> str:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(_jsonify(manifest), sort_keys=True, indent=1) + "\n")
    return manifest["manifest_hash"]


def write_csv(path, header: list[str], columns: list, manifest_hash: str):
    """Delimited output: '# manifest=<hash>' comment line, header, rows."""
    columns = [np.asarray(c) for c in columns]
    if len({len(c) for c in columns}) > 1:
        raise PreconditionError("CSV columns of unequal length")
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# manifest={manifest_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def write_json(path, payload: dict, manifest_hash: str):
    payload = dict(payload)
    payload["manifest_hash"] = manifest_hash
    Path(path).write_text(
        json.dumps(_jsonify(payload), sort_keys=True, indent=1) + "\n")
    return Path(path)


def read_csv(path) -> tuple[list[str], np.ndarray, str | None]:
    """Read back a lorenzlab CSV: (header, data, manifest_hash)."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
        mhash = None
        if first.startswith("# manifest="):
            mhash = first.split("=", 1)[1]
            header = fh.readline().strip().split(",")
        else:
            header = first.split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data, mhash


def check_run_dir(out_dir) -> list[str]:
    """Names of orphan outputs (files that do not embed the manifest hash)."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    mhash = manifest["manifest_hash"]
    orphans = []
    for f in sorted(out_dir.iterdir()):
        if f.name == "manifest.json" or f.is_dir():
            continue
        if f.suffix == ".json":
            if json.loads(f.read_text()).get("manifest_hash") != mhash:
                orphans.append(f.name)
        elif f.suffix == ".csv":
            if not f.read_text().startswith(f"# manifest={mhash}"):
                orphans.append(f.name)
        elif f.suffix == ".png":
            continue  # figures are derived views, regenerable from the data
        else:
            orphans.append(f.name)
    return orphans

"""Content-addressed artifact manifests.

Every CLI subcommand writes its outputs plus a manifest recording the
command, resolved parameters, seed, input hashes, output hashes, and
library versions.  Manifests contain no timestamps, so a rerun with the
same inputs produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

MANIFEST_VERSION = 1


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def versions() -> dict:
    from ranloop import __version__
    return {"ranloop": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


def hash_inputs(inputs: dict) -> dict:
    """name -> {path, sha256} for every input file."""
    return {name: {"path": str(path), "sha256": sha256_file(path)}
            for name, path in sorted(inputs.items())}


def write_manifest(out_dir, command: str, params: dict, seed,
                   inputs: dict | None = None,
                   artifacts: dict | None = None) -> Path:
    """Write <out_dir>/manifest.json and return its path.

    `inputs` and `artifacts` map logical names to file paths; both are
    recorded with content hashes.
    """
    out_dir = Path(out_dir)
    # artifact paths are stored relative to the manifest so a rerun into a
    # different directory still produces byte-identical manifests
    produced = {name: {"path": str(Path(path).relative_to(out_dir)),
                       "sha256": sha256_file(path)}
                for name, path in sorted((artifacts or {}).items())}
    manifest = {
        "v": MANIFEST_VERSION,
        "command": command,
        "params": params,
        "seed": seed,
        "inputs": hash_inputs(inputs or {}),
        "artifacts": produced,
        "versions": versions(),
    }
    path = out_dir / "manifest.json"
    path.write_text(canonical_json(manifest))
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())

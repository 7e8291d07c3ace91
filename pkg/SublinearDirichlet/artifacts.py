"""Report files of an experiment run and their hash manifest"""

import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd


_logger = logging.getLogger('artifacts')

MANIFEST_NAME = 'manifest.json'


def _plain(value):
    """numpy scalars/arrays to plain Python, non-finite floats to None"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def sha256_of(fname: Union[str, Path]) -> str:
    """Hex SHA-256 of a file"""
    digest = hashlib.sha256()
    with open(fname, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactWriter:
    """Writes JSON and CSV reports into one directory and keeps the list of
    emitted files for the manifest. File names are relative to the directory."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def register(self, name: str) -> Path:
        """The path of a file written by the caller, listed in the manifest"""
        if name not in self.files:
            self.files.append(name)
        return self.out_dir / name

    def write_json(self, name: str, content) -> Path:
        """Pretty printed JSON with sorted keys"""
        path = self.register(name)
        with open(path, 'wt', encoding='utf8', newline='\n') as f:
            json.dump(_plain(content), f, indent=2, sort_keys=True)
            f.write('\n')
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """Decimal CSV with 17 significant digits, no index column"""
        path = self.register(name)
        frame.to_csv(path, index=False, float_format="%.17g", lineterminator='\n')
        return path

    def write_manifest(self) -> Path:
        """manifest.json with the SHA-256 of every emitted file"""
        entries = [{'file': name, 'sha256': sha256_of(self.out_dir / name)}
                   for name in sorted(self.files)]
        path = self.out_dir / MANIFEST_NAME
        with open(path, 'wt', encoding='utf8', newline='\n') as f:
            json.dump({'files': entries}, f, indent=2, sort_keys=True)
            f.write('\n')
        _logger.info("wrote %s files to %s", len(entries), self.out_dir)
        return path


def verify_manifest(directory: Union[str, Path]) -> list[str]:
    """Re-hashes every file listed in the manifest of a directory. Returns the
    names of missing or changed files (empty when everything matches)."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME if directory.is_dir() else directory
    base = manifest.parent
    with open(manifest, 'rt', encoding='utf8') as f:
        content = json.load(f)
    mismatches = []
    for entry in content.get('files', []):
        fname = base / entry['file']
        if not os.path.isfile(fname) or sha256_of(fname) != entry['sha256']:
            _logger.error("manifest mismatch: %s", entry['file'])
            mismatches.append(entry['file'])
    return mismatches

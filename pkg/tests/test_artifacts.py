"""Report writer and hash manifest"""
import json

import numpy as np
import pandas as pd

from SublinearDirichlet.artifacts import ArtifactWriter, sha256_of, verify_manifest


def test_json_is_sorted_and_finite(tmp_path):
    writer = ArtifactWriter(tmp_path / "out")
    path = writer.write_json('report.json', {
        'b': np.float64(np.inf),
        'a': np.arange(3),
        'c': {'flag': np.bool_(True), 'n': np.int64(4), 'x': float('nan')},
    })
    text = path.read_text(encoding="utf8")
    assert text.endswith("}\n")
    content = json.loads(text)
    assert list(content) == ['a', 'b', 'c']
    assert content == {'a': [0, 1, 2], 'b': None, 'c': {'flag': True, 'n': 4, 'x': None}}


def test_csv_keeps_full_precision(tmp_path):
    writer = ArtifactWriter(tmp_path)
    value = 0.1 + 0.2
    path = writer.write_csv('table.csv', pd.DataFrame({'x': [value], 'n': [1]}))
    lines = path.read_text(encoding="utf8").splitlines()
    assert lines[0] == "x,n"
    assert float(lines[1].split(',')[0]) == value


def test_manifest_lists_every_file(tmp_path):
    writer = ArtifactWriter(tmp_path)
    writer.write_json('b.json', {})
    writer.write_csv('a.csv', pd.DataFrame({'x': [1.0]}))
    (tmp_path / "extra.txt").write_text("written by the caller", encoding="utf8")
    writer.register('extra.txt')
    writer.register('extra.txt')
    manifest = json.loads(writer.write_manifest().read_text(encoding="utf8"))
    assert [e['file'] for e in manifest['files']] == ['a.csv', 'b.json', 'extra.txt']
    assert manifest['files'][1]['sha256'] == sha256_of(tmp_path / "b.json")
    assert verify_manifest(tmp_path) == []


def test_manifest_detects_changes(tmp_path):
    writer = ArtifactWriter(tmp_path)
    writer.write_json('a.json', {'value': 1})
    writer.write_json('b.json', {'value': 2})
    writer.write_manifest()
    (tmp_path / "a.json").write_text('{"value": 3}\n', encoding="utf8")
    (tmp_path / "b.json").unlink()
    assert verify_manifest(tmp_path / "manifest.json") == ['a.json', 'b.json']

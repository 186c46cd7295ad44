import json

import pytest

from forgesim.dataset import (
    DatasetSample,
    Provenance,
    read_manifest,
    real_sample,
    tally,
    write_manifest,
)
from forgesim.errors import CorruptManifest, InvalidInput


def samples():
    prov = Provenance(agent_id="a", chain="faceswap")
    return [
        real_sample(2, "xreal/2.png", "A photo."),
        real_sample(1, "xreal/1.png", "A photo."),
        DatasetSample("bp-00000001", "x>faceswap", "Forged.", 1, 1, 0, prov),
        DatasetSample("bp-00000001-s001", "x>faceswap", "Perfectly real!", 1, 0, 1,
                      Provenance(agent_id="a", chain="faceswap", event_ref="e", role="auditor")),
    ]


def test_tally():
    t = tally(samples())
    assert t == {"M": 2, "N": 2, "real": 2, "blueprint": 1, "social": 1, "delta_0": 1, "delta_1": 3, "total": 4}


def test_manifest_roundtrip_sorted(tmp_path):
    path = tmp_path / "m.jsonl"
    m = write_manifest(path, samples(), seed=3, config_digest="abc")
    lines = path.read_text().splitlines()
    assert len(lines) == 5
    ids = [json.loads(line)["sample_id"] for line in lines[1:]]
    assert ids == sorted(ids)
    again = read_manifest(path)
    assert again.samples == m.samples and again.header == m.header


def test_manifest_rejects_duplicates(tmp_path):
    with pytest.raises(InvalidInput):
        write_manifest(tmp_path / "m.jsonl", samples() + samples()[:1])


def test_manifest_detects_bad_counts(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, samples())
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(CorruptManifest):
        read_manifest(path)
    assert len(read_manifest(path, verify=False).samples) == 3


@pytest.mark.parametrize(
    "kw",
    [dict(y=2), dict(delta=1, mismatch_flag=1), dict(sample_id=""), dict(image_ref=""),
     dict(y=0, provenance=Provenance(chain="faceswap")), dict(y=0, delta=0, mismatch_flag=1)],
)
def test_sample_validation(kw):
    base = dict(sample_id="s", image_ref="i", text="t", y=1, delta=1, mismatch_flag=0)
    with pytest.raises(InvalidInput):
        DatasetSample(**{**base, **kw})

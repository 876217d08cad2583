import numpy as np
import pytest

from hgcn.data import (ClipRecord, SynthConfig, dataset_stats, generate_synthetic, motif_centroids,
                       read_container, read_manifest, split, unimodal_probe, write_container,
                       write_manifest)
from hgcn.errors import FormatError


def test_noiseless_cooccurrence_labels_follow_planted_rows():
    cfg = SynthConfig(n_clips=200, noise_sigma=0.0, seed=3)
    cen_a, cen_v = motif_centroids(cfg)
    for r in generate_synthetic(cfg):
        (ra,) = np.nonzero(np.abs(r.audio).sum(axis=1))[0]
        (rv,) = np.nonzero(np.abs(r.video).sum(axis=1))[0]
        c_a = int(np.argmin(np.abs(cen_a - r.audio[ra]).sum(axis=1)))
        c_v = int(np.argmin(np.abs(cen_v - r.video[rv]).sum(axis=1)))
        assert r.label[1] == float(c_a == c_v)
        assert r.label.sum() == 1


def test_label_marginal():
    recs = generate_synthetic(SynthConfig(n_clips=10000, seed=1))
    rate = np.mean([r.label[1] for r in recs])
    assert abs(rate - 0.5) < 0.02


def test_xor_writes_motif_everywhere():
    recs = generate_synthetic(SynthConfig(n_clips=50, task="xor", noise_sigma=0.0, seed=2))
    for r in recs:
        assert np.allclose(r.audio, r.audio[0]) and np.allclose(r.video, r.video[0])
    assert {r.label[1] for r in recs} == {0.0, 1.0}


def test_generation_is_deterministic():
    a = generate_synthetic(SynthConfig(n_clips=30, seed=4))
    b = generate_synthetic(SynthConfig(n_clips=30, seed=4))
    assert a == b
    assert a != generate_synthetic(SynthConfig(n_clips=30, seed=5))


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_motifs=1)
    with pytest.raises(ValueError):
        SynthConfig(noise_sigma=-0.1)


def test_container_errors(tmp_path):
    recs = generate_synthetic(SynthConfig(n_clips=5, n_audio=4, n_video=2, d_audio=3, d_video=3))
    path = tmp_path / "d.avf"
    write_container(recs, path)
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="offset 0"):
        read_container(path)
    path.write_bytes(raw[:-10])
    with pytest.raises(FormatError, match="clip 4"):
        read_container(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="trailing"):
        read_container(path)
    odd = recs[:2] + [ClipRecord(np.zeros((5, 3)), recs[0].video, recs[0].label, "x")]
    with pytest.raises(ValueError):
        write_container(odd, path)


def test_unicode_ids_round_trip(tmp_path):
    recs = generate_synthetic(SynthConfig(n_clips=3, n_audio=2, n_video=2, d_audio=2, d_video=2))
    recs[1].id = "clip-é-日本"
    write_container(recs, tmp_path / "u.avf")
    assert read_container(tmp_path / "u.avf") == recs


def test_split_properties():
    recs = generate_synthetic(SynthConfig(n_clips=101, n_audio=2, n_video=2, d_audio=2, d_video=2))
    tr, va, te = split(recs, (0.7, 0.2, 0.1), seed=1)
    ids = [r.id for r in tr + va + te]
    assert len(ids) == 101 and len(set(ids)) == 101
    again = split(recs, (0.7, 0.2, 0.1), seed=1)
    assert [r.id for r in again[0]] == [r.id for r in tr]
    assert split(recs, (1, 0, 0))[0] == list(split(recs, (1, 0, 0))[0])
    assert len(split(recs, (1, 0, 0))[0]) == 101
    with pytest.raises(ValueError):
        split(recs, (0.5, 0.2, 0.2))


def test_manifest(tmp_path):
    recs = generate_synthetic(SynthConfig(n_clips=6, n_audio=2, n_video=2, d_audio=2, d_video=2))
    write_container(recs[:4], tmp_path / "a.avf")
    write_container(recs[4:], tmp_path / "b.avf")
    write_manifest(tmp_path / "m.json", [("a.avf", "train"), ("b.avf", "test")])
    parts = read_manifest(tmp_path / "m.json")
    assert parts["train"] == recs[:4] and parts["test"] == recs[4:] and parts["val"] == []


def test_stats():
    recs = generate_synthetic(SynthConfig(n_clips=40))
    s = dataset_stats(recs)
    assert (s["Q"], s["P"], s["D_a"], s["D_v"], s["C"]) == (30, 10, 16, 16, 2)


def test_audio_alone_is_uninformative():
    recs = generate_synthetic(SynthConfig(n_clips=2000, seed=6))
    tr, _, te = split(recs, (0.75, 0.0, 0.25), seed=0)
    assert unimodal_probe(tr, te, "audio") <= 0.55

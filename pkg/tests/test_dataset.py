import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tripperm.dataset import (
    Dataset, Sample, View, held_out_dataset, load_manifest, save_manifest,
    split_prid_protocol, synth_dataset,
)
from tripperm.errors import DimensionError, ManifestError, ProtocolError, UniquenessError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_view_has_exactly_two_values():
    assert [v.value for v in View] == ["A", "B"]
    with pytest.raises(ValueError):
        View("C")


def test_minimal_manifest(tmp_path):
    p = write(tmp_path / "m.csv", "identity,view,source_tag,f0,f1\n1,A,,0.0,0.0\n1,B,,0.1,0.0\n")
    ds = load_manifest(p)
    assert len(ds) == 2 and ds.d == 2 and ds.P == 1
    assert ds[1].data.tolist() == [0.1, 0.0]
    assert ds[0].source_tag is None


def test_duplicate_identity_view_rejected(tmp_path):
    p = write(tmp_path / "m.csv", "identity,view,source_tag,f0\n1,A,,0.0\n1,A,,1.0\n")
    with pytest.raises(UniquenessError, match="line 3"):
        load_manifest(p)


def test_eight_row_manifest_recount(tmp_path):
    lines = ["identity,view,source_tag,f0,f1"]
    for i in range(4):
        for v in "AB":
            lines.append(f"{i + 10},{v},img_{i}_{v}.png,{i}.5,{-i}.25")
    p = write(tmp_path / "m.csv", "\n".join(lines) + "\n")
    ds = load_manifest(p)

    # independent recount over the raw rows
    rows = [ln.split(",")[:2] for ln in lines[1:]]
    by_id = {}
    for ident, view in rows:
        by_id.setdefault(ident, set()).add(view)
    recount = sum(1 for vs in by_id.values() if vs == {"A", "B"})
    assert ds.P == recount == 4
    assert [s.source_tag for s in ds][:2] == ["img_0_A.png", "img_0_B.png"]


@pytest.mark.parametrize("body, exc, line", [
    ("x,A,,1.0\n", ManifestError, 2),
    ("1,C,,1.0\n", ManifestError, 2),
    ("1,A,,abc\n", ManifestError, 2),
    ("1,A,,1.0\n2,A,,nan\n", ManifestError, 3),
])
def test_malformed_rows_name_line(tmp_path, body, exc, line):
    p = write(tmp_path / "m.csv", "identity,view,source_tag,f0\n" + body)
    with pytest.raises(exc) as info:
        load_manifest(p)
    assert info.value.line == line


def test_dimension_mismatch(tmp_path):
    p = write(tmp_path / "m.csv", "identity,view,source_tag,f0,f1\n1,A,,1.0,2.0\n1,B,,1.0\n")
    with pytest.raises(DimensionError, match="line 3"):
        load_manifest(p)


def test_bad_header(tmp_path):
    p = write(tmp_path / "m.csv", "id,view,source_tag,f0\n")
    with pytest.raises(ManifestError):
        load_manifest(p)


def test_dataset_rejects_mixed_dimensions():
    with pytest.raises(DimensionError):
        Dataset([Sample(0, View.A, [1.0]), Sample(0, View.B, [1.0, 2.0])])


def test_synth_zero_noise_shift_exact():
    ds = synth_dataset(2, 0, d=2, view_shift=[1, 0], noise_sigma=0, seed=3)
    assert len(ds) == 4
    for i in ds.shared_identities:
        diff = ds[ds.position(i, "B")].data - ds[ds.position(i, "A")].data
        assert diff.tolist() == [1.0, 0.0]


def test_synth_counts():
    ds = synth_dataset(10, 5, d=4, view_shift=np.zeros(4), noise_sigma=0.1, seed=0)
    assert len(ds) == 2 * 10 + 5 == 25
    assert len(ds.identities("A")) == 10
    assert len(ds.identities("B")) == 15
    assert ds.P == 10


def test_synth_deterministic():
    a = synth_dataset(5, 3, d=3, view_shift=[0.5, 0, 0], noise_sigma=0.2, seed=9)
    b = synth_dataset(5, 3, d=3, view_shift=[0.5, 0, 0], noise_sigma=0.2, seed=9)
    assert a == b
    assert a.matrix.tobytes() == b.matrix.tobytes()
    assert a != synth_dataset(5, 3, d=3, view_shift=[0.5, 0, 0], noise_sigma=0.2, seed=10)


def test_synth_preconditions():
    with pytest.raises(DimensionError):
        synth_dataset(3, 0, d=2, view_shift=[1, 2, 3])
    with pytest.raises(ValueError):
        synth_dataset(0, 0, d=2)


@given(
    p_shared=st.integers(1, 6), extra_b=st.integers(0, 4), d=st.integers(1, 5),
    sigma=st.sampled_from([0.0, 1e-3, 0.7, 123.0]), seed=st.integers(0, 2**31),
)
@settings(max_examples=40, deadline=None)
def test_manifest_round_trip_bit_exact(tmp_path_factory, p_shared, extra_b, d, sigma, seed):
    ds = synth_dataset(p_shared, extra_b, d=d, view_shift=np.linspace(-1, 1, d) / 3,
                       noise_sigma=sigma, seed=seed)
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    save_manifest(ds, path)
    back = load_manifest(path)
    assert back == ds
    assert back.matrix.tobytes() == ds.matrix.tobytes()


def test_manifest_round_trip_keeps_none_and_tags(tmp_path):
    ds = Dataset([Sample(3, View.B, [-0.0, 1e-300], None), Sample(3, View.A, [1 / 3, 2.5e10], "a,b.png")])
    save_manifest(ds, tmp_path / "m.csv")
    assert load_manifest(tmp_path / "m.csv") == ds
    raw = (tmp_path / "m.csv").read_bytes()
    assert b"\r\n" not in raw


def test_split_prid_shape():
    ds = synth_dataset(200, 549, d=4, view_shift=np.ones(4), noise_sigma=0.1, seed=0, extra_a=185)
    assert len(ds.identities("A")) == 385 and len(ds.identities("B")) == 749
    train, split = split_prid_protocol(ds, 100, seed=0)
    assert len(split.probe) == 100
    assert len(split.gallery) == 649
    assert train.P == 100 and len(train) == 200


def test_split_smallest():
    ds = synth_dataset(2, 3, d=2, noise_sigma=0.1, seed=0)
    train, split = split_prid_protocol(ds, 1, seed=4)
    assert len(split.probe) == 1
    assert len(split.gallery) == len(ds.identities("B")) - 1


def test_split_too_few():
    ds = synth_dataset(3, 0, d=2, seed=0)
    with pytest.raises(ProtocolError):
        split_prid_protocol(ds, 3, seed=0)


@given(p=st.integers(2, 25), extra=st.integers(0, 10), seed=st.integers(0, 1000), data=st.data())
@settings(max_examples=50, deadline=None)
def test_split_invariants(p, extra, seed, data):
    ds = synth_dataset(p, extra, d=2, noise_sigma=0.5, seed=seed, extra_a=extra // 2)
    n_train = data.draw(st.integers(0, p - 1))
    train, split = split_prid_protocol(ds, n_train, seed=seed)
    train_ids = set(split.train_identities)
    probe_ids = [s.identity for s in split.probe]
    # exhaustive set-intersection check
    assert not any(i in train_ids for i in probe_ids)
    assert len(split.probe) == p - n_train
    assert all(s.view is View.A for s in split.probe)
    assert all(s.view is View.B for s in split.gallery)
    gallery_ids = [s.identity for s in split.gallery]
    for i in probe_ids:
        assert gallery_ids.count(i) == 1
    assert not train_ids & set(gallery_ids)
    assert set(train.identities()) == train_ids
    assert held_out_dataset(ds, split).shared_identities == sorted(probe_ids)


def test_split_deterministic():
    ds = synth_dataset(30, 5, d=2, seed=1)
    a = split_prid_protocol(ds, 10, seed=3)[1]
    b = split_prid_protocol(ds, 10, seed=3)[1]
    assert a.train_identities == b.train_identities
    assert a.probe == b.probe and a.gallery == b.gallery


def test_single_shot_uniqueness_invariant():
    ds = synth_dataset(7, 4, d=3, seed=2, extra_a=2)
    assert len({s.key for s in ds}) == len(ds)

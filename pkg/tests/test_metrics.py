import numpy as np
import pytest

from strandkit import metrics
from strandkit.errors import DataError
from strandkit.geom import normalize
from strandkit.strands import Strand, StrandSet

rng = np.random.Generator(np.random.Philox(key=71))


def random_strand_set(n_strands=10, n_verts=25, box=60.0, seed_rng=None):
    r = seed_rng if seed_rng is not None else rng
    strands = []
    for _ in range(n_strands):
        start = r.uniform(-box, box, 3)
        d = normalize(r.normal(size=3))
        steps = normalize(d + 0.2 * r.normal(size=(n_verts - 1, 3)))
        v = np.concatenate([[start], start + np.cumsum(steps, axis=0)])
        strands.append(Strand(vertices=v))
    return StrandSet(strands)


def test_eval_identity_all_ones():
    gt = random_strand_set()
    report = metrics.evaluate(gt, gt)
    for vs in report.voxel_sizes:
        assert report.occupancy[vs] == (1.0, 1.0, 1.0)
        for ang in report.angles:
            assert report.orientation[(vs, ang)] == (1.0, 1.0, 1.0)


def test_eval_empty_rec_all_zero():
    gt = random_strand_set()
    report = metrics.evaluate(gt, StrandSet([]))
    for vs in report.voxel_sizes:
        assert report.occupancy[vs] == (0.0, 0.0, 0.0)


def test_eval_empty_gt_raises():
    with pytest.raises(DataError):
        metrics.occupancy_prf(StrandSet([]), random_strand_set(), 3.0)


def test_translated_copy_matches_voxel_set_oracle():
    vs = 2.0
    gt = random_strand_set(12, 30)
    rec = StrandSet([Strand(vertices=s.vertices + [vs, 0.0, 0.0]) for s in gt])
    p, r, f1 = metrics.occupancy_prf(gt, rec, vs)

    # direct python-set oracle on densified vertices
    gv, _ = gt.resampled(vs / 2.0).all_vertices_tangents()
    rv, _ = rec.resampled(vs / 2.0).all_vertices_tangents()
    origin = np.minimum(gv.min(axis=0), rv.min(axis=0)) - 0.5 * vs
    G = set(map(tuple, np.floor((gv - origin) / vs).astype(int).tolist()))
    R = set(map(tuple, np.floor((rv - origin) / vs).astype(int).tolist()))
    assert p == pytest.approx(len(G & R) / len(R))
    assert r == pytest.approx(len(G & R) / len(G))
    assert 0.0 < f1 < 1.0


def test_orientation_never_exceeds_occupancy():
    for trial in range(5):
        gt = random_strand_set(8, 20)
        rec = random_strand_set(8, 20)
        rep = metrics.evaluate(gt, rec)
        for vs in rep.voxel_sizes:
            op, orr, _ = rep.occupancy[vs]
            for ang in rep.angles:
                qp, qr, _ = rep.orientation[(vs, ang)]
                assert qp <= op + 1e-12
                assert qr <= orr + 1e-12


def test_orientation_monotone_in_angle():
    gt = random_strand_set(10, 25)
    noisy = StrandSet([
        Strand(vertices=s.vertices + 0.8 * rng.normal(size=s.vertices.shape))
        for s in gt
    ])
    rep = metrics.evaluate(gt, noisy, angles=(10.0, 25.0, 60.0))
    for vs in rep.voxel_sizes:
        f1s = [rep.orientation[(vs, a)][2] for a in (10.0, 25.0, 60.0)]
        assert f1s[0] <= f1s[1] + 1e-12 <= f1s[2] + 2e-12


def test_noisy_tangents_lower_orientation_recall():
    gt = random_strand_set(10, 40)
    # same geometry, tangents perturbed by resampling a jittered copy
    jitter = StrandSet([
        Strand(vertices=s.vertices + np.cumsum(0.35 * rng.normal(size=s.vertices.shape), axis=0))
        for s in gt
    ])
    rep = metrics.evaluate(gt, jitter, angles=(20.0,))
    for vs in rep.voxel_sizes:
        assert rep.orientation[(vs, 20.0)][1] <= rep.occupancy[vs][1] + 1e-12


def test_dilate_never_hurts_precision():
    gt = random_strand_set(10, 25)
    rec = StrandSet([Strand(vertices=s.vertices + 1.0) for s in gt])
    p0, _, _ = metrics.occupancy_prf(gt, rec, 3.0, dilate=0)
    p1, _, _ = metrics.occupancy_prf(gt, rec, 3.0, dilate=1)
    assert p1 >= p0


def test_format_table_and_csv(tmp_path):
    gt = random_strand_set(5, 15)
    rep = metrics.evaluate(gt, gt)
    table = metrics.format_table(rep)
    assert "occ F1" in table and "ori F1" in table
    csv_path = tmp_path / "m.csv"
    metrics.write_csv(csv_path, rep)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].split(",")[:2] == ["voxel_size_mm", "angle_deg"]
    assert len(lines) == 1 + len(rep.voxel_sizes) * len(rep.angles)
    assert all(row.split(",")[4] == "1.000000" for row in lines[1:])


def test_plot_report(tmp_path):
    gt = random_strand_set(5, 15)
    rep = metrics.evaluate(gt, gt)
    out = tmp_path / "m.png"
    metrics.plot_report(out, rep)
    assert out.stat().st_size > 0

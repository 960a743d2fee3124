import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mslc.metrics import (
    PSNR_CAP_DB,
    MetricConfig,
    MetricRow,
    bitrate,
    chamfer_sym,
    estimate_normals,
    f1,
    f1_counts,
    peak_constant,
    psnr_d2,
    psnr_d2_report,
    read_csv,
    write_csv,
)
from mslc.coder.container import Frame
from mslc.pointcloud import Sweep


def brute_f1_counts(P, Q, tau, tau_i):
    p, q = P.positions, Q.positions
    pi, qi = P.intensities.astype(int), Q.intensities.astype(int)
    tp = 0
    p_hit = [False] * len(p)
    for j in range(len(q)):
        hit = False
        for i in range(len(p)):
            d2 = sum((q[j][a] - p[i][a]) ** 2 for a in range(3))
            if d2 <= tau * tau and abs(qi[j] - pi[i]) <= tau_i:
                hit = True
                p_hit[i] = True
        tp += hit
    return tp, len(q) - tp, p_hit.count(False)


def brute_nn(src, dst):
    """Nearest ``dst`` row per ``src`` row, ranked by squared distance then index."""
    out = []
    for s in src:
        d2 = [sum((s[a] - t[a]) ** 2 for a in range(3)) for t in dst]
        j = min(range(len(dst)), key=lambda k: (d2[k], k))
        out.append((j, math.sqrt(d2[j])))
    return out


def brute_chamfer(P, Q):
    a = np.mean([d for _, d in brute_nn(P, Q)])
    b = np.mean([d for _, d in brute_nn(Q, P)])
    return max(a, b)


def brute_psnr(P, Q, peak, k):
    p, q = np.asarray(P), np.asarray(Q)
    normals = []
    for x in p:
        d = ((p - x) ** 2).sum(1)
        nb = p[sorted(range(len(p)), key=lambda i: (d[i], i))[: min(k, len(p))]]
        c = nb - nb.mean(0)
        w, v = np.linalg.eigh(c.T @ c / len(nb))
        normals.append(v[:, 0])
    normals = np.array(normals)
    e1 = [float(np.dot(q[j] - p[i], normals[i]) ** 2) for j, (i, _) in enumerate(brute_nn(q, p))]
    e2 = [float(np.dot(p[i] - q[j], normals[i]) ** 2) for i, (j, _) in enumerate(brute_nn(p, q))]
    mse = max(np.mean(e1), np.mean(e2))
    if mse == 0:
        return PSNR_CAP_DB
    return min(10 * math.log10(3 * peak**2 / mse), PSNR_CAP_DB)


def _pair(seed, grid=False):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 200, 2)
    if grid:
        p = rng.integers(-3, 4, (n, 3)) * 0.05
        q = rng.integers(-3, 4, (m, 3)) * 0.05
    else:
        p = rng.normal(size=(n, 3))
        q = p[rng.integers(0, n, m)] + rng.normal(scale=0.05, size=(m, 3))
    return Sweep(p, rng.integers(0, 4, n)), Sweep(q, rng.integers(0, 4, m))


@pytest.mark.parametrize("seed", range(12))
def test_f1_and_chamfer_match_brute_force(seed):
    P, Q = _pair(seed, grid=seed % 2 == 0)
    cfg = MetricConfig(tau_geo=0.1, tau_int=1)
    assert f1_counts(P, Q, cfg) == brute_f1_counts(P, Q, 0.1, 1)
    assert chamfer_sym(P, Q) == pytest.approx(brute_chamfer(P.positions, Q.positions), rel=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_psnr_matches_brute_force(seed):
    P, Q = _pair(seed)
    cfg = MetricConfig()
    assert psnr_d2(P, Q, cfg) == pytest.approx(brute_psnr(P.positions, Q.positions, cfg.peak, cfg.normal_k), rel=1e-9)


def test_f1_boundary_is_inclusive():
    P = Sweep([[0, 0, 0]], [10])
    Q = Sweep([[0.1, 0, 0]], [10])
    assert f1(P, Q, MetricConfig(tau_geo=0.1)) == 1.0
    assert f1(P, Sweep([[0.1 + 1e-6, 0, 0]], [10]), MetricConfig(tau_geo=0.1)) == 0.0


def test_f1_intensity_threshold():
    P = Sweep([[0, 0, 0]], [10])
    Q = Sweep([[0, 0, 0]], [12])
    assert f1(P, Q, MetricConfig(tau_int=1)) == 0.0
    assert f1(P, Q, MetricConfig(tau_int=2)) == 1.0


def test_f1_empty_cases():
    E = Sweep(np.zeros((0, 3)), [])
    P = Sweep([[0, 0, 0]], [1])
    assert f1(E, E) == 1.0
    assert f1(P, E) == 0.0 and f1(E, P) == 0.0


def test_identical_clouds():
    P, _ = _pair(3)
    assert chamfer_sym(P, P) == 0.0
    assert psnr_d2(P, P) == PSNR_CAP_DB


def test_chamfer_is_max_of_directions():
    P = Sweep([[0, 0, 0]], [0])
    Q = Sweep([[0, 0, 0], [3, 0, 0]], [0, 0])
    # P->Q mean 0, Q->P mean 1.5
    assert chamfer_sym(P, Q) == 1.5
    assert chamfer_sym(Q, P) == 1.5


def test_empty_cloud_errors():
    E = Sweep(np.zeros((0, 3)), [])
    with pytest.raises(ValueError):
        chamfer_sym(E, Sweep([[0, 0, 0]], [0]))
    with pytest.raises(ValueError):
        psnr_d2(Sweep([[0, 0, 0]], [0]), E)


def test_normals_of_plane(rng):
    pts = np.c_[rng.uniform(size=(40, 2)), np.zeros(40)]
    n, deg = estimate_normals(pts, 8)
    np.testing.assert_allclose(np.abs(n[:, 2]), 1.0, atol=1e-9)
    assert not deg.any()


def test_collinear_flagged_degenerate():
    pts = np.c_[np.arange(10.0), np.zeros(10), np.zeros(10)]
    _, deg = estimate_normals(pts, 5)
    assert deg.all()
    assert psnr_d2_report(pts, pts + [0, 0, 0.01]).degenerate_normals == 10


def test_psnr_plane_offset_closed_form(rng):
    pts = np.c_[rng.uniform(size=(60, 2)) * 10, np.zeros(60)]
    shifted = pts + [0, 0, 0.02]
    # every point-to-plane error is exactly 0.02
    expected = 10 * math.log10(3 * 59.70**2 / 0.02**2)
    assert psnr_d2(pts, shifted) == pytest.approx(expected, rel=1e-9)


def test_peak_constant():
    s = Sweep([[0, 0, 0], [1, 0, 0], [5, 0, 0]], [0, 0, 0])
    assert peak_constant([s]) == 4.0
    assert peak_constant([Sweep([[0, 0, 0]], [0])]) == 0.0


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(tau_geo=-1)
    with pytest.raises(ValueError):
        MetricConfig(peak=0)


class TestBitrate:
    def test_sections_and_spatial(self):
        f = Frame([b"a" * 10, b"b" * 5, b"c" * 7, b"d" * 9])
        br = bitrate([f], 4)
        framing = 8 * (4 + 16)
        assert br.total == pytest.approx((8 * 31 + framing) / 4)
        assert br.spatial == pytest.approx((8 * 24 + framing) / 4)
        assert br.sections["intensity"] == 14.0

    def test_zero_points(self):
        with pytest.raises(ValueError):
            bitrate([], 0)


def test_csv_round_trip(tmp_path):
    rows = [MetricRow(0, 11, 1.5, 1.0, 0.9, 0.05, 70.0), MetricRow(1, 11, 2.5, 2.0, 0.8, 0.06, 69.0)]
    write_csv(rows, tmp_path / "m.csv")
    back = read_csv(tmp_path / "m.csv")
    assert [float(r["bpp_total"]) for r in back] == [1.5, 2.5]

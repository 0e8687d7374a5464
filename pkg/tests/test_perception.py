import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tacfoot import perception as P
from tacfoot.controller import true_edge_angle
from tacfoot.errors import DegenerateArc, LengthMismatch, NoTransition, Unfitted
from tacfoot.geometry import ArcSpec, Pose2D, RobotParams, arc_points, foot_position
from tacfoot.sensor import PinLayout, SensorParams, frame_distance_profile, simulate_tap
from tacfoot.terrain import BeamTerrain, TableTerrain, signed_edge_distance

LAYOUT = PinLayout.concentric()
CLEAN = SensorParams(pin_noise_sigma=0.0)
ROBOT = RobotParams()
BEAM = BeamTerrain()
POSE = Pose2D(-60, 0, 0)

vec = arrays(np.float64, 12, elements=st.floats(-50, 50))


def dissimilarity_loop(a, b):
    total = 0.0
    for i in range(0, len(a), 2):
        total += (a[i] - b[i]) ** 2 + (a[i + 1] - b[i + 1]) ** 2
    return math.sqrt(total / (len(a) // 2))


def gp_oracle(x, y, q, ell, sf2, sn2):
    # dense solve with an explicit double loop for the kernel
    def k(a, b):
        return np.array([[sf2 * math.exp(-np.sum((u - v) ** 2) / (2 * ell ** 2)) for v in b] for u in a])
    kxx = k(x, x) + sn2 * np.eye(len(x))
    kq = k(q, x)
    mean = kq @ np.linalg.solve(kxx, y)
    var = sf2 - np.einsum("ij,ji->i", kq, np.linalg.solve(kxx, kq.T))
    return mean, var


def clean_arc(arc=ArcSpec(-7, 7.5, 31), pose=POSE, terrain=BEAM):
    pts = arc_points(pose, ROBOT, arc)
    frames = frame_distance_profile(LAYOUT, CLEAN, terrain, pts, 0, heading=pose.heading)
    return [(a, f.feature()) for (a, _), f in zip(pts, frames)], pts


def edge_reference(pose=POSE, terrain=BEAM, near=-7.0):
    te = true_edge_angle(terrain, pose, ROBOT, near)
    f = simulate_tap(LAYOUT, CLEAN, terrain, foot_position(pose, ROBOT, te), yaw=pose.heading + te)
    return P.ReferenceTap(f.feature(), {"truth": te}), te


# ------------------------------------------------------------ dissimilarity


def test_dissimilarity_examples():
    a = np.arange(12, dtype=float)
    assert P.dissimilarity(a, a) == 0.0
    b = a + np.tile([3.0, 4.0], 6)
    assert P.dissimilarity(a, b) == pytest.approx(5.0, abs=1e-12)


@given(a=vec, b=vec)
def test_dissimilarity_matches_loop(a, b):
    assert P.dissimilarity(a, b) == pytest.approx(dissimilarity_loop(a, b), abs=1e-12)


@given(a=vec, b=vec, c=vec)
def test_dissimilarity_metric_axioms(a, b, c):
    dab = P.dissimilarity(a, b)
    assert dab >= 0
    assert dab == P.dissimilarity(b, a)
    assert (dab == 0) == np.array_equal(a, b)
    assert P.dissimilarity(a, c) <= dab + P.dissimilarity(b, c) + 1e-9


def test_dissimilarity_length_mismatch():
    with pytest.raises(LengthMismatch):
        P.dissimilarity(np.zeros(6), np.zeros(8))
    with pytest.raises(LengthMismatch):
        P.dissimilarity(np.zeros(5), np.zeros(5))


# ------------------------------------------------------------ alignment


def shifted_arc(magnitudes, angles):
    # tap k is the zero pattern shifted by magnitudes[k] along x
    return [(a, np.tile([m, 0.0], 4)) for a, m in zip(angles, magnitudes)]


def test_exact_match_labels_relative_angles():
    arc, _ = clean_arc()
    ref = P.ReferenceTap(arc[7][1].copy())
    al = P.align_arc(arc, ref)
    assert al.index == 7
    hips = np.array([a for a, _ in arc])
    assert al.labels[7] == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(al.labels, hips - hips[7], atol=0.5 * 0.5)


def test_symmetric_profile_has_no_offset():
    arc = shifted_arc([4, 2, 1, 2, 4], [-2, -1, 0, 1, 2])
    al = P.align_arc(arc, P.ReferenceTap(np.zeros(8)))
    assert al.index == 2 and al.offset == 0.0 and al.edge_angle == 0.0


def test_parabolic_refinement_oracle():
    # d = |angle - 0.3| sampled on a unit grid; the vertex of the parabola through 3 points
    angles = [-2.0, -1.0, 0.0, 1.0, 2.0]
    d = [abs(a - 0.3) + 1 for a in angles]
    al = P.align_arc(shifted_arc(d, angles), P.ReferenceTap(np.zeros(8)))
    y0, y1, y2 = d[1], d[2], d[3]
    vertex = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    assert al.edge_angle == pytest.approx(vertex, abs=1e-12)
    assert -0.5 <= al.offset <= 0.5


def test_argmin_ties_prefer_centre_then_index():
    al = P.align_arc(shifted_arc([1, 3, 3, 1, 3], [-2, -1, 0, 1, 2]), P.ReferenceTap(np.zeros(8)))
    assert al.index == 3
    al = P.align_arc(shifted_arc([3, 1, 3, 1, 3], [-2, -1, 0, 1, 2]), P.ReferenceTap(np.zeros(8)))
    assert al.index == 1


def test_boundary_and_flat_flags():
    al = P.align_arc(shifted_arc([0, 1, 2, 3], [0, 1, 2, 3]), P.ReferenceTap(np.zeros(8)))
    assert al.boundary and not al.bracketed
    al = P.align_arc(shifted_arc([1.0, 1.01, 1.0 + 1e-3, 1.02], [0, 1, 2, 3]), P.ReferenceTap(np.zeros(8)))
    assert al.flat and not al.bracketed


def test_degenerate_arcs():
    with pytest.raises(DegenerateArc):
        P.align_arc(shifted_arc([0, 1], [0, 1]), P.ReferenceTap(np.zeros(8)))
    with pytest.raises(DegenerateArc):
        P.align_arc(shifted_arc([0, 1, 2], [0, 2, 1]), P.ReferenceTap(np.zeros(8)))


@given(seed=st.integers(0, 10_000), n=st.integers(3, 25))
@settings(max_examples=50)
def test_labels_are_a_rigid_shift(seed, n):
    rng = np.random.default_rng(seed)
    angles = np.cumsum(rng.uniform(0.1, 2.0, n)) - 5
    arc = [(a, rng.normal(size=8)) for a in angles]
    labels = P.align_arc(arc, P.ReferenceTap(rng.normal(size=8))).labels
    assert np.allclose(labels[:, None] - labels[None, :], angles[:, None] - angles[None, :], atol=1e-9)


def test_noise_free_alignment_finds_true_edge():
    arc, _ = clean_arc()
    ref, te = edge_reference()
    al = P.align_arc(arc, ref)
    assert abs(arc[al.index][0] - te) <= ArcSpec(-7, 7.5, 31).spacing
    assert np.all(np.diff(al.labels) > 0)


# ------------------------------------------------------------ reference selection


def test_select_reference_needs_transition():
    arc, _ = clean_arc(ArcSpec(0, 7.5, 31), Pose2D(0, 0, 0), TableTerrain(radius=5000))
    with pytest.raises(NoTransition):
        P.select_reference(arc, LAYOUT.rest_positions)


def test_selected_reference_sits_on_the_edge():
    arc, pts = clean_arc()
    ref = P.select_reference(arc, LAYOUT.rest_positions, source={"arc_id": 0})
    k = ref.source["tap_index"]
    assert abs(signed_edge_distance(BEAM, pts[k][1])) <= CLEAN.edge_decay_length
    assert ref.source["arc_id"] == 0


def test_select_reference_override():
    arc, _ = clean_arc()
    ref = P.select_reference(arc, LAYOUT.rest_positions, override=12)
    assert np.array_equal(ref.feature, arc[12][1]) and ref.source["tap_index"] == 12


# ------------------------------------------------------------ GP


def test_hyperparameters_follow_median_heuristic():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(9, 4)), rng.normal(size=9)
    m = P.fit(P.GPModel(features=x, labels=y, noise_floor=0.01))
    dists = sorted(np.linalg.norm(x[i] - x[j]) for i, j in itertools.combinations(range(9), 2))
    assert len(dists) == 36
    assert m.lengthscale == pytest.approx(0.5 * (dists[17] + dists[18]), abs=1e-12)
    assert m.signal_var == pytest.approx(float(np.mean(y ** 2)))
    assert m.noise_var == pytest.approx(max(1e-4 * m.signal_var, 0.01))


@given(seed=st.integers(0, 2**20))
@settings(max_examples=30)
def test_predict_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(12, 6)), rng.normal(size=12) * 3
    m = P.fit(P.GPModel(features=x, labels=y))
    q = rng.normal(size=(4, 6))
    mean, var = gp_oracle(x, y, q, m.lengthscale, m.signal_var, m.noise_var)
    for i in range(4):
        mu, sd = P.predict(m, q[i])
        assert mu == pytest.approx(mean[i], abs=1e-8)
        assert sd ** 2 == pytest.approx(max(var[i], 0.0), abs=1e-8)


def test_two_taps_near_interpolate():
    m = P.from_taps([P.LabeledTap(np.array([0.0, 0.0]), -2.0), P.LabeledTap(np.array([1.0, 0.0]), 3.0)])
    for x, y in ((np.array([0.0, 0.0]), -2.0), (np.array([1.0, 0.0]), 3.0)):
        assert abs(P.predict(m, x)[0] - y) <= 3 * math.sqrt(m.noise_var)


def test_duplicate_inputs_still_fit():
    f = np.ones(4)
    m = P.from_taps([P.LabeledTap(f, 1.0), P.LabeledTap(f.copy(), 1.0), P.LabeledTap(f * 2, 0.0)],
                    fixed=(1.0, 1.0, 0.0))
    assert m.fitted and 0 < m.jitter <= 1e-6 * m.signal_var


def test_constant_labels_recovered():
    rng = np.random.default_rng(1)
    taps = [P.LabeledTap(rng.normal(size=6), 2.5) for _ in range(15)]
    m = P.from_taps(taps, noise_floor=1e-4)
    q = taps[3].feature + 0.01
    assert P.predict(m, q)[0] == pytest.approx(2.5, abs=0.05)


def test_interpolation_as_noise_vanishes():
    rng = np.random.default_rng(2)
    taps = [P.LabeledTap(rng.normal(size=6), float(rng.normal())) for _ in range(8)]
    m = P.from_taps(taps, fixed=(2.0, 1.0, 1e-10))
    mu, sd = P.predict(m, taps[4].feature)
    assert mu == pytest.approx(taps[4].label, abs=1e-6) and sd < 1e-3


def test_far_query_reverts_to_prior():
    rng = np.random.default_rng(4)
    taps = [P.LabeledTap(rng.normal(size=6), float(rng.normal() + 3)) for _ in range(8)]
    m = P.from_taps(taps)
    mu, sd = P.predict(m, np.full(6, 1e3))
    assert mu == pytest.approx(0.0, abs=1e-9) and sd == pytest.approx(math.sqrt(m.signal_var))


def test_predict_errors():
    with pytest.raises(Unfitted):
        P.predict(P.GPModel(), np.zeros(4))
    m = P.from_taps([P.LabeledTap(np.zeros(4), 0.0), P.LabeledTap(np.ones(4), 1.0)])
    with pytest.raises(LengthMismatch):
        P.predict(m, np.zeros(6))


def test_leave_one_out_on_clean_arc():
    arc_spec = ArcSpec(-7, 7.5, 31)
    arc, _ = clean_arc(arc_spec)
    al = P.align_arc(arc, P.select_reference(arc, LAYOUT.rest_positions))
    errs = []
    for k in range(len(arc)):
        m = P.from_taps([t for i, t in enumerate(al.taps) if i != k])
        errs.append(abs(P.predict(m, al.taps[k].feature)[0] - al.taps[k].label))
    assert np.mean(errs) < arc_spec.spacing


def test_update_empty_is_identity():
    rng = np.random.default_rng(5)
    m = P.from_taps([P.LabeledTap(rng.normal(size=4), float(v)) for v in rng.normal(size=6)])
    assert P.update(m, []) is m


def test_update_is_order_invariant():
    rng = np.random.default_rng(6)
    a = [P.LabeledTap(rng.normal(size=4), float(v)) for v in rng.normal(size=6)]
    b = [P.LabeledTap(rng.normal(size=4), float(v)) for v in rng.normal(size=5)]
    seq = P.update(P.from_taps(a), b)
    both = P.from_taps(a + b)
    for q in rng.normal(size=(20, 4)):
        assert P.predict(seq, q)[0] == pytest.approx(P.predict(both, q)[0], abs=1e-12)
    assert seq.n_train == 11


def test_second_arc_improves_its_own_predictions():
    arc_a, _ = clean_arc()
    ref = P.select_reference(arc_a, LAYOUT.rest_positions)
    model = P.from_taps(P.align_arc(arc_a, ref).taps)
    shifted = Pose2D(-20, 3.0, 4.0)
    near = true_edge_angle(BEAM, shifted, ROBOT, -7.0)
    arc_b, _ = clean_arc(ArcSpec(round(near), 7.5, 31), shifted)
    taps_b = P.align_arc(arc_b, ref).taps
    interior = range(8, 23)
    before = np.mean([abs(P.predict(model, taps_b[k].feature)[0] - taps_b[k].label) for k in interior])
    after = np.mean([abs(P.predict(P.update(model, [t for i, t in enumerate(taps_b) if i != k]),
                                   taps_b[k].feature)[0] - taps_b[k].label) for k in interior])
    assert after < before


def test_checkpoint_round_trip(tmp_path):
    arc, _ = clean_arc()
    ref = P.select_reference(arc, LAYOUT.rest_positions, source={"arc_id": 0})
    model = P.from_taps(P.align_arc(arc, ref).taps, noise_floor=0.5)
    P.save_checkpoint(tmp_path / "gp.json", model, ref)
    back, ref_back = P.load_checkpoint(tmp_path / "gp.json")
    assert np.array_equal(ref_back.feature, ref.feature) and ref_back.source == ref.source
    q = arc[10][1] + 0.01
    assert P.predict(back, q) == P.predict(model, q)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tihdp.priority import (
    NoRemainingTask,
    PriorityLayer,
    PriorityVector,
    comm_round,
    map_local_ops,
    request_signal,
    response_signal,
    select_target,
    update_priorities,
)


def straight_line(phi, k, c_bar, sigma, sums, completed):
    out = []
    for l in range(len(phi)):
        v = 0.0 if completed[l] else (1 - k) * phi[l] + k * (c_bar[l] + sigma * sums[l])
        out.append(max(v, 0.0))
    s = sum(out)
    return [v / s for v in out] if s > 0 else [0.0] * len(out)


@st.composite
def priority_inputs(draw):
    m = draw(st.integers(1, 8))
    raw = draw(hnp.arrays(float, m, elements=st.floats(0, 1)))
    phi = raw / raw.sum() if raw.sum() > 0 else np.full(m, 1.0 / m)
    return dict(
        phi=phi,
        k=draw(st.sampled_from([0.1, 0.5, 1.0])),
        c_bar=draw(hnp.arrays(np.int64, m, elements=st.integers(-1, 1))),
        sigma=draw(st.integers(0, 1)),
        sums=draw(hnp.arrays(np.int64, m, elements=st.integers(0, 5))),
        completed=draw(hnp.arrays(bool, m)),
    )


class TestSignals:
    @pytest.mark.parametrize("alpha,target,expected", [
        (1, 1, [0, 1, 0, 0]), (0, 1, [0, 0, 0, 0]), (1, 3, [0, 0, 0, 1]),
    ])
    def test_request(self, alpha, target, expected):
        assert request_signal(alpha, target, 4).tolist() == expected

    def test_request_rejects_bad_target(self):
        with pytest.raises(IndexError):
            request_signal(1, 4, 4)

    def test_response(self):
        assert response_signal(1) == 1
        assert response_signal(0) == 0
        for b in (0, 1):
            assert response_signal(response_signal(b)) == response_signal(b)


class TestLocalOps:
    def test_scatter(self):
        assert map_local_ops([1, -1], [2, 0], 4).tolist() == [-1, 0, 1, 0]

    def test_identity_layout(self):
        assert map_local_ops([1, 1], [0, 1], 2).tolist() == [1, 1]

    def test_padding_contributes_nothing(self):
        assert map_local_ops([1, -1], [3, -1], 4).tolist() == [0, 0, 0, 1]

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            map_local_ops([1, -1], [2, 2], 4)


class TestUpdate:
    def test_worked_example_local_ops(self):
        pv = PriorityVector(np.full(4, 0.25), 0.1)
        out = update_priorities(pv, [1, -1, 0, 0], 0, np.zeros(4), np.zeros(4, bool))
        np.testing.assert_allclose(out.phi, [0.3611, 0.1389, 0.25, 0.25], atol=1e-4)

    def test_worked_example_requests(self):
        pv = PriorityVector(np.full(4, 0.25), 0.1)
        out = update_priorities(pv, np.zeros(4), 1, [0, 2, 0, 0], np.zeros(4, bool))
        np.testing.assert_allclose(out.phi, [0.2045, 0.3864, 0.2045, 0.2045], atol=1e-4)

    def test_worked_example_completion(self):
        pv = PriorityVector(np.array([0.4, 0.2, 0.2, 0.2]), 0.1)
        out = update_priorities(pv, np.zeros(4), 0, np.zeros(4), [True, False, False, False])
        np.testing.assert_allclose(out.phi, [0, 1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_all_completed_gives_zero_vector(self):
        pv = PriorityVector.uniform(3)
        out = update_priorities(pv, np.zeros(3), 0, np.zeros(3), np.ones(3, bool))
        assert out.phi.tolist() == [0.0, 0.0, 0.0]
        with pytest.raises(NoRemainingTask):
            select_target(out)

    def test_negative_entries_are_clamped(self):
        pv = PriorityVector(np.array([0.05, 0.95]), 0.1)
        out = update_priorities(pv, [-1, 0], 0, np.zeros(2), np.zeros(2, bool))
        assert out.phi.tolist() == [0.0, 1.0]

    @given(priority_inputs())
    def test_invariants_and_oracle(self, c):
        out = update_priorities(PriorityVector(c["phi"], c["k"]), c["c_bar"], c["sigma"], c["sums"], c["completed"])
        assert np.all(out.phi >= 0.0)
        assert np.all(out.phi[c["completed"]] == 0.0)
        total = out.phi.sum()
        assert total == 0.0 or abs(total - 1.0) <= 1e-9
        ref = straight_line(c["phi"], c["k"], c["c_bar"], c["sigma"], c["sums"], c["completed"])
        np.testing.assert_allclose(out.phi, ref, atol=1e-12, rtol=0)

    @given(priority_inputs(), st.integers(0, 7), st.integers(1, 3))
    def test_more_requests_never_lower_rank(self, c, l, extra):
        m = len(c["phi"])
        l %= m

        def rank(phi):
            return int(np.sum(phi > phi[l]))

        base = update_priorities(PriorityVector(c["phi"], c["k"]), c["c_bar"], 1, c["sums"], c["completed"]).phi
        more = c["sums"].copy()
        more[l] += extra
        bumped = update_priorities(PriorityVector(c["phi"], c["k"]), c["c_bar"], 1, more, c["completed"]).phi
        assert rank(bumped) <= rank(base)


class TestSelect:
    def test_examples(self):
        assert select_target(PriorityVector(np.array([0.2, 0.5, 0.3]))) == 1
        assert select_target(PriorityVector(np.array([0.5, 0.5, 0.0]))) == 0

    @given(hnp.arrays(float, st.integers(1, 8), elements=st.floats(0, 1)), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, phi, scale):
        if not np.any(phi > 0):
            return
        assert select_target(PriorityVector(phi)) == select_target(PriorityVector(phi * scale))


class TestCommRound:
    def test_two_requesters(self):
        d, sums, sigma = comm_round([1, 1, 0], [0, 0, 1], [2, 2, 0], 4)
        assert sums.tolist() == [0, 0, 2, 0]
        assert sigma.tolist() == [0, 0, 1]
        assert d.sum(axis=1).max() <= 1

    def test_no_requests(self):
        _, sums, _ = comm_round([0, 0, 0], [1, 1, 1], [0, 1, 2], 4)
        assert not sums.any()

    def test_single_robot(self):
        d, sums, _ = comm_round([1], [1], [3], 4)
        assert sums.tolist() == d[0].tolist() == [0, 0, 0, 1]

    def test_robot_without_target_cannot_request(self):
        _, sums, _ = comm_round([1, 1], [0, 0], [None, 1], 3)
        assert sums.tolist() == [0, 1, 0]


def test_far_object_becomes_target_through_requests():
    # robot 0 starts committed to object 0, sees objects 0 and 1 only and keeps
    # voting them up; robots 1 and 2 keep requesting object 3, which robot 0 answers
    layer = PriorityLayer(3, 4, k_phi=0.1)
    layer.vectors[0] = PriorityVector(np.array([1.0, 0.0, 0.0, 0.0]), 0.1, 0)
    layer.targets[0] = 0
    for j in (1, 2):
        layer.vectors[j] = PriorityVector(np.array([0.0, 0.0, 0.0, 1.0]), 0.1, j)
        layer.targets[j] = 3
    completed = np.zeros(4, bool)
    reached = None
    for t in range(1, 41):
        c_local = [[1, 1], [1, 1], [1, 1]]
        ids = [[0, 1], [3, 2], [3, 2]]
        layer.advance(c_local, ids, alphas=[0, 1, 1], betas=[1, 0, 0], completed=completed)
        if layer.targets[0] == 3:
            reached = t
            break
    # worked by hand: object 3 overtakes object 0 on the fifth update
    assert reached == 5

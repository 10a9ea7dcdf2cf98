import pytest

from feedback_lab.arrivals import periodic
from feedback_lab.channel import make_bsc
from feedback_lab.reference import ExtensionalTypeSetSED
from feedback_lab.sed_exact import InvalidStateError
from feedback_lab.validate import typeset_reference_lockstep


@pytest.mark.parametrize("n", [4, 6, 8])
@pytest.mark.parametrize("q", [0.3, 0.7, 1.0])
@pytest.mark.parametrize("p", [0.05, 0.11])
def test_lockstep_equivalence(n, q, p):
    assert typeset_reference_lockstep(n, q, p, 1e-2, seed=1000 * n + int(100 * q) + int(1000 * p)) is None


def test_reference_first_steps_by_hand():
    ref = ExtensionalTypeSetSED(periodic(3), make_bsc(0.1), 1e-3)
    ref.start_step()
    assert ref.partition_sets() == [(1, 1, 0), (2, 2, 1)]
    assert ref.event
    ref.observe(0)
    ref.start_step()
    assert ref.partition_sets() == [(3, 3, 0), (4, 4, 1), (5, 6, 0)]
    assert ref.mass == pytest.approx((0.55, 0.45))


def test_reference_detects_broken_set():
    ref = ExtensionalTypeSetSED(periodic(3), make_bsc(0.1), 1e-3)
    ref.start_step()
    ref.prob[2] = 0.3
    ref.label[2] = ref.label[1]
    members = ref.classes()[ref.label[1]]
    assert members == [1, 2]
    with pytest.raises(InvalidStateError):
        ref.class_value(members)

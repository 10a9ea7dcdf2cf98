import pytest
from hypothesis import given
from hypothesis import strategies as st

from feedback_lab.strings import (VarString, first_index, heap_index, length_of, lengths_of,
                                  parent_of, payload_of, to_bits)


@pytest.mark.parametrize("bits, idx", [("", 0), ("0", 1), ("1", 2), ("00", 3), ("01", 4),
                                       ("10", 5), ("11", 6), ("000", 7), ("111", 14)])
def test_heap_numbers_of_short_strings(bits, idx):
    assert heap_index(bits) == idx
    assert to_bits(idx) == bits
    assert length_of(idx) == len(bits)


def test_children_and_parent():
    s = VarString.from_bits("10")
    assert s.append(0).heap_index == 2 * s.heap_index + 1
    assert s.append(1).heap_index == 2 * s.heap_index + 2
    assert s.append(1).truncate() == s
    assert parent_of(3) == parent_of(4) == 1
    with pytest.raises(ValueError):
        parent_of(0)


def test_same_length_heap_order_is_lexicographic():
    strings = [format(v, "04b") for v in range(16)]
    idx = [heap_index(s) for s in strings]
    assert idx == list(range(first_index(4), first_index(4) + 16))


def test_payload_and_prefix():
    s = VarString.from_bits("1101")
    assert s.payload == 0b1101 == payload_of(s.heap_index)
    assert s.prefix(2).bits == "11"
    assert str(s.prefix(0)) == ""
    with pytest.raises(ValueError):
        s.prefix(5)


@given(st.text(alphabet="01", max_size=60))
def test_roundtrip_and_vectorised_lengths(bits):
    idx = heap_index(bits)
    assert to_bits(idx) == bits
    if len(bits) <= 40:
        assert int(lengths_of([idx])[0]) == len(bits)


def test_lengths_of_at_class_boundaries():
    for ell in range(0, 45):
        lo, hi = first_index(ell), first_index(ell + 1) - 1
        assert list(lengths_of([lo, hi])) == [ell, ell]

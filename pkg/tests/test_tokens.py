import numpy as np
import pytest
from hypothesis import given, strategies as st

from layoutjoint import (
    DEFAULT_ATTRIBUTES,
    PAD,
    build_segment_map,
    embed,
    rasterize,
    tokenize,
)


class TestTokenize:
    def test_basic(self):
        assert tokenize("a blue cup", 4) == ["a", "blue", "cup", PAD]

    def test_empty_input(self):
        assert tokenize("", 2) == [PAD, PAD]

    def test_truncation(self):
        assert tokenize("one two three four five", 3) == ["one", "two", "three"]

    def test_lowercasing(self):
        assert tokenize("A Blue CUP", 3) == ["a", "blue", "cup"]

    def test_max_len_validation(self):
        with pytest.raises(ValueError):
            tokenize("x", 0)

    @given(st.text(max_size=40), st.integers(1, 12))
    def test_deterministic_and_sized(self, text, max_len):
        a = tokenize(text, max_len)
        b = tokenize(text, max_len)
        assert a == b
        assert len(a) == max_len


class TestSegmentMap:
    def test_two_instance_offsets(self, two_instance_layout):
        region = rasterize(two_instance_layout, 4, 4)
        seg = build_segment_map(two_instance_layout, region, 4)
        assert seg.text_len == 12
        assert seg.segment_offset(0) == (0, 4)
        assert seg.segment_offset(1) == (4, 4)
        assert seg.segment_offset(2) == (8, 4)
        assert seg.image_len == 16
        assert (seg.owner == region.reshape(-1)).all()

    def test_segments_contiguous_and_ordered(self, two_instance_layout):
        seg = build_segment_map(two_instance_layout, rasterize(two_instance_layout, 4, 4), 3)
        assert seg.segment.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]

    def test_pad_flags_follow_tokens(self, two_instance_layout):
        seg = build_segment_map(two_instance_layout, rasterize(two_instance_layout, 4, 4), 8)
        assert len(seg.tokens) == seg.text_len
        assert all((tok is PAD) == bool(p) for tok, p in zip(seg.tokens, seg.pad))
        # "a red cup" fills 3 of 8 slots in the first instance segment
        assert seg.pad[8:16].tolist() == [False, False, False, True, True, True, True, True]

    def test_seg_len_validation(self, two_instance_layout):
        with pytest.raises(ValueError):
            build_segment_map(two_instance_layout, rasterize(two_instance_layout, 4, 4), 0)


class TestEmbed:
    def _seg(self, layout, seg_len=4, grid=4):
        return build_segment_map(layout, rasterize(layout, grid, grid), seg_len)

    def test_bit_identical_for_same_seed(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        a = embed(seg.tokens, seg, seed=9)
        b = embed(seg.tokens, seg, seed=9)
        assert a.tobytes() == b.tobytes()

    def test_different_seed_differs(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        assert not np.array_equal(embed(seg.tokens, seg, seed=9), embed(seg.tokens, seg, seed=10))

    def test_pad_rows_zero(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        block = embed(seg.tokens, seg, seed=0)
        assert (block[seg.pad.nonzero()[0]] == 0.0).all()

    def test_attribute_one_hot(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        block = embed(seg.tokens, seg, seed=0)
        attr_dim = len(DEFAULT_ATTRIBUTES)
        free = block.shape[1] - attr_dim
        pos = seg.tokens.index("blue")
        expected = np.zeros(attr_dim)
        expected[DEFAULT_ATTRIBUTES.index("blue")] = 1.0
        assert (block[pos, free:] == expected).all()
        # non-attribute words carry a zero sub-vector
        pos_cup = seg.tokens.index("cup")
        assert (block[pos_cup, free:] == 0.0).all()

    def test_values_bounded_and_finite(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        block = embed(seg.tokens, seg, seed=123)
        assert np.isfinite(block).all()
        assert (np.abs(block) <= 1.0).all()

    def test_image_rows_nonzero(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        block = embed(seg.tokens, seg, seed=0)
        assert (np.abs(block[seg.text_len :]).sum(axis=1) > 0).all()

    def test_dim_must_exceed_vocabulary(self, two_instance_layout):
        seg = self._seg(two_instance_layout)
        with pytest.raises(ValueError):
            embed(seg.tokens, seg, seed=0, dim=8)

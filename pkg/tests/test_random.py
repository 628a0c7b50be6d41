import numpy as np
import pytest

from models.errors import InvalidArgumentError
from modules.random_module import STREAMS, make_rng


def test_streams_are_reproducible_and_independent():
    draws = {stream: make_rng(7, stream).random(4) for stream in STREAMS}
    for stream in STREAMS:
        np.testing.assert_array_equal(make_rng(7, stream).random(4), draws[stream])
    assert len({tuple(v) for v in draws.values()}) == len(STREAMS)


def test_extra_keys_give_substreams():
    first = make_rng(0, "dropx", 3, 0).random(3)
    np.testing.assert_array_equal(first, make_rng(0, "dropx", 3, 0).random(3))
    assert not np.array_equal(first, make_rng(0, "dropx", 3, 1).random(3))
    assert not np.array_equal(first, make_rng(1, "dropx", 3, 0).random(3))


def test_unknown_stream_rejected():
    with pytest.raises(InvalidArgumentError):
        make_rng(0, "shuffle")

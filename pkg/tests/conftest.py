import hypothesis.strategies as st
from hypothesis import settings

from pnas.cells import NUM_OPERATORS, BlockSpec, canonicalize

settings.register_profile("suite", max_examples=60, deadline=None)
settings.load_profile("suite")


@st.composite
def raw_blocks(draw, position: int):
    """A possibly non-canonical block legal at 1-indexed ``position``."""
    hi = position + 1
    return BlockSpec(
        i1=draw(st.integers(0, hi - 1)),
        i2=draw(st.integers(0, hi - 1)),
        o1=draw(st.integers(0, NUM_OPERATORS - 1)),
        o2=draw(st.integers(0, NUM_OPERATORS - 1)),
    )


@st.composite
def raw_cells(draw, max_blocks: int = 4):
    b = draw(st.integers(1, max_blocks))
    return tuple(draw(raw_blocks(k)) for k in range(1, b + 1))


@st.composite
def canonical_cells(draw, max_blocks: int = 4):
    return canonicalize(draw(raw_cells(max_blocks)))

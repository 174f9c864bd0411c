from fractions import Fraction

from hypothesis import settings, strategies as st

from jointads.mechanism import Mechanism
from jointads.solver import DiscreteDistribution, staircase

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

DENOMS = (2, 3, 4, 5, 6, 8, 12)


@st.composite
def unit_rationals(draw, denoms=DENOMS):
    d = draw(st.sampled_from(denoms))
    return Fraction(draw(st.integers(0, d)), d)


@st.composite
def dyadic_units(draw, bits=6):
    """Rationals in [0, 1] that floats represent exactly."""
    d = 2 ** bits
    return Fraction(draw(st.integers(0, d)), d)


points = st.tuples(unit_rationals(), unit_rationals())
dyadic_points = st.tuples(dyadic_units(), dyadic_units())


@st.composite
def mechanisms(draw, coords=None):
    """Random staircase path, sometimes with leading or trailing side segments."""
    if coords is None:
        coords = unit_rationals()
    pts = draw(st.lists(st.tuples(coords, coords), min_size=1, max_size=6))
    mech = staircase(pts)
    if mech is None:
        return Mechanism.full_square()
    nodes = list(mech.nodes)
    if draw(st.booleans()) and nodes[0][0] > 0:
        nodes.insert(0, (Fraction(0), Fraction(1)))
    if draw(st.booleans()) and nodes[-1][1] > 0:
        nodes.append((Fraction(1), Fraction(0)))
    return Mechanism(tuple(nodes))


@st.composite
def distributions(draw, max_atoms=6, coords=None):
    if coords is None:
        coords = unit_rationals()
    pts = draw(st.lists(st.tuples(coords, coords), min_size=1, max_size=max_atoms, unique=True))
    weights = draw(st.lists(st.integers(1, 9), min_size=len(pts), max_size=len(pts)))
    return DiscreteDistribution.from_weights(zip(pts, weights))

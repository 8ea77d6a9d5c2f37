"""Small hand-built models and a seeded random model generator shared by the test suites"""

import numpy as np

from pdm_rank.model_utils import parse_pdm

TWO_INPUT_TEXT = """
root: A
op: id=X out=A in=B,C cost=1 time=1 prob=0.0
op: id=PB out=B in=- cost=1 time=1 prob=0.5
op: id=PC out=C in=- cost=1 time=1 prob=0.5
"""

CHAIN_TEXT = """
root: A
op: id=X out=A in=B cost=2 time=1 prob=0.1
op: id=Y out=B in=C cost=3 time=2 prob=0.1
op: id=Z out=C in=- cost=1 time=4 prob=0.1
"""

ZERO_COST_TEXT = """
root: A
op: id=X out=A in=B cost=0 time=1 prob=0.2
op: id=L out=B in=- cost=0 time=1 prob=0.2
"""

TRIPLE_PARALLEL_TEXT = """
root: A
op: id=X1 out=A in=B cost=1 time=1 prob=0.0
op: id=X2 out=A in=B cost=2 time=1 prob=0.0
op: id=X3 out=A in=B cost=3 time=1 prob=0.0
op: id=L out=B in=- cost=1 time=1 prob=0.0
"""

DANGLING_TEXT = """
root: A
op: id=X out=A in=B cost=1 time=1 prob=0.0
op: id=L out=B in=- cost=1 time=1 prob=0.0
op: id=Z out=C in=- cost=1 time=1 prob=0.0
"""


def two_input_pdm():
    return parse_pdm(TWO_INPUT_TEXT, name="two_input")


def chain_pdm():
    return parse_pdm(CHAIN_TEXT, name="chain")


def random_pdm_text(rng, max_elements=12):
    """
    Text of a random valid model with at most max_elements elements

    Element i only takes inputs with a higher index, so the model is acyclic;
    every element gets one or two producers.
    """
    count = int(rng.integers(2, max_elements + 1))
    names = [f"e{i}" for i in range(count)]
    lines = [f"root: {names[0]}"]
    op_number = 1
    for i, name in enumerate(names):
        later = names[i + 1:]
        for _ in range(int(rng.integers(1, 3))):
            width = int(rng.integers(0, min(2, len(later)) + 1)) if later else 0
            inputs = list(rng.choice(later, size=width, replace=False)) if width else []
            cost = int(rng.integers(0, 6))
            time = int(rng.integers(0, 6))
            prob = float(rng.choice([0.0, 0.1, 0.3, 0.5, 1.0]))
            lines.append(
                f"op: id=O{op_number:02d} out={name} in={','.join(inputs) if inputs else '-'} "
                f"cost={cost} time={time} prob={prob}"
            )
            op_number += 1
    return "\n".join(lines) + "\n"


def random_pdm(seed, max_elements=12):
    rng = np.random.default_rng(seed)
    return parse_pdm(random_pdm_text(rng, max_elements), name=f"random_{seed}")

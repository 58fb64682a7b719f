"""Interactive disambiguation of rule programs through multiple-choice queries.

The package narrows a finite hypothesis set of candidate programs down to the
one the user intends by repeatedly asking optimal multiple-choice questions.
Each question fixes a symbolic input precondition and offers mutually
exclusive outcome descriptions; the chosen outcome prunes every candidate
whose behaviour on that precondition is incompatible with the answer.
"""

from disambig.logic import (
    Atom,
    Axioms,
    Cube,
    Formula,
    Literal,
    Model,
    ResourceLimitError,
)

__all__ = [
    "Atom",
    "Axioms",
    "Cube",
    "Formula",
    "Literal",
    "Model",
    "ResourceLimitError",
]

__version__ = "0.1.0"

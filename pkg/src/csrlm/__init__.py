"""Context-sensitive random language model: generation, observables and analysis.

Sentences grow from a single symbol by stochastic rewriting (terminate,
branch into two children, or a Metropolis context flip that prefers aligned
neighbours). The package measures Potts-style order parameters of the
resulting sentences and locates the ordering transition by finite-size scaling.
"""

__version__ = "0.1.0"

from ._accel import BACKEND, NUMBA_ENABLED  # noqa: E402
from .model import ModelParams, SentenceState  # noqa: E402
from .engine import SamplingProtocol, generate_ensemble, generate_sample  # noqa: E402

__all__ = [
    "BACKEND",
    "NUMBA_ENABLED",
    "ModelParams",
    "SamplingProtocol",
    "SentenceState",
    "generate_ensemble",
    "generate_sample",
    "__version__",
]

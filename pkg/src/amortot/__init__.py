"""Amortized entropic optimal transport.

Predicts Sinkhorn potentials for new measure pairs as a linear combination of
exact sliced 1D potentials, fit either by ridge regression on converged
Sinkhorn solutions (RA) or by ascent on the entropic semi-dual (OA).
"""

# Re-export everything so `from amortot import X` works
from amortot.errors import *  # noqa: F401,F403
from amortot.measures import *  # noqa: F401,F403
from amortot.sinkhorn import *  # noqa: F401,F403
from amortot.ot1d import *  # noqa: F401,F403
from amortot.slicing import *  # noqa: F401,F403
from amortot.amortize import *  # noqa: F401,F403
from amortot.baselines import *  # noqa: F401,F403
from amortot.formats import *  # noqa: F401,F403
from amortot.tasks import *  # noqa: F401,F403
from amortot.coupling import *  # noqa: F401,F403
from amortot.report import *  # noqa: F401,F403

__version__ = "0.1.0"

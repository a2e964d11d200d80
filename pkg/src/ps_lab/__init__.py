"""ps-lab: synthetic-class regularization for proxy-based embedding losses.

Desk-scale lab around interpolated synthetic classes: the proxy loss
family with analytic gradients, synthetic pair generation, a toy
feed-forward trainer, retrieval metrics, and boundary diagnostics,
all reproducible from explicit seeds.
"""

__version__ = "0.1.0"

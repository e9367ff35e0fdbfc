"""Network delay tomography with characteristic-function mixture estimators."""

from .binning import equal_bins, estimate_link_moments, refine, varying_bins
from .cf_engine import MeasurementSet, empirical_cf, model_cf_y, sample_frequencies
from .delay_models import LinkMixture, MixtureSpec
from .estimators import EstimatorConfig, fit, fit_mle_discrete, fit_wcf
from .identifiability import identifiability_check
from .kernels import BACKEND
from .topology import TreeTopology, column_rank, product_matrix, routing_matrix

__version__ = "0.1.0"

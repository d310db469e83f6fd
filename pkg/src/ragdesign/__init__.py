"""Random-forest surrogate, tree-vote likelihood and MCMC design sampling
for functional responses (dispersion relations, stress-strain curves)."""

from .forest import (Forest, ForestParams, fit, fit_dataset, load_forest, per_tree_response, predict_point,
                     predict_response, save_forest)
from .likelihood import LikelihoodResult, likelihood, likelihood_map
from .requirements import Requirement, Segment, is_satisfied, overlap_rate
from .response import Dataset, DesignSpace, QueryGrid, VariableSpec, flatten_pairs, uniform_grid
from .sampler import AllZeroLikelihood, DesignCandidate, SamplerConfig, feasibility_scan, mh_sample, propose

__version__ = "0.1.0"

"""Ordered and unordered degree-corrected stochastic block models for
directed multigraphs, fitted by minimum description length."""

__version__ = "0.1.0"

from .analysis import (
    Fit, ModelComparison, UndefinedCorrelation, compare_fits, fit_summary,
    kendall_tau, lexicographic_order, mean_rank, model_select, posterior_odds,
    upstream_fraction,
)
from .dl import (
    VARIANTS, DLBreakdown, ModelVariant, QCapExceeded, breakdown,
    delta_description_length, description_length, log_q_restricted, set_q_cap,
)
from .generators import (
    GeneratorSpec, add_upstream_perturbation, imbalanced_graph,
    sample_imbalanced_degrees, sample_microcanonical,
)
from .graph import (
    DegreeSequence, DirectedMultigraph, EdgeListError, degree_imbalance, degrees,
    dump_edge_list, load_edge_list,
)
from .mcmc import (
    Chain, ChainConfig, MapResult, RankMarginals, anneal_map, collect_marginals,
    mh_sweep, propose_new_group,
)
from .state import NEW, BlockState, MoveDelta, MoveProposal, Partition, build_state

__all__ = [name for name in dir() if not name.startswith("_")]

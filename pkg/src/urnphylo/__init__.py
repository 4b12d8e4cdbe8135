"""Pólya-urn analysis of cherry and pitchfork counts in random phylogenetic trees."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .harness import CampaignConfig, CampaignResult, run_campaign
from .models import GrowthTrace, ProcessKind, generate
from .moments import enumerate_exact, pda_moments, yhk_moments
from .spectral import builtin_spectral, diagonalize, project_ab, sigma
from .tree import PhyloTree, builtin_tree, classify_all_edges, from_newick, to_newick
from .urn import PDA_MATRIX, YHK_MATRIX, UrnState

__all__ = [
    "__version__",
    "BACKEND",
    "CampaignConfig",
    "CampaignResult",
    "run_campaign",
    "GrowthTrace",
    "ProcessKind",
    "generate",
    "enumerate_exact",
    "pda_moments",
    "yhk_moments",
    "builtin_spectral",
    "diagonalize",
    "project_ab",
    "sigma",
    "PhyloTree",
    "builtin_tree",
    "classify_all_edges",
    "from_newick",
    "to_newick",
    "PDA_MATRIX",
    "YHK_MATRIX",
    "UrnState",
]

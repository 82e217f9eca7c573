"""Map-equation node similarities from modular compression of network flows.

The pipeline: model a random walk on the graph (`flow`), find a two-level
partition minimizing the map equation (`optimizer`) or bring your own
hierarchy, build the rate-annotated coding tree (`codingtree`), and read
node similarities off the tree's codebooks. `linkpred` wraps the whole
chain into a cross-validated link-prediction benchmark.
"""

from .codingtree import (
    Address,
    CodingTree,
    TreeNode,
    addr,
    build_coding_tree,
    description_length,
    forw_rate,
    format_tree,
    longest_common_prefix,
    mapsim,
    parse_tree,
    parse_tree_paths,
    rev_rate,
    write_tree,
)
from .flow import (
    ConvergenceError,
    FlowConfig,
    FlowNetwork,
    flow_for,
    visit_rates_directed,
    visit_rates_undirected,
)
from .graph import (
    FoldSplit,
    Graph,
    ParseError,
    ValidationError,
    format_edge_list,
    generate_crossed_k_regular,
    is_connected,
    kfold_split,
    largest_weakly_connected_component,
    parse_edge_list,
    sample_negative_links,
    write_edge_list,
)
from .linkpred import EvalConfig, EvalReport, FoldResult, average_precision, evaluate, roc_auc
from .mapeq import ModuleRate, ModuleRates, Partition, codelength, entropy, module_rates
from .optimizer import SearchState, delta_codelength_move, optimize_two_level, worker_count

__version__ = "0.1.0"

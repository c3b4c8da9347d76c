"""grownet: grow residual networks in depth where the loss wants a new layer.

The growth signal is the second-order sensitivity of the training loss to a
zero-initialized inserted layer. Its matrix is block diagonal, one block per
neuron, so the best insertion position, the new layer's width, and its
initialization all come from small symmetric eigenproblems solved per
interface.
"""

from .activations import PAIR_NAMES, make_admissible
from .backend import backend_name
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, gen_gaussian_regression, load_csv, save_csv, standardize
from .linalg import EigenDecomposition, NumericError, jacobi_eigh, make_rng, top_eigenpair
from .network import (
    Network,
    NetworkSpec,
    adjoint,
    fd_param_gradients,
    forward,
    hamiltonian_at,
    init_network,
    insert_layer,
)
from .rbf import RbfChain, gen_rbf_dataset, insert_chain, rbf_block, scan_chain
from .topo import assemble_blocks, scan, scan_dataset, select_direction, transfer_rank
from .train import (
    RunLog,
    TrainConfig,
    grow_auto,
    grow_baseline,
    grow_semi,
    line_search,
)

__version__ = "0.1.0"

__all__ = [
    "PAIR_NAMES", "make_admissible", "backend_name",
    "load_checkpoint", "save_checkpoint",
    "Dataset", "gen_gaussian_regression", "load_csv", "save_csv", "standardize",
    "EigenDecomposition", "NumericError", "jacobi_eigh", "make_rng",
    "top_eigenpair",
    "Network", "NetworkSpec", "adjoint", "fd_param_gradients", "forward",
    "hamiltonian_at", "init_network", "insert_layer",
    "RbfChain", "gen_rbf_dataset", "insert_chain", "rbf_block", "scan_chain",
    "assemble_blocks", "scan", "scan_dataset", "select_direction",
    "transfer_rank",
    "RunLog", "TrainConfig", "grow_auto", "grow_baseline", "grow_semi",
    "line_search",
    "__version__",
]

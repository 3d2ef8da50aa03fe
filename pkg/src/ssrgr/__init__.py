"""Semi-supervised sparse representation with graph regularization."""
from .data import Dataset, SplitSpec, load_dataset, save_dataset
from .graphs import GraphConfig, build_graphs
from .kernel import KernelConfig, KernelModel, fit_kernel
from .linear import HyperParams, SsrgrModel, fit
from .sparse_solvers import AdmmConfig

__all__ = ["AdmmConfig", "Dataset", "GraphConfig", "HyperParams", "KernelConfig",
           "KernelModel", "SplitSpec", "SsrgrModel", "build_graphs", "fit",
           "fit_kernel", "load_dataset", "save_dataset"]
__version__ = "0.1.0"

"""Verifiably robust training of small neural networks.

A self-contained engine built on an explicit computation graph: abstract
elements (boxes and hybrid zonotopes) are pushed through the graph by
automatically derived transformers, the worst output-side vertex feeds an
adversarial loss term, and reverse-mode differentiation trains the lot.
"""

from .architectures import Model, architecture_names, build_architecture
from .autodiff import backprop, forward_tape, gradient
from .domains import (Box, HybridZonotope, OutputBounds, bounds, correlate,
                      decorrelate, get_adversary, sample, supports,
                      transform_op, validate)
from .errors import (CheckpointError, ConfigError, DataFormatError,
                     DimensionError, DomainError, NumericError,
                     PropertyDomainError, ReachabilityError, StructureError,
                     UnsupportedOpError, ZonotrainError)
from .estimator import RobustClassifier
from .graph import Graph, extract_subgraph
from .model_io import (Dataset, load_checkpoint, load_digits_dataset,
                       load_mnist_idx, load_model, mnist_dataset,
                       save_checkpoint, save_model, synth_blobs, write_pgm)
from .properties import (BallDemoted, BallPromoted, Brightness, Fourier,
                         Property, UniformChannel, make_property, of,
                         register_property)
from .tensor import OpKind
from .training import (Metrics, TrainConfig, adam_step, combined_loss,
                       evaluate, one_hot, pgd_attack, train)
from .transform import check_graph_supported, transform, transform_map

__version__ = "0.1.0"

__all__ = [
    "Model", "architecture_names", "build_architecture",
    "backprop", "forward_tape", "gradient",
    "Box", "HybridZonotope", "OutputBounds", "bounds", "correlate",
    "decorrelate", "get_adversary", "sample", "supports", "transform_op",
    "validate",
    "CheckpointError", "ConfigError", "DataFormatError", "DimensionError",
    "DomainError", "NumericError", "PropertyDomainError", "ReachabilityError",
    "StructureError", "UnsupportedOpError", "ZonotrainError",
    "RobustClassifier",
    "Graph", "extract_subgraph",
    "Dataset", "load_checkpoint", "load_digits_dataset", "load_mnist_idx",
    "load_model", "mnist_dataset", "save_checkpoint", "save_model",
    "synth_blobs", "write_pgm",
    "BallDemoted", "BallPromoted", "Brightness", "Fourier", "Property",
    "UniformChannel", "make_property", "of", "register_property",
    "OpKind",
    "Metrics", "TrainConfig", "adam_step", "combined_loss", "evaluate",
    "one_hot", "pgd_attack", "train",
    "check_graph_supported", "transform", "transform_map",
    "__version__",
]

"""Finite-sample toolkit for metric gluing, approximations of metric spaces and quasisymmetric uniformization checks."""

from .finite_metric import FiniteMetric, InputError, check_metric
from .glue import glue, verify_glue
from .simplicial import MetricComplex, build_complex, mesh_graph

__version__ = "0.1.0"

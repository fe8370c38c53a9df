"""Deep information propagation in finite-size random networks:
divergence landscapes over (sigma_w, sigma_b), the infinite-width
mean-field prediction, and the box-counting dimension of the
order-to-chaos boundary."""

__version__ = "0.1.0"

from .nets import (TopologyConfig, LayerDraws, PairTrace, DrawProvider,
                   dft_unitary, forward_layer, divergence, propagate_pair,
                   propagate_cells)
from .meanfield import (MeanFieldState, QuadratureRule, gauss_hermite,
                        normal_grid, variance_map, covariance_map,
                        fixed_point_variance, fixed_point_covariance,
                        mean_field_divergence, trace_boundary)
from .landscape import (Region, LandscapeGrid, sweep, zoom, tradeoff_scan,
                        save, load, render)
from .fractal import (BinaryField, BoundarySet, FractalReport, binarize,
                      extract_boundary, box_count, fit_dimension,
                      dimension_sweep)
from .rand import StreamKey, StreamKind, gaussian_stream, unit_circle_stream

__all__ = [
    "TopologyConfig", "LayerDraws", "PairTrace", "DrawProvider",
    "dft_unitary", "forward_layer", "divergence", "propagate_pair",
    "propagate_cells",
    "MeanFieldState", "QuadratureRule", "gauss_hermite", "normal_grid",
    "variance_map", "covariance_map",
    "fixed_point_variance", "fixed_point_covariance",
    "mean_field_divergence", "trace_boundary",
    "Region", "LandscapeGrid", "sweep", "zoom", "tradeoff_scan", "save",
    "load", "render",
    "BinaryField", "BoundarySet", "FractalReport", "binarize",
    "extract_boundary", "box_count", "fit_dimension", "dimension_sweep",
    "StreamKey", "StreamKind", "gaussian_stream", "unit_circle_stream",
]

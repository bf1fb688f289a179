"""Manifold moving least-squares: projection onto a smooth approximant of a
point cloud, densification, and geodesic distance estimation."""
from ._version import __version__
from .cloud import PointCloud, read_points, write_points
from .errors import (DisconnectedGraphError, EmptySupportError, FrameError, ManifoldMLSError,
                     NonConvergenceError, NumericalError, SparseNeighborhoodError, UnisolvencyError,
                     ValidationError)
from .geodesic import (GeodesicGraph, KnnRule, RadiusRule, build_graph, densified_distances, dijkstra,
                       geodesic_estimate, rmse_percent, shortest_path_lengths)
from .mls_flat import VectorPolynomial, mls_approximant, mls_fit, weighted_polyfit
from .mmls import LocalFrame, ManifoldMLS, MMLSConfig, find_local_frame, fit_local_polynomial, project
from .resample import ResampleConfig, estimate_sigma, grid_nodes, resample
from .sampling_stats import (SamplingStats, density_bound_check, fill_distance_estimate, sampling_stats,
                             separation_radius)
from .synthetic import (SphereEmbedding, add_noise, farthest_point_subsample, sample_circle, sample_sphere,
                        sphere_geodesic_oracle)
from .weights import WeightProfile

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]

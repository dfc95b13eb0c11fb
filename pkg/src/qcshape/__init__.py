"""Landmark-exact quasi-conformal registration of open surfaces and shape clustering."""
from .errors import MeshError, NumericalError, QCShapeError, TopologyError
from .mesh import LandmarkCorrespondence, TriMesh, load_mesh, save_off, validate_topology
from .curvature import curvature_field, gaussian_curvature, mean_curvature, normalize_field
from .conformal import beltrami_from_map, dilatation, lbs_solve, lscm
from .register import RegistrationConfig, inconsistent_planar_register, register_surfaces
from .dissim import IndexWeights, build_matrix, dissimilarity, shape_index_delta
from .cluster import hierarchical_cluster, kmeans, loocv, mds, pairwise_accuracy, procrustes_distance

__version__ = "0.1.0"

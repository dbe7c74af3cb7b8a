"""Constrained sparse subspace clustering with pairwise side-information."""
from .dataset import (ConstraintSet, DataMatrix, build_weight_matrix, generate_union_of_subspaces,
                      load_constraints, load_labels, load_matrix, normalize_columns,
                      sample_side_information)
from .metrics import (clustering_error, rand_index, rand_index_estimator, structure_matrix,
                      rie_deviation_bound, simulate_rie_deviation)
from .modelselect import GridSpec, export_surface, grid_search
from .pipelines import (ClusterOptions, ClusteringResult, run_cs3c, run_cs3c_plus, run_cssc,
                        run_cssc_plus, run_lsr, run_method, run_s3c, run_ssc, run_ssc_plus)
from .selfexpress import (SolverOptions, combine_structured_weights, lambda_from_lambda0, solve_lsr,
                          solve_weighted_sparse)
from .spectral import (affinity_from_coefficients, constrained_kmeans, kmeans, spectral_embedding,
                       subspace_structured_norm)

__version__ = "0.1.0"

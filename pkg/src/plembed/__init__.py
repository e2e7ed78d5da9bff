"""Short piecewise-linear maps of Euclidean polyhedra: embeddings and isometric folding."""
from .complex import (BarycentricPoint, Correspondence, SimplicialComplex, SubComplex,
                      ValidationReport, build_complex, epsilon_at, gram_form, gram_forms,
                      shell, shell_index, simplex_budgets, star, subdivide, subdivide_edges,
                      validate_metric, vertex_budgets)
from .errors import NumericalFailure, PreconditionError, SchemaError
from .estimators import EmbeddingPerturber, GraphIsometrizer, NashIterator, SplitEmbedder
from .fold import FoldPlan, apply_plan, edge_arclengths, fold_edge, isometrize_graph, plan_folds
from .genpos import (GenPosReport, Verdict, is_general_position, perturb_prefix_general_position,
                     perturb_to_embedding, verify_embedding)
from .intersect import find_intersection, segment_distance
from .io import complex_to_dict, load_complex, load_map, map_to_dict, parse_complex, parse_map
from .pipeline import ConvergenceReport, SplitResult, iterate_nash, split_embed_pipeline
from .plmap import (Margin, PLMap, contract_toward_point, direct_sum, evaluate, evaluate_root,
                    induced_form, induced_forms, refine_to, shortness_margin, split_coordinates)
from .pullback import (Defect, SampleGraph, intrinsic_distance, isometry_defect, pair_table,
                       pullback_estimate, sample_graph)

__version__ = "0.1.0"

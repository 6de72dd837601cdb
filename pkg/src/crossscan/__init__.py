"""Scanner-invariant patch embeddings for MR brain tissue classification.

The package simulates multi-protocol MR scans of procedural brain
phantoms, trains a shared-weight embedding network on similarity-labeled
patch pairs, and verifies with linear classifiers that scanner variation
is removed while tissue contrast survives.
"""

from .evaluate import (FeatureSet, LinearModel, a_distance_from_error,
                       embed_features, proxy_a_distance, raw_features,
                       tissue_error, train_linear)
from .network import (NetConfig, SiameseModel, init_model, load_model,
                      lp_distance, param_count, save_model, siamese_loss,
                      train_classifier, train_siamese)
from .phantom import (AcquisitionProtocol, BRAINWEB_15T, BRAINWEB_30T,
                      RELAXATION_TABLE, ScanImage, TissueId, TissueLabelMap,
                      generate_phantom, signal, simulate_scan)
from .sampling import (Patch, PatchPair, PairDataset, batch_iterator,
                       build_pairs, count_pairs, extract_patches)

__version__ = "0.1.0"

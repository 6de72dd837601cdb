# Pin BLAS to one thread before numpy loads: the networks here are small
# enough that thread fan-out slows them down, and the acceptance runtimes
# are quoted single-threaded.
import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import pytest

import crossscan as cs


@pytest.fixture(scope="session")
def small_scan_pair():
    """One source-protocol and one target-protocol scan of small phantoms."""
    src_map = cs.generate_phantom(101, 128, 128)
    tgt_map = cs.generate_phantom(202, 128, 128)
    src = cs.simulate_scan(src_map, cs.BRAINWEB_15T, 0, 11)
    tgt = cs.simulate_scan(tgt_map, cs.BRAINWEB_30T, 1, 22)
    return src, tgt


@pytest.fixture(scope="session")
def tiny_pair_dataset(small_scan_pair):
    src, tgt = small_scan_pair
    src_patches = cs.extract_patches(src, 20, 1)
    tgt_patches = cs.extract_patches(tgt, 2, 2)
    return cs.build_pairs(src_patches, tgt_patches, 800, 3)

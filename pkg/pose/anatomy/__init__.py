from .topology import SkeletonTopology, load_topology, SUPPORTED_HOPS
from .kcs import KcsMap, build_kcs, backmap, kcs_map
from .pca import (
    PcaPrior,
    HopPrior,
    AnatomyPrior,
    orientation_normalize,
    fit_pca,
    build_prior,
    reconstruct_pose,
    reconstruction_operator,
    latent_traverse,
)

__all__ = [
    'SkeletonTopology',
    'load_topology',
    'SUPPORTED_HOPS',
    'KcsMap',
    'build_kcs',
    'backmap',
    'kcs_map',
    'PcaPrior',
    'HopPrior',
    'AnatomyPrior',
    'orientation_normalize',
    'fit_pca',
    'build_prior',
    'reconstruct_pose',
    'reconstruction_operator',
    'latent_traverse',
]

"""
Data Package
Sample codecs, synthetic scenes, augmentations, corruptions and checkpoints
"""

from .netpbm import DepthSample, SampleManifest, load_sample, read_manifest

__all__ = [
    'DepthSample',
    'SampleManifest',
    'load_sample',
    'read_manifest'
]

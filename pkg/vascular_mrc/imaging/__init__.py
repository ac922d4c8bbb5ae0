"""
Imaging package for vascular_mrc.

Frame, mask and manifest I/O, and the synthetic breathing phantom.
"""

from .io import SequenceManifest, load_sequence, read_manifest, read_mask, save_mask, write_overlay
from .phantom import PhantomDataset, generate_phantom, load_phantom, save_phantom, truth_flowset

__all__ = [
    "SequenceManifest",
    "load_sequence",
    "read_manifest",
    "read_mask",
    "save_mask",
    "write_overlay",
    "PhantomDataset",
    "generate_phantom",
    "load_phantom",
    "save_phantom",
    "truth_flowset",
]

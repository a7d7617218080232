"""Algorithmic core of single-view sketch to point-cloud reconstruction.

Sketch standardization, rigid MLS deformation, Chamfer / EMD metrics, the
reconstruction loss with gradients, synthetic data from meshes and a
per-category evaluation harness.
"""

from .lossgrad import LossConfig, composite_loss, gradcheck
from .mlsdeform import ControlPairSet, augment, deform_sketch, mls_rigid_point, random_deformation
from .pipeline import StandardizeConfig, plan_batches, standardize, train_chain
from .pointcloud import PointCloud, RotationMatrix, chamfer, chamfer_grad, emd_exact, nearest_rotation, orth_loss
from .sketchimg import BinaryMask, SketchImage, StructuringElement, binarize, dilate, read_pgm, thin, write_pgm

__version__ = "0.1.0"

"""Volumetric stereo: geometry, colored voxel cubes, weighting, fusion and binarization."""

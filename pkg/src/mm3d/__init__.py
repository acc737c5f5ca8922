"""Multi-view 3D object detection toolkit: dataset mixing, anchor queries,
3D positional encoding, multi-level fusion, an attention head, and
nuScenes-style evaluation."""

__version__ = "0.1.0"

"""Semi-supervised two-modality alignment with distribution-matching losses.

Modules:

- ``numerics``: float64 matrix helpers, seeding, finite differences
- ``grad``: small reverse-mode autodiff over numpy arrays
- ``kernels``: Gaussian/polynomial kernels and the learnable multi-kernel
- ``losses``: MK-MMD, SDD, contrastive, self-supervised and total objective
- ``sampling``: Parzen-window representativeness vs batch size
- ``data``: synthetic two-modality generator and binary dataset format
- ``model``: two-stream MLP encoders and checkpoints
- ``trainer``: batch composition, Adam, training loop, retrieval metrics
- ``cli``: command-line front end
"""

__version__ = "0.1.0"

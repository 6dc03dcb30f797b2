"""Momentum-conserving spectral PDE surrogate toolkit."""

from ._pefnn import (
    Model,
    fft2,
    ifft2,
    grf_sample,
    ns_solve,
    swe_dambreak,
    make_synthetic_dem,
    flood_solve,
    l_rmse,
    momentum_loss,
    read_dataset,
    write_dataset,
    train_markov,
    ModeOverflowError,
    NonFiniteError,
    ImaginaryResidueError,
    DataFormatError,
)

__all__ = [
    "Model",
    "fft2",
    "ifft2",
    "grf_sample",
    "ns_solve",
    "swe_dambreak",
    "make_synthetic_dem",
    "flood_solve",
    "l_rmse",
    "momentum_loss",
    "read_dataset",
    "write_dataset",
    "train_markov",
    "ModeOverflowError",
    "NonFiniteError",
    "ImaginaryResidueError",
    "DataFormatError",
]

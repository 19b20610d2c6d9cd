"""Convolutional autoencoder training with a Laplacian-of-Gaussian subband loss.

Images are numpy arrays shaped (channels, height, width) with values in [-1, 1].
"""

from ._sflcae import (
    DEFAULT_SCALES,
    DEFAULT_SUBBAND_WEIGHTS,
    CheckpointError,
    ConfigError,
    DomainError,
    IoError,
    Model,
    NumericalError,
    TrainConfig,
    bank_forward,
    frequency_response,
    kernel_size,
    load_image,
    make_log_kernel,
    pixel_loss,
    resize_larger_side,
    run_keys,
    save_image,
    sfl_loss,
)
from ._sflcae import train_run as _train_run


def train_run(data_dir, out_dir, **settings):
    """Run the train command; settings use the same keys as the CLI and config files.

    Lists may be given as Python sequences. Returns the log text; raises on failure.
    """
    text = {"data_dir": str(data_dir), "out_dir": str(out_dir)}
    for key, value in settings.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        text[key] = str(value)
    code, log = _train_run(text)
    if code != 0:
        raise (ConfigError if code == 2 else IoError)(log.strip())
    return log


__all__ = [name for name in dir() if not name.startswith("_")]

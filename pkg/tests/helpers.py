import math

import numpy as np

from gids.encoder import EncoderConfig
from gids.gan import TrainedGids
from gids.nn import Act, ArchTag, Dense, Network


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def const_net(n_in: int, p: float) -> Network:
    """A discriminator that outputs ``p`` for every input."""
    layer = Dense(np.zeros((1, n_in), np.float64), np.array([logit(p)]), Act.SIGMOID)
    return Network([layer], ArchTag.DISCRIMINATOR_DNN, (n_in,))


def probe_net(n_in: int, col: int, scale: float = 8.0, bias: float = 0.0) -> Network:
    """Output sigmoid(bias + scale * x[col]) on signed pixels, so one pixel drives the score."""
    W = np.zeros((1, n_in))
    W[0, col] = scale
    return Network([Dense(W, np.array([bias]), Act.SIGMOID)], ArchTag.DISCRIMINATOR_DNN, (n_in,))


def const_model(d1: float | None, d2: float, rows: int = 4, threshold: float = 0.1) -> TrainedGids:
    cfg = EncoderConfig(rows)
    n_in = rows * cfg.width
    return TrainedGids(const_net(n_in, d2), None, None if d1 is None else const_net(n_in, d1), cfg, threshold)

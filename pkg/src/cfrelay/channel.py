"""Full-duplex AWGN relay channel model.

The relay hears the source through gain h12; the destination hears the source
through h13 and the relay through h23.  Within a block the relay transmits the
codeword describing the previous block, so the destination splits its signal
into an interference-free branch (after subtracting the already-decoded relay
word) and a relay branch whose residual source term is treated as extra
Gaussian noise.

Noise variances are totals per 2-D symbol, split equally over the two real
dimensions.  All randomness comes from the numpy Generator passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChannelParams:
    """Gains, powers and noise levels of one operating point.

    Attributes:
        h13, h12, h23: real field gains source->destination, source->relay,
            relay->destination.
        ps, pr: source and relay transmit powers in watts.
        n2_var, n3_var: total noise variance per 2-D symbol (watts) at the
            relay and destination.
        interference_model: which gain squares the source power in the relay
            branch's effective noise; "h13" keeps the physical reading,
            "h12" is available for comparison.
    """

    h13: float
    h12: float
    h23: float
    ps: float
    pr: float
    n2_var: float
    n3_var: float
    interference_model: str = "h13"

    def __post_init__(self) -> None:
        if self.interference_model not in ("h13", "h12"):
            raise ValueError(f"unknown interference_model: {self.interference_model!r}")
        for name in ("ps", "n2_var", "n3_var"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pr < 0:
            raise ValueError("pr must be nonnegative")

    def y23_noise_var(self) -> float:
        """Effective total noise variance of the relay branch."""
        g = self.h13 if self.interference_model == "h13" else self.h12
        return self.n3_var + g * g * self.ps


def complex_awgn(rng: np.random.Generator, shape, total_var: float) -> np.ndarray:
    """Circularly symmetric Gaussian noise with the given total variance."""
    sigma = np.sqrt(total_var / 2.0)
    return rng.normal(0.0, sigma, shape) + 1j * rng.normal(0.0, sigma, shape)


def relay_observe(
    params: ChannelParams, x1: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Relay reception of unit-energy source symbols x1."""
    x1 = np.asarray(x1, dtype=np.complex128)
    return params.h12 * np.sqrt(params.ps) * x1 + complex_awgn(rng, x1.shape, params.n2_var)


def destination_observe(
    params: ChannelParams,
    x1: np.ndarray,
    x2: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Destination reception; x2 is the relay word sent in the same block.

    Pass zeros for x2 in the first block, when the relay has nothing to send.
    """
    x1 = np.asarray(x1, dtype=np.complex128)
    x2 = np.asarray(x2, dtype=np.complex128)
    if x1.shape != x2.shape:
        raise ValueError("x1 and x2 must have the same shape")
    s = params.h13 * np.sqrt(params.ps) * x1 + params.h23 * np.sqrt(params.pr) * x2
    return s + complex_awgn(rng, x1.shape, params.n3_var)


def sic_decompose(
    params: ChannelParams, y3_prev: np.ndarray, x2_prev2: np.ndarray
) -> np.ndarray:
    """Interference-free branch for the previous block.

    Subtracts the relay word decoded two blocks back from the previous
    destination block, leaving h13 * sqrt(ps) * x1 plus the original noise.
    """
    y3_prev = np.asarray(y3_prev, dtype=np.complex128)
    x2_prev2 = np.asarray(x2_prev2, dtype=np.complex128)
    return y3_prev - params.h23 * np.sqrt(params.pr) * x2_prev2

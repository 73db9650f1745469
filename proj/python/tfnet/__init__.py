"""Low-latency neural speech codec: STFT front end, codec, packet-loss channel."""

from ._tfnet import (
    Codec,
    TfnetError,
    bitrate_kbps,
    cola_constant,
    compress,
    expand,
    istft,
    pack,
    simulate_channel,
    stationary_loss_rate,
    stft,
    unpack,
)

__all__ = [
    "Codec",
    "TfnetError",
    "bitrate_kbps",
    "cola_constant",
    "compress",
    "expand",
    "istft",
    "pack",
    "simulate_channel",
    "stationary_loss_rate",
    "stft",
    "unpack",
]

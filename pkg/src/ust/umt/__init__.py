from .model import ToySeq2Seq, beam_decode, greedy_decode, translate  # noqa: F401
from .noise import NoiseConfig, dae_noise  # noqa: F401

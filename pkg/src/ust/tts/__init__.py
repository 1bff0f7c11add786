from .model import SynthesisConfig, SynthesisResult, TtsModel, synthesize  # noqa: F401
from .train import TtsTrainConfig, eos_consistency_loss, train_tts  # noqa: F401

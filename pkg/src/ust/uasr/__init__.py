from .losses import gaussian_perturb, rdrop_loss  # noqa: F401
from .models import PhonemeClassMap, PhonemeGenerator, SequenceDiscriminator  # noqa: F401

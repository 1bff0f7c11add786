from ..checkpoints import (  # noqa: F401
    Checkpoint,
    average_checkpoints,
    load_checkpoint,
    save_checkpoint,
    select_checkpoints,
)
from .pseudo import PseudoLabelStats, PseudoPair, pseudo_label_s2st, pseudo_label_s2tt  # noqa: F401

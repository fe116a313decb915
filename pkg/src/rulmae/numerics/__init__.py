from .adam import AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check
from .tape import Tape, Tensor

__all__ = ["AdamState", "adam_step", "GradCheckReport", "grad_check", "Tape", "Tensor"]

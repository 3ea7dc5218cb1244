from .autodiff import Var, backward, grad_of, stop_gradient
from .checkpoint import load_checkpoint, restore_into, save_checkpoint
from .gradcheck import GradCheckReport, check_gradients, grad_check
from .optim import Adam, ParamSlot, adam_step, xavier_init

__all__ = [
    "Var", "backward", "grad_of", "stop_gradient",
    "ParamSlot", "Adam", "adam_step", "xavier_init",
    "GradCheckReport", "check_gradients", "grad_check",
    "save_checkpoint", "load_checkpoint", "restore_into",
]

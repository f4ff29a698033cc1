"""The two concrete graph processes, analytic and simulated."""

from .dprocess import (
    DProcessState,
    dprocess_diffusion,
    dprocess_diffusion_pair_law,
    dprocess_drift,
    dprocess_endpoint_law,
    dprocess_model,
    dprocess_step,
)
from .mindeg import (
    LN2,
    ExtendedChainState,
    MinDegState,
    mindeg_beta,
    mindeg_diffusion,
    mindeg_drift,
    mindeg_exact_law,
    mindeg_extended_step,
    mindeg_final_sigma,
    mindeg_jacobian,
    mindeg_model,
    mindeg_mu,
    mindeg_step,
    mindeg_T_closed,
)
from . import dprocess as _dprocess
from . import mindeg as _mindeg

__all__ = [
    "DProcessState",
    "dprocess_diffusion",
    "dprocess_diffusion_pair_law",
    "dprocess_drift",
    "dprocess_endpoint_law",
    "dprocess_model",
    "dprocess_step",
    "LN2",
    "ExtendedChainState",
    "MinDegState",
    "mindeg_beta",
    "mindeg_diffusion",
    "mindeg_drift",
    "mindeg_exact_law",
    "mindeg_extended_step",
    "mindeg_final_sigma",
    "mindeg_jacobian",
    "mindeg_model",
    "mindeg_mu",
    "mindeg_step",
    "mindeg_T_closed",
    "LABELS",
    "get_model",
    "get_path_runner",
]

LABELS = ("dproc", "mindeg")


def get_model(label: str, **params):
    """ProcessModel by label: ``dproc`` takes ``d``, ``mindeg`` takes ``q``."""
    if label == "dproc":
        return dprocess_model(params.get("d", 2), params.get("epsilon", 0.1),
                              params.get("corrected", True))
    if label == "mindeg":
        return mindeg_model(params.get("q", 6), params.get("epsilon", 0.1))
    raise KeyError(f"unknown model {label!r}; expected one of {LABELS}")


def get_path_runner(label: str):
    if label == "dproc":
        return _dprocess.run_path
    if label == "mindeg":
        return _mindeg.run_path
    raise KeyError(f"unknown model {label!r}; expected one of {LABELS}")

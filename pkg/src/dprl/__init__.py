"""Differentially private optimistic learners for episodic tabular MDPs."""

__version__ = "0.1.0"

from .algorithms import PrivateUCBPO, PrivateUCBVI  # noqa: E402
from .mdp import MdpSpec, RolloutEnv, build_riverswim, load_mdp, save_mdp  # noqa: E402
from .privatizers import (  # noqa: E402
    CentralPrivatizer,
    IdentityPrivatizer,
    LocalPrivatizer,
    make_privatizer,
)

__all__ = [
    "CentralPrivatizer",
    "IdentityPrivatizer",
    "LocalPrivatizer",
    "MdpSpec",
    "PrivateUCBPO",
    "PrivateUCBVI",
    "RolloutEnv",
    "build_riverswim",
    "load_mdp",
    "make_privatizer",
    "save_mdp",
]

"""Neighbor discovery in slotted CDMA ad hoc networks over Rayleigh fading:
signature sets, session simulation, detectors, closed-form performance and
experiment drivers."""

__version__ = "0.1.0"

from .channel import NetworkConfig, SessionRealization, SlotObservations
from .signatures import SignatureSet, build_signature_set, gen_msequence, paper_signatures

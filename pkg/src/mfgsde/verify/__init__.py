"""Numerical verification: finite differences, Grönwall audits, moment inequalities."""

from .appendix import (
    BDG_CALIBRATED,
    AppendixReport,
    appendix_check,
    calibrate_bdg,
    probe_family,
)
from .bounds import (
    LEMMAS,
    AuditProbes,
    RatioAudit,
    audit_all,
    bdg_constant,
    ratio_audit,
)
from .fd import (
    ConvergenceReport,
    fd_check_concatenated,
    fd_check_x,
    fd_check_x_xi,
    fd_check_xi,
    fd_check_xi_frozen,
    fd_check_xx,
)

__all__ = [
    "ConvergenceReport",
    "fd_check_concatenated",
    "fd_check_x",
    "fd_check_x_xi",
    "fd_check_xi",
    "fd_check_xi_frozen",
    "fd_check_xx",
    "LEMMAS",
    "AuditProbes",
    "RatioAudit",
    "audit_all",
    "bdg_constant",
    "ratio_audit",
    "BDG_CALIBRATED",
    "AppendixReport",
    "appendix_check",
    "calibrate_bdg",
    "probe_family",
]

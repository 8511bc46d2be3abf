"""Accelerated prox-level bundle methods for nonsmooth convex minimisation."""

from .apex import RunTrace, apex_run, verify_rate
from .awg import awg
from .baselines import bl, lowerbound_experiment, polyak
from .certificate import WolfeCertificate, ball_min, gap_bound, verify_certificate, wolfe_gap
from .problems import (BudgetExceeded, ChainMaxProblem, CountingOracle, MaxQuadProblem, chain_optimum,
                       gen_maxquad, toy_problem)
from .projection import HalfspaceSystem, Status, project
from .refsolve import kelley_fstar, maxquad_fstar
from .restart import rapex_known, rapex_unknown

__version__ = "0.1.0"

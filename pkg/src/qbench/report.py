"""Certification report records shared by the CV and finite-ensemble paths."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field


class Verdict(str, enum.Enum):
    QUANTUM_DOMAIN = "QuantumDomain"
    INCONCLUSIVE = "Inconclusive"
    NOT_EVALUATED = "NotEvaluated"


@dataclass(frozen=True)
class Diagnostics:
    gram_singular_values: tuple = ()
    eigenvalue_residual: float = 0.0
    truncation_deficits: tuple = ()
    quadrature_spec: dict | None = None
    error_budget: float = 0.0
    nominal_state_count: int | None = None
    vacuous: bool = False
    missing_fidelity_indices: tuple = ()
    notes: tuple = ()


@dataclass(frozen=True)
class CertificationReport:
    classical_limit: float
    average_fidelity: float | None
    margin: float | None
    verdict: Verdict
    d_effective: int | None
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def to_dict(self):
        out = asdict(self)
        out["verdict"] = self.verdict.value
        d = out["diagnostics"]
        for key in ("gram_singular_values", "truncation_deficits", "missing_fidelity_indices", "notes"):
            d[key] = list(d[key])
        return out


def decide(average_fidelity, classical_limit, error_budget):
    """QuantumDomain only on strict exceedance beyond the error budget."""
    if average_fidelity is None:
        return Verdict.NOT_EVALUATED, None
    margin = average_fidelity - classical_limit
    if margin > error_budget:
        return Verdict.QUANTUM_DOMAIN, margin
    return Verdict.INCONCLUSIVE, margin

"""Two-step sharpness-aware local update with pluggable ascent estimators.

The ascent direction g decides the variant: the client's own stochastic
gradient (FedSAM), the previous round's global model update (FedLESAM),
or an interpolation between the local gradient and the gradient on a
server-distilled synthetic batch (FedSynSAM).  Every variant then shares
the same two-step update: perturb by rho * g/||g||, descend along the
gradient at the perturbed point evaluated on the local minibatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .models import MlpSpec, loss_and_grad, sgd_step

if TYPE_CHECKING:  # only for annotations
    from .distill import SyntheticDataset

__all__ = [
    "KIND_LOCAL_GRAD",
    "KIND_LESAM",
    "KIND_SYNSAM",
    "PerturbEstimator",
    "PerturbDiagnostics",
    "DiagnosticsToken",
    "estimate_ascent_direction",
    "sam_two_step",
    "perturbation_cosine",
]

KIND_LOCAL_GRAD = "local-grad"
KIND_LESAM = "lesam"
KIND_SYNSAM = "synsam"


@dataclass
class PerturbEstimator:
    """Configuration of the global-perturbation estimate used for ascent."""

    kind: str
    rho: float
    beta: float = 0.9
    syn: "SyntheticDataset | None" = None
    prev_update: np.ndarray | None = None
    warmup_rounds: int = 30

    def __post_init__(self):
        if self.kind not in (KIND_LOCAL_GRAD, KIND_LESAM, KIND_SYNSAM):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class PerturbDiagnostics:
    """Alignment of the estimated ascent direction with the true global one."""

    cos_theta: float | None
    gamma: float | None


class DiagnosticsToken:
    """Marker granting measurement-only access to all clients' data.

    Local training never receives one; only the simulator's diagnostics
    layer constructs it, which keeps cross-client reads out of the
    training path by interface.
    """


def estimate_ascent_direction(
    est: PerturbEstimator,
    spec: MlpSpec,
    w: np.ndarray,
    local_batch,
    syn_batch=None,
    round_index: int = 0,
) -> np.ndarray:
    """Unnormalized ascent direction for the configured variant."""
    if est.kind == KIND_LESAM:
        if est.prev_update is None:
            return loss_and_grad(spec, w, *local_batch)[1]
        return est.prev_update
    g_local = loss_and_grad(spec, w, *local_batch)[1]
    if est.kind == KIND_LOCAL_GRAD or round_index <= est.warmup_rounds:
        return g_local
    if syn_batch is None:
        raise ValueError(f"synsam requires a synthetic batch after round {est.warmup_rounds}")
    # Exact at the endpoints: no interpolation arithmetic for beta in {0, 1}.
    if est.beta == 1.0:
        return g_local
    g_syn = loss_and_grad(spec, w, *syn_batch)[1]
    if est.beta == 0.0:
        return g_syn
    return est.beta * g_local + (1.0 - est.beta) * g_syn


def sam_two_step(
    spec: MlpSpec,
    w: np.ndarray,
    est: PerturbEstimator,
    local_batch,
    syn_batch,
    eta_l: float,
    round_index: int,
) -> np.ndarray:
    """Perturb rho along g/||g||, then descend on the perturbed gradient.

    A zero ascent direction degenerates to a plain SGD step.
    """
    g = estimate_ascent_direction(est, spec, w, local_batch, syn_batch, round_index)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return sgd_step(w, loss_and_grad(spec, w, *local_batch)[1], eta_l)
    w_tilde = w + est.rho * (g / g_norm)
    g_descent = loss_and_grad(spec, w_tilde, *local_batch)[1]
    return sgd_step(w, g_descent, eta_l)


def _full_batch_gradient(spec, w, features, labels):
    return loss_and_grad(spec, w, features, labels)[1]


def perturbation_cosine(
    token: DiagnosticsToken,
    est: PerturbEstimator,
    spec: MlpSpec,
    w: np.ndarray,
    local_data,
    all_client_data,
    syn_data=None,
    sigma_g: float | None = None,
    lipschitz: float | None = None,
) -> PerturbDiagnostics:
    """Cosine between a client's estimated and the true global perturbation.

    Uses full-batch gradients (the defining quantities, not minibatch
    estimates).  The deviation bound gamma = 2*sigma_g^2 +
    4*L^2*rho^2*(1 - cos) is filled in when empirical (sigma_g, L)
    estimates are supplied.  Measurement only: requires the simulator's
    diagnostics token.
    """
    if not isinstance(token, DiagnosticsToken):
        raise TypeError("perturbation diagnostics require a DiagnosticsToken")
    global_grad = np.zeros_like(w)
    for features, labels in all_client_data:
        global_grad += _full_batch_gradient(spec, w, features, labels)
    global_grad /= len(all_client_data)

    if est.kind == KIND_LESAM:
        estimated = est.prev_update
        if estimated is None:
            estimated = _full_batch_gradient(spec, w, *local_data)
    elif est.kind == KIND_SYNSAM and est.syn is not None:
        g_local = _full_batch_gradient(spec, w, *local_data)
        syn = syn_data if syn_data is not None else (est.syn.features, est.syn.labels)
        g_syn = _full_batch_gradient(spec, w, *syn)
        estimated = est.beta * g_local + (1.0 - est.beta) * g_syn
    else:
        estimated = _full_batch_gradient(spec, w, *local_data)

    ne = float(np.linalg.norm(estimated))
    ng = float(np.linalg.norm(global_grad))
    if ne == 0.0 or ng == 0.0:
        return PerturbDiagnostics(None, None)
    cos = float(np.dot(estimated, global_grad) / (ne * ng))
    cos = min(1.0, max(-1.0, cos))
    gamma = None
    if sigma_g is not None and lipschitz is not None:
        gamma = 2.0 * sigma_g**2 + 4.0 * lipschitz**2 * est.rho**2 * (1.0 - cos)
    return PerturbDiagnostics(cos, gamma)

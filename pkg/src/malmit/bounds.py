"""Closed-form convergence-rate and final-value bounds, checked against runs.

Exact bounds are asserted by callers; bounds that rest on the
instantaneous-relaxation approximation (the infection state is assumed to
sit at its fixed point while the defense parameters drift) are evaluated
with a tolerance band and reported rather than enforced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class BoundReport:
    name: str
    bound: float
    observed: float
    satisfied: bool
    slack: float            # bound - observed for upper bounds (negative = violated)
    approximate: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name, "bound": self.bound, "observed": self.observed,
            "satisfied": bool(self.satisfied), "slack": self.slack,
            "approximate": bool(self.approximate), "note": self.note,
        }


def patch_rate_lower_curve(t, alpha, beta0, degree, lam_min, n_viruses):
    """Lower envelope for a host's patch rate under the monotone law.

    Exponential approach from beta0 toward the asymptote degree*lam_min at
    rate alpha*n_viruses/(degree*lam_min). Rests on the instantaneous
    fixed-point approximation, so checks should allow a tolerance band.
    """
    if degree < 1:
        raise DomainError("curve needs a host with at least one neighbor")
    asymptote = degree * lam_min
    rate = alpha * n_viruses / asymptote
    return asymptote + (beta0 - asymptote) * np.exp(-rate * np.asarray(t, dtype=float))


def final_patch_sum_bound(lam_max, n_edges, n_hosts, alpha):
    """Final-value bounds for the summed monotone patch rates.

    Returns (total, per_host_avg) = (lam_max*|E| + 2|N|sqrt(alpha),
    lam_max*d_avg + 2 sqrt(alpha)). The two printed forms differ by the
    edge-count convention: the per-host average times |N| equals
    lam_max * (sum of degrees) + 2|N|sqrt(alpha), i.e. it counts each edge
    from both endpoints, while the total form counts each edge once. The
    average form is the one consistent with the derivation's initial-rate
    regime beta_i(0) > lam_max |N_i|; the total form is looser than its own
    precondition allows whenever 2|N|sqrt(alpha) < lam_max|E|.
    """
    total = lam_max * n_edges + 2.0 * n_hosts * np.sqrt(alpha)
    d_avg = 2.0 * n_edges / n_hosts
    per_host_avg = lam_max * d_avg + 2.0 * np.sqrt(alpha)
    return float(total), float(per_host_avg)


def filter_rate_upper(q, gamma, net, model, beta):
    """Upper bound on the filter-probability growth rate while q < p_min.

    Combines the fixed-point bound on detectable traffic with the worst-case
    patch rates; diverges as q approaches p_min (learning slows near the
    threshold). Raises DomainError for q >= p_min.
    """
    p_min = model.p_min
    if q >= p_min:
        raise DomainError(f"bound defined for q < {p_min}")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (net.n,))
    beta_max = float(beta.max())
    beta_min = float(beta.min())
    d_min = float(net.degrees.min())
    lam_max = model.lambda_max
    mu_min = model.mu_min
    lead = gamma * model.m * beta_max / (p_min - q)
    inner = d_min + ((net.n - d_min) * lam_max - beta_min) / (mu_min * (p_min - q))
    return float(lead * inner)


def q_final_bound(gamma, beta, degrees, n_viruses, p_bar):
    """Cap on the final filter probability under static patching."""
    beta = np.asarray(beta, dtype=float)
    degrees = np.asarray(degrees, dtype=float)
    if np.any(beta <= 0):
        raise DomainError("static patch rates must be positive")
    return float(min(p_bar + n_viruses * gamma * float((degrees / beta).sum()), 1.0))


# --- trajectory checks -------------------------------------------------

def check_patch_rate_curve(traj, net, model, alpha, rel_band=0.05) -> BoundReport:
    """Per-host check beta_i(t) >= curve(t) - band, band = rel_band * asymptote."""
    lam_min = model.lambda_min
    m = model.m
    worst = np.inf
    for i in range(net.n):
        d = int(net.degrees[i])
        if d < 1:
            continue
        curve = patch_rate_lower_curve(traj.t, alpha, traj.beta[0, i], d, lam_min, m)
        band = rel_band * d * lam_min
        worst = min(worst, float((traj.beta[:, i] - (curve - band)).min()))
    return BoundReport(
        name="patch_rate_lower_curve", bound=0.0, observed=worst,
        satisfied=bool(worst >= 0.0), slack=worst, approximate=True,
        note=f"per-host envelope with {rel_band:.0%} of asymptote band")


def check_final_patch_sum(traj, net, model, alpha):
    """Reports for both printed final-value forms; precondition checked on beta(0)."""
    lam_max = model.lambda_max
    precondition = bool(np.all(traj.beta[0] > lam_max * net.degrees))
    total_bound, avg_bound = final_patch_sum_bound(
        lam_max, net.n_edges, net.n, alpha)
    total_obs = float(traj.beta[-1].sum())
    avg_obs = total_obs / net.n
    note = "" if precondition else "precondition beta_i(0) > lam_max|N_i| not met"
    return (
        BoundReport(name="final_patch_sum_total", bound=total_bound,
                    observed=total_obs, satisfied=bool(total_obs <= total_bound),
                    slack=total_bound - total_obs,
                    note=note or "single-count edge form; looser than its own "
                                 "initial-rate precondition at small alpha"),
        BoundReport(name="final_patch_avg", bound=avg_bound, observed=avg_obs,
                    satisfied=bool(avg_obs <= avg_bound),
                    slack=avg_bound - avg_obs, note=note),
    )


def check_filter_rate(traj, net, model, gamma, beta, rel_band=0.05) -> BoundReport:
    """Finite-difference dq/dt against the growth bound at every q < p_min."""
    q = traj.q
    t = traj.t
    p_min = model.p_min
    worst_slack = np.inf
    checked = 0
    for k in range(len(t) - 1):
        q_mid = 0.5 * (q[k] + q[k + 1])
        if q_mid >= p_min - 1e-9:
            continue
        observed = (q[k + 1] - q[k]) / (t[k + 1] - t[k])
        bound = filter_rate_upper(q_mid, gamma, net, model, beta)
        worst_slack = min(worst_slack, bound * (1.0 + rel_band) - observed)
        checked += 1
    satisfied = bool(checked == 0 or worst_slack >= 0.0)
    return BoundReport(
        name="filter_rate_upper", bound=0.0,
        observed=float(worst_slack if checked else np.nan), satisfied=satisfied,
        slack=float(worst_slack if checked else np.inf), approximate=True,
        note=f"{checked} grid intervals below p_min")


def check_q_final(traj, net, model, gamma, beta) -> BoundReport:
    bound = q_final_bound(gamma, beta, net.degrees, model.m, model.p_bar)
    observed = float(traj.q[-1])
    return BoundReport(name="q_final_bound", bound=bound, observed=observed,
                       satisfied=bool(observed <= bound + 1e-12),
                       slack=bound - observed)

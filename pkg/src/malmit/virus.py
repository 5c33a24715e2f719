"""Virus set, competition structure, and infection-rate tables.

Infection sets are plain int bitmasks over the viruses (bit v set = virus v
present); mask 0 is the clean state. A set is realizable when no two of its
viruses compete.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AlreadyInfected, ConfigError, InvalidProbability, TooManyViruses

MAX_VIRUSES = 16


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_members(mask: int):
    v = 0
    while mask:
        if mask & 1:
            yield v
        mask >>= 1
        v += 1


@dataclass(frozen=True)
class VirusModel:
    """Virus parameters plus derived rate tables.

    mu[v] is the packet rate of virus v; compete[v] is the bitmask of viruses
    it competes with; p^{S,v} defaults to p_default[v] and may be overridden
    per realizable set. lam(S, v) = p^{S,v} * mu[v].
    """

    names: tuple
    mu: np.ndarray = field(repr=False)
    compete: tuple = ()
    p_default: np.ndarray = field(repr=False, default=None)
    p_overrides: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = len(self.names)
        if m < 1:
            raise ValueError("need at least one virus")
        if m > MAX_VIRUSES:
            raise TooManyViruses(f"{m} viruses; set enumeration is exponential, cap is {MAX_VIRUSES}")
        if not self.compete:
            object.__setattr__(self, "compete", (0,) * m)
        elif len(self.compete) != m:
            raise ValueError("competition mask count must match virus count")
        for v in range(m):
            if self.compete[v] >> m:
                raise ValueError(f"competition mask of {self.names[v]} names unknown viruses")
            if (self.compete[v] >> v) & 1:
                raise ValueError(f"{self.names[v]} listed as competing with itself")
            for w in mask_members(self.compete[v]):
                if not (self.compete[w] >> v) & 1:
                    raise ValueError("competition must be symmetric")
        if np.any(np.asarray(self.mu) <= 0):
            raise ValueError("packet rates must be positive")
        if self.p_default is None:
            object.__setattr__(self, "p_default", np.ones(m))
        probs = list(np.asarray(self.p_default)) + [p for p in self.p_overrides.values()]
        if any(p < 0 or p > 1 for p in probs):
            raise InvalidProbability("infection probabilities must lie in [0,1]")
        for (mask, v) in self.p_overrides:
            if (mask >> v) & 1:
                raise ValueError(f"override ({mask},{v}): virus already in set")
            if not self.is_realizable(mask):
                raise ValueError(f"override set {mask} is not realizable")

    @property
    def m(self) -> int:
        return len(self.names)

    def is_realizable(self, mask: int) -> bool:
        return all(self.compete[v] & mask == 0 for v in mask_members(mask))

    def realizable_sets(self):
        """Nonempty realizable masks in ascending order (the shared set index)."""
        return [s for s in range(1, 1 << self.m) if self.is_realizable(s)]

    def set_index(self) -> dict:
        return {s: k for k, s in enumerate(self.realizable_sets())}

    def p(self, mask: int, v: int) -> float:
        if (mask >> v) & 1:
            raise AlreadyInfected(f"virus {v} already in set {mask}")
        return self.p_overrides.get((mask, v), float(self.p_default[v]))

    def lam(self, mask: int, v: int) -> float:
        """Per-neighbor compromise rate lambda^{S,v} = p^{S,v} mu^v."""
        return self.p(mask, v) * float(self.mu[v])

    def infect_target(self, mask: int, v: int) -> int:
        """Resulting set when virus v lands on a host holding `mask`: competitors leave."""
        if (mask >> v) & 1:
            raise AlreadyInfected(f"virus {v} already in set {mask}")
        return (mask & ~self.compete[v]) | (1 << v)

    def predecessors(self, mask: int):
        """All (prior set, virus) pairs that transition to `mask` by one infection.

        Priors are (mask \\ {v}) | R with R a subset of v's competitors; only
        realizable (or empty) priors are returned, each exactly once per v.
        """
        out = []
        for v in mask_members(mask):
            base = mask & ~(1 << v)
            comp = self.compete[v]
            r = 0
            while True:
                prior = base | r
                if self.is_realizable(prior) and self.infect_target(prior, v) == mask:
                    out.append((prior, v))
                # enumerate submasks of comp in ascending order
                if r == comp:
                    break
                r = (r - comp) & comp
        return out

    # --- rate tables for the engines ---------------------------------

    def lam_table(self) -> np.ndarray:
        """Dense (2^m, m) table of lambda^{S,v}; entries with v in S are 0."""
        tab = np.zeros((1 << self.m, self.m))
        for mask in range(1 << self.m):
            for v in range(self.m):
                if not (mask >> v) & 1:
                    tab[mask, v] = self.lam(mask, v)
        return tab

    def _chain_entries(self):
        """(mask, v) pairs the chain can actually exercise: realizable or clean sets."""
        masks = [0] + self.realizable_sets()
        return [(s, v) for s in masks for v in range(self.m) if not (s >> v) & 1]

    @property
    def lambda_hat(self) -> float:
        """Total compromise rate out of the clean state, sum_v lambda^{clean,v}."""
        return sum(self.lam(0, v) for v in range(self.m))

    @property
    def lambda_min(self) -> float:
        return min(self.lam(s, v) for s, v in self._chain_entries())

    @property
    def lambda_max(self) -> float:
        return max(self.lam(s, v) for s, v in self._chain_entries())

    def lambda_max_v(self, v: int) -> float:
        return max(self.lam(s, w) for s, w in self._chain_entries() if w == v)

    @property
    def p_bar(self) -> float:
        return max(self.p(s, v) for s, v in self._chain_entries())

    @property
    def p_min(self) -> float:
        return min(self.p(s, v) for s, v in self._chain_entries())

    @property
    def mu_min(self) -> float:
        return float(np.min(self.mu))

    # --- serialization ------------------------------------------------

    def to_dict(self) -> dict:
        name = list(self.names)
        out = {
            "viruses": name,
            "mu": [float(x) for x in self.mu],
            "p": [float(x) for x in self.p_default],
            "compete": sorted(
                [name[v], name[w]]
                for v in range(self.m)
                for w in mask_members(self.compete[v])
                if w > v
            ),
        }
        if self.p_overrides:
            out["p_overrides"] = [
                {"set": [name[u] for u in mask_members(mask)], "virus": name[v], "p": p}
                for (mask, v), p in sorted(self.p_overrides.items())
            ]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VirusModel":
        allowed = {"viruses", "mu", "p", "compete", "p_overrides"}
        for key in d:
            if key not in allowed:
                raise ConfigError("unknown key", field=key)
        try:
            names = tuple(d["viruses"])
            mu = np.asarray(d["mu"], dtype=float)
        except KeyError as exc:
            raise ConfigError("missing key", field=str(exc)) from exc
        if len(set(names)) != len(names):
            raise ConfigError("duplicate virus names", field="viruses")
        idx = {nm: v for v, nm in enumerate(names)}
        m = len(names)
        if len(mu) != m:
            raise ConfigError("mu length must match viruses", field="mu")
        p_default = np.asarray(d.get("p", [1.0] * m), dtype=float)
        if len(p_default) != m:
            raise ConfigError("p length must match viruses", field="p")
        compete = [0] * m
        for pair in d.get("compete", []):
            a, b = (idx.get(nm) for nm in pair)
            if a is None or b is None:
                raise ConfigError(f"unknown virus in pair {pair}", field="compete")
            compete[a] |= 1 << b
            compete[b] |= 1 << a
        overrides = {}
        for entry in d.get("p_overrides", []):
            mask = 0
            for nm in entry["set"]:
                mask |= 1 << idx[nm]
            overrides[(mask, idx[entry["virus"]])] = float(entry["p"])
        return cls(names=names, mu=mu, compete=tuple(compete),
                   p_default=p_default, p_overrides=overrides)

    @classmethod
    def from_file(cls, path) -> "VirusModel":
        with open(path) as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path} line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(payload)

    def to_file(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def coexisting(rates, mu=None, names=None) -> VirusModel:
    """Model with no competition and set-independent rates lambda_v = rates[v]."""
    rates = np.asarray(rates, dtype=float)
    mu = rates.copy() if mu is None else np.asarray(mu, dtype=float)
    names = names or tuple(f"v{k+1}" for k in range(len(rates)))
    return VirusModel(names=tuple(names), mu=mu, compete=(0,) * len(rates),
                      p_default=rates / mu)


def competing(rates, mu=None, names=None) -> VirusModel:
    """Model where every pair competes, set-independent rates."""
    rates = np.asarray(rates, dtype=float)
    m = len(rates)
    mu = rates.copy() if mu is None else np.asarray(mu, dtype=float)
    names = names or tuple(f"v{k+1}" for k in range(m))
    full = (1 << m) - 1
    compete = tuple(full & ~(1 << v) for v in range(m))
    return VirusModel(names=tuple(names), mu=mu, compete=compete,
                      p_default=rates / mu)

"""Synthetic networks drawn from the copula MMSB generative process."""
from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaSpec, sample_pairs
from .mathkernel import DomainError, _sample_dirichlet, rng_stream
from .relmodel import MODE_ALIASES, Hyperparams, InteractionMatrix, SubgroupMap, stick_invert

SUBGROUP_RULES = ("full", "first_block", "none")

GROUP_SIZES = [20, 13, 9, 8]
GROUP_MEMBERSHIP = [
    [0.9, 0.1, 0.0, 0.0],
    [0.0, 0.9, 0.1, 0.0],
    [0.1, 0.05, 0.85, 0.0],
    [0.1, 0.05, 0.05, 0.8],
]
COMPAT = [
    [0.95, 0.05, 0.0, 0.0],
    [0.05, 0.95, 0.05, 0.0],
    [0.05, 0.0, 0.95, 0.0],
    [0.0, 0.05, 0.0, 0.95],
]


@dataclass
class SynthSpec:
    """Group-structured generator settings.

    Every node of group ``g`` uses ``group_membership[g]`` as its membership
    vector.  ``copula_specs[d - 1]`` drives subgroup ``d`` of the pair map
    built by ``subgroup_map_rule``:

    * ``full``: every pair in subgroup 1;
    * ``first_block``: pairs inside the first group in subgroup 1, all
      others in subgroup 2;
    * ``none``: every pair independent.
    """

    n: int
    group_sizes: list
    group_membership: list
    compat: list
    subgroup_map_rule: str = "full"
    copula_specs: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        sizes = np.asarray(self.group_sizes, dtype=np.int64)
        memb = np.asarray(self.group_membership, dtype=np.float64)
        compat = np.asarray(self.compat, dtype=np.float64)
        if sizes.ndim != 1 or (sizes <= 0).any():
            raise DomainError("group_sizes must be positive integers")
        if sizes.sum() != self.n:
            raise DomainError(f"group_sizes sum to {sizes.sum()}, expected n={self.n}")
        if memb.ndim != 2 or memb.shape[0] != sizes.shape[0]:
            raise DomainError("group_membership needs one row per group")
        if (memb < 0).any() or np.abs(memb.sum(axis=1) - 1.0).max() > 1e-9:
            raise DomainError("group_membership rows must be probability vectors")
        K = memb.shape[1]
        if compat.shape != (K, K) or (compat < 0).any() or (compat > 1).any():
            raise DomainError(f"compat must be a {K}x{K} matrix with entries in [0, 1]")
        if self.subgroup_map_rule not in SUBGROUP_RULES:
            raise DomainError(f"subgroup_map_rule must be one of {SUBGROUP_RULES}")
        self.copula_specs = [c if isinstance(c, CopulaSpec) else CopulaSpec(**c)
                             for c in self.copula_specs]
        need = {"full": 1, "first_block": 2, "none": 0}[self.subgroup_map_rule]
        if len(self.copula_specs) < need:
            raise DomainError(f"rule {self.subgroup_map_rule!r} needs {need} copula specs")

    @property
    def K(self):
        return len(self.group_membership[0])

    def groups(self):
        return np.repeat(np.arange(len(self.group_sizes)), self.group_sizes)

    def subgroup_map(self):
        if self.subgroup_map_rule == "full":
            return SubgroupMap.full(self.n, 1)
        if self.subgroup_map_rule == "first_block":
            return SubgroupMap.block(self.n, np.arange(self.group_sizes[0]), 1, 2)
        return SubgroupMap.independent(self.n)

    def to_dict(self):
        return {
            "n": int(self.n),
            "group_sizes": [int(x) for x in self.group_sizes],
            "group_membership": [[float(x) for x in row] for row in self.group_membership],
            "compat": [[float(x) for x in row] for row in self.compat],
            "subgroup_map_rule": self.subgroup_map_rule,
            "copula_specs": [c.to_dict() for c in self.copula_specs],
            "seed": int(self.seed),
        }


def preset(name, seed=0):
    """Synthetic benchmark settings: ``paper-synthetic-full`` or ``paper-synthetic-partial``."""
    if name == "paper-synthetic-full":
        return SynthSpec(50, GROUP_SIZES, GROUP_MEMBERSHIP, COMPAT, "full",
                         [CopulaSpec("gumbel", theta=3.5, fixed=True)], seed)
    if name == "paper-synthetic-partial":
        return SynthSpec(50, GROUP_SIZES, GROUP_MEMBERSHIP, COMPAT, "first_block",
                         [CopulaSpec("gumbel", theta=3.5, fixed=True),
                          CopulaSpec("independence")], seed)
    raise DomainError(f"unknown preset {name!r}")


PRESETS = ("paper-synthetic-full", "paper-synthetic-partial")


def _draw_pairs(pi, labels, specs, rng):
    """Copula draws, indicators for every ordered off-diagonal pair (row-major)."""
    n = pi.shape[0]
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    g = labels[ii, jj]
    u = np.empty(ii.shape[0])
    v = np.empty(ii.shape[0])
    for d in np.unique(g):
        sel = np.nonzero(g == d)[0]
        spec = CopulaSpec("independence") if d == 0 else specs[d - 1]
        uv = sample_pairs(spec, sel.shape[0], rng)
        u[sel] = uv[:, 0]
        v[sel] = uv[:, 1]
    s = np.array([stick_invert(pi[i], x) for i, x in zip(ii, u)], dtype=np.int64)
    r = np.array([stick_invert(pi[j], x) for j, x in zip(jj, v)], dtype=np.int64)
    return ii, jj, g, u, v, s, r


def generate(spec):
    """Draw one network; returns ``(InteractionMatrix, SubgroupMap, truth)``.

    ``truth`` holds every latent: node groups, membership vectors, copula
    draws, indicators and the generating copula parameters.
    """
    rng = rng_stream(spec.seed)
    groups = spec.groups()
    memb = np.asarray(spec.group_membership, dtype=np.float64)
    compat = np.asarray(spec.compat, dtype=np.float64)
    pi = memb[groups]
    sub = spec.subgroup_map()
    ii, jj, g, u, v, s, r = _draw_pairs(pi, sub.labels, spec.copula_specs, rng)
    e = (rng.random(ii.shape[0]) < compat[s, r]).astype(np.int8)
    data = InteractionMatrix.from_entries(spec.n, ii, jj, e)
    truth = {
        "groups": groups,
        "pi": pi,
        "pairs": np.stack([ii, jj], axis=1),
        "subgroup": g,
        "u": u,
        "v": v,
        "s": s,
        "r": r,
        "theta": [c.theta_value for c in spec.copula_specs],
    }
    return data, sub, truth


def forward_sample(n, K, hyper, copulas, subgroups, rng, mode="finite", observed=None):
    """Draw every variable of the model from its prior (finite mode, or hdp truncated at K).

    ``copulas`` lists the subgroup specs; those not ``fixed`` get theta from
    their prior.  ``observed`` restricts which off-diagonal entries are
    observed (default all).  Returns ``(InteractionMatrix, latents)``.
    """
    from .copula import sample_theta_prior

    mode = MODE_ALIASES.get(mode, mode)
    hyper = hyper if isinstance(hyper, Hyperparams) else Hyperparams(**hyper)
    if mode == "finite":
        beta = _sample_dirichlet(np.full(K, hyper.gamma), rng)
    elif mode == "hdp":
        sticks = rng.beta(1.0, hyper.gamma, size=K)
        beta = np.empty(K + 1)
        rest = 1.0
        for k in range(K):
            beta[k] = sticks[k] * rest
            rest -= beta[k]
        beta[K] = rest
    else:
        raise DomainError(f"unknown mode {mode!r}")
    specs = []
    for c in copulas:
        c = c if isinstance(c, CopulaSpec) else CopulaSpec(**c)
        if not c.fixed:
            c = c.with_theta(sample_theta_prior(c, rng))
        specs.append(c)
    pi = np.stack([_sample_dirichlet(hyper.alpha * beta, rng) for _ in range(n)])
    ii, jj, g, u, v, s, r = _draw_pairs(pi, subgroups.labels, specs, rng)
    L = beta.shape[0]
    B = rng.beta(hyper.lambda1, hyper.lambda2, size=(L, L))
    e = (rng.random(ii.shape[0]) < B[s, r]).astype(np.int8)
    keep = np.ones(ii.shape[0], dtype=bool) if observed is None else np.asarray(observed)[ii, jj]
    data = InteractionMatrix.from_entries(n, ii[keep], jj[keep], e[keep])
    latents = {"beta": beta, "pi": pi, "theta": [c.theta_value for c in specs],
               "s": s[keep], "r": r[keep], "u": u[keep], "v": v[keep], "B": B}
    return data, latents

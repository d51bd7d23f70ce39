"""Release-gate checks: gradients vs finite differences, scalar oracles,
and the identity/invariance battery.

Each check yields a :class:`Check` carrying the measured error and the
tolerance it was held to.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import grad as G
from . import kernels, losses, model, numerics, oracles

GRAD_TOL = 1e-5
ORACLE_TOL = 1e-10
FD_STEP = 1e-5

SDD_MODES = [
    ("rd-kl", losses.SddConfig(use_relative_distance=True, divergence="kl")),
    ("rd-mse", losses.SddConfig(use_relative_distance=True, divergence="mse")),
    ("abs-kl", losses.SddConfig(use_relative_distance=False, divergence="kl")),
    ("abs-mse", losses.SddConfig(use_relative_distance=False, divergence="mse")),
]


@dataclass
class Check:
    name: str
    error: float
    tol: float
    comparison: str = "<"  # how error relates to tol when passing

    @property
    def passed(self):
        if math.isnan(self.error):
            return False
        if self.comparison == "<":
            return self.error < self.tol
        if self.comparison == "<=":
            return self.error <= self.tol
        return self.error >= self.tol

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured {self.error:.3e} {self.comparison} tol {self.tol:.1e}"


def _fixed_mk():
    # fixed bandwidth: the median heuristic is deliberately kept out of the graph
    return kernels.MultiKernel([kernels.Gaussian(2.0), kernels.Polynomial(1.0, 2)],
                               np.array([0.3, -0.2]))


def _grad_error(loss_of, x):
    p = G.Param(x, name="x")
    _, (g,) = G.value_and_grad(loss_of(p), [p])
    fd = numerics.finite_diff_grad(lambda m: loss_of(m).item(), x, FD_STEP)
    return numerics.relative_error(g, fd)


def loss_gradient_errors(seed, rows=8, cols=4):
    """Worst relative gradient error per loss for one random 8x4 instance."""
    rng = numerics.make_rng(seed)
    u = rng.uniform(-2, 2, size=(rows, cols))
    v = rng.uniform(-2, 2, size=(rows, cols))
    mk = _fixed_mk()
    tau = 0.5
    out = {}
    out["mkmmd"] = max(_grad_error(lambda x: losses.mkmmd_loss(mk, x, v), u),
                       _grad_error(lambda x: losses.mkmmd_loss(mk, u, x), v))
    for name, cfg in SDD_MODES:
        out[f"sdd[{name}]"] = max(_grad_error(lambda x: losses.sdd_loss(x, v, cfg), u),
                                  _grad_error(lambda x: losses.sdd_loss(u, x, cfg), v))
    out["clip"] = max(_grad_error(lambda x: losses.clip_contrastive_loss(x, v, tau), u),
                      _grad_error(lambda x: losses.clip_contrastive_loss(u, x, tau), v))
    out["ssl"] = max(_grad_error(lambda x: losses.ssl_loss(x, v, tau), u),
                     _grad_error(lambda x: losses.ssl_loss(u, x, tau), v))
    return out


def model_gradient_error(seed, rows=8, in_a=5, in_b=6, latent=4):
    """Gradient of the full weighted objective w.r.t. every model parameter."""
    rng = numerics.make_rng(seed)
    x_a = rng.uniform(-2, 2, size=(rows, in_a))
    x_b = rng.uniform(-2, 2, size=(rows, in_b))
    xa_pos = x_a + 0.1 * rng.standard_normal(x_a.shape)
    xb_pos = x_b + 0.1 * rng.standard_normal(x_b.shape)
    mdl = model.init(model.default_stream(in_a, (6, 6), latent), model.default_stream(in_b, (6, 6), latent), seed)
    mk = _fixed_mk()
    weights = losses.LossWeights(alpha=1.0, delta=0.5, eta=1.0, mu=0.3)
    cfg = losses.SddConfig()
    params = mdl.params() + [mk.beta_logits]

    def objective():
        u, v = mdl.forward(x_a, x_b)
        emb = losses.Embeddings(u, v, mdl.embed_a(xa_pos), mdl.embed_b(xb_pos), 3, mdl.tau())
        return losses.total_loss(emb, weights, mk, cfg)[0]

    G.value_and_grad(objective(), params)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        orig = p.value.copy()

        def f(val, p=p):
            p.value = val
            return objective().item()

        fd = numerics.finite_diff_grad(f, orig, FD_STEP)
        p.value = orig
        worst = max(worst, numerics.relative_error(analytic, fd))
    return worst


def gradient_checks(seeds=range(10)):
    worst = {}
    for s in seeds:
        for name, err in loss_gradient_errors(s).items():
            worst[name] = max(worst.get(name, 0.0), err)
        worst["total(model)"] = max(worst.get("total(model)", 0.0), model_gradient_error(s))
    return [Check(f"gradient {name}", err, GRAD_TOL) for name, err in worst.items()]


def oracle_checks(seed=0, rows=6, cols=3):
    rng = numerics.make_rng(seed)
    t = rng.normal(size=(rows, cols))
    r = rng.normal(size=(rows, cols)) * 1.3 + 0.2
    x = rng.normal(size=cols)
    checks = []

    def close(name, a, b):
        checks.append(Check(f"oracle {name}", abs(float(a) - float(b)), ORACLE_TOL))

    close("variance", numerics.batch_variance(t), oracles.variance(t))
    for b in (0.7, 1.0):
        close(f"kde b={b}", losses.kde_density(x, t, losses.SddConfig(bandwidth_b=b)).item(),
              oracles.kde(x, t, b))
    for name, cfg in SDD_MODES:
        close(f"gamma {name}", losses.gamma_divergence(t, r, cfg).item(),
              oracles.gamma(t, r, relative=cfg.use_relative_distance, divergence=cfg.divergence))
    mk = _fixed_mk()
    beta = mk.beta_values()
    fns = [lambda a, c: oracles.gaussian(a, c, 2.0), lambda a, c: oracles.polynomial(a, c, 1.0, 2)]
    close("mkmmd", losses.mkmmd_loss(mk, t, r).item(), oracles.mkmmd(t, r, fns, beta))
    close("clip", losses.clip_contrastive_loss(t, r, 0.3).item(), oracles.clip_loss(t, r, 0.3))
    close("ssl", losses.ssl_loss(t, r, 0.3).item(), oracles.ssl_loss(t, r, 0.3))
    return checks


def invariant_checks(n_pairs=1000, seed=0):
    rng = numerics.make_rng(seed)
    checks = []
    u = rng.normal(size=(8, 4))
    for name, cfg in (("kl", losses.SddConfig()), ("mse", losses.SddConfig(divergence="mse"))):
        checks.append(Check(f"sdd(U,U)==0 [{name}]", abs(losses.sdd_loss(u, u, cfg).item()), 0.0, "<="))
    checks.append(Check("mkmmd(U,U)<=1e-12",
                        losses.mkmmd_loss(kernels.MultiKernel.default(), u, u).item(), 1e-12, "<="))
    worst_kl = math.inf
    for _ in range(n_pairs):
        b = int(rng.integers(2, 9))
        k = int(rng.integers(1, 6))
        a = rng.normal(size=(b, k)) * rng.uniform(0.1, 3)
        c = rng.normal(size=(b, k)) * rng.uniform(0.1, 3) + rng.normal()
        worst_kl = min(worst_kl, losses.sdd_loss(a, c).item())
    checks.append(Check(f"KL sdd >= -1e-10 over {n_pairs} pairs (min value)", worst_kl, -1e-10, ">="))
    v = rng.normal(size=(8, 4))
    checks.append(Check("sdd symmetry",
                        abs(losses.sdd_loss(u, v).item() - losses.sdd_loss(v, u).item()), 1e-12, "<="))
    shift = rng.normal(size=(1, 4)) * 5
    checks.append(Check("sdd translation invariance (RD)",
                        abs(losses.sdd_loss(u + shift, v + shift).item() - losses.sdd_loss(u, v).item()),
                        1e-9, "<="))
    return checks


def run_all(fault=None, grad_seeds=range(10)):
    """All checks; ``fault`` names a primitive whose backward rule is perturbed."""
    if fault:
        with G.inject_fault(fault):
            grads = gradient_checks(grad_seeds)
    else:
        grads = gradient_checks(grad_seeds)
    return grads + oracle_checks() + invariant_checks()

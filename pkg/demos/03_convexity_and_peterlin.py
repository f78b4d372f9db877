"""Why the Peterlin closure falls outside the convex framework.

The first part runs the randomized midpoint convexity test for the three
supported models; every violation is negative, so the regularized energy is
convex along the sampled segments. The second part evaluates the second
derivative of the Peterlin energy along an explicit direction and shows it
stays negative for a whole range of the relaxation parameter.

Run with ``python demos/03_convexity_and_peterlin.py``.
"""

from envar import ModelLLZ, ModelQ, ModelS, ParamsLLZ, ParamsQ, ParamsS
from envar import diagnostics as dg
from envar.grid import GridSpec
from envar.model_api import check_convexity

grid = GridSpec(n=32)
models = {
    "Q": ModelQ(grid, ParamsQ(mu=1.0, alpha=1.0, beta=0.5, delta=0.5)),
    "S": ModelS(grid, ParamsS(mu=1.0, alpha=1.0, mu_p=1.0)),
    "LLZ": ModelLLZ(grid, ParamsLLZ(mu=1.0)),
}
for name, model in models.items():
    rec = check_convexity(model, 0.0, None, trials=100, seed=0)
    print(f"{name:4s} worst scaled midpoint violation {rec.residual:+.3e}")

B, G, value, eta_ok = dg.peterlin_nonconvexity_witness(eta_max=10.0, n_eta=201)
print("Peterlin witness")
print("B =", B.tolist())
print("G =", G.tolist())
print(f"second derivative {value:.4f}; negative on the whole eta sweep: {eta_ok}")

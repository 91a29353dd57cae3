"""Parameter error of JOINT and TM as the sample size grows.

Simulates Artif1 features and posterior with scenario-2 (logistic)
labelling, which makes the product model well specified, and prints the
median parameter error over seeds for every sample size.

Example
-------
    python3 scripts/consistency_study.py --sizes 2000 8000 32000 --seeds 20
"""

import argparse
import json
import time

import numpy as np

from pujoint.estimators import fit_joint, fit_tm
from pujoint.glm import LinearParams
from pujoint.synth import ArtifSpec, ScenarioSpec, apply_labelling, gen_artif


def true_params(p: int, g: float, beta: LinearParams | None = None) -> tuple[LinearParams, LinearParams]:
    beta = beta if beta is not None else ArtifSpec(n=1, p=p).beta_star
    gamma = LinearParams(0.0, np.full(p, g * p**-0.5))
    return beta, gamma


def resolve_interchange(a: LinearParams, b: LinearParams | None):
    """Order a fitted pair so the larger l1 norm plays the posterior."""
    if b is not None and b.l1_norm() > a.l1_norm():
        return b, a
    return a, b


def sample_errors(n: int, seed: int, p: int, g: float, beta: LinearParams | None = None) -> dict[str, float]:
    beta, gamma = true_params(p, g, beta)
    ds = gen_artif(ArtifSpec(n=n, p=p, beta_star=beta), np.random.SeedSequence([seed, n, 0]))
    pu = apply_labelling(ds, ScenarioSpec.scenario(2, g=g), np.random.SeedSequence([seed, n, 1]))
    truth = np.concatenate([beta.to_vector(), gamma.to_vector()])
    joint = fit_joint(pu)
    jb, jg = resolve_interchange(joint.posterior, joint.propensity)
    tm = fit_tm(pu)
    return {
        "joint": float(np.linalg.norm(np.concatenate([jb.to_vector(), jg.to_vector()]) - truth)),
        "tm": float(np.linalg.norm(tm.posterior.to_vector() - beta.to_vector())),
    }


def study(sizes, seeds: int, p: int, g: float, beta: LinearParams | None = None) -> dict[int, dict[str, float]]:
    out = {}
    for n in sizes:
        errs = [sample_errors(n, s, p, g, beta) for s in range(seeds)]
        out[n] = {m: float(np.median([e[m] for e in errs])) for m in ("joint", "tm")}
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2000, 8000, 32000])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--g", type=float, default=0.5)
    ap.add_argument("--beta", type=float, nargs="+", default=None,
                    help="intercept then p slopes; default is the Artif1 direction")
    args = ap.parse_args()
    beta = None
    if args.beta is not None:
        beta = LinearParams(args.beta[0], np.array(args.beta[1:]))
        args.p = beta.dim
    t0 = time.perf_counter()
    res = study(args.sizes, args.seeds, args.p, args.g, beta)
    print(json.dumps(res, indent=2))
    print(f"elapsed {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

"""Average Top-1..3 accuracy against the sensing budget for every policy.

    python scripts/alpha_sweep.py --out runs/sweep --dqn.epochs 50 --alphas 0.1,0.3,0.5,0.7,1.0
"""

from common import parse, prepare

from sensebeam import experiment as ex


def extra(p):
    p.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")
    p.add_argument("--policies", default=",".join(ex.POLICIES))


if __name__ == "__main__":
    args, cfg = parse(__doc__.splitlines()[0], extra)
    prepare(cfg)
    alphas = [float(a) for a in args.alphas.split(",")]
    reports = ex.cmd_sweep_alpha(cfg, alphas, args.policies.split(","))
    print(f"{'alpha':>6} " + " ".join(f"{p:>11}" for p in args.policies.split(",")))
    for a in alphas:
        row = {r.policy: r.avg_accuracy for r in reports if r.alpha == a}
        print(f"{a:6.2f} " + " ".join(f"{row[p]:11.4f}" for p in args.policies.split(",")))

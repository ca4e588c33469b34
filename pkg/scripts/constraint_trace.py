"""Running sensing frequency and virtual queue of the trained agent per (V, alpha).

    python scripts/constraint_trace.py --out runs/trace --dqn.epochs 50
"""

from common import parse, prepare

from sensebeam import experiment as ex


def extra(p):
    p.add_argument("--alphas", default="0.3,0.5,0.8")
    p.add_argument("--V-list", dest="Vs", default="100")


if __name__ == "__main__":
    args, cfg = parse(__doc__.splitlines()[0], extra)
    prepare(cfg)
    alphas = [float(a) for a in args.alphas.split(",")]
    Vs = [float(v) for v in args.Vs.split(",")]
    for s in ex.cmd_queue_trace(cfg, Vs, alphas):
        ok = s["final_sense_rate"] <= s["alpha"] + 0.02
        print(f"V={s['V']:g} alpha={s['alpha']:g}  rate {s['final_sense_rate']:.4f}  "
              f"max Q {s['max_Q']:.1f}  within budget: {ok}")

"""Top-1/2/3 accuracy of every policy at one budget (default env.alpha).

    python scripts/topk_table.py --out runs/topk --env.alpha 0.5 --dqn.epochs 50
"""

from common import parse, prepare

from sensebeam import experiment as ex

if __name__ == "__main__":
    _, cfg = parse(__doc__.splitlines()[0])
    prepare(cfg)
    print(f"{'policy':11s} {'top1':>7} {'top2':>7} {'top3':>7} {'avg':>7} {'sense':>7}")
    for r in ex.cmd_evaluate(cfg):
        print(f"{r.policy:11s} {r.top1:7.4f} {r.top2:7.4f} {r.top3:7.4f} {r.avg_accuracy:7.4f} {r.sense_rate:7.4f}")

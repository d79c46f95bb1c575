"""Outage curves and diversity slopes for every relay-cooperation preset."""
from twowayrelay.harness import preset_names

from _common import parser, run_presets

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--trials", type=int, default=1_000_000, help="channel draws per SNR point")
    p.add_argument("--only", choices=["fig6", "fig7"], help="restrict to one family")
    args = p.parse_args()
    names = [n for n in preset_names() if n.startswith(args.only or ("fig6", "fig7"))]
    manifests = run_presets(names, args.out, args.seed, trials=args.trials)
    print(f"{'preset':28s} {'d_hat':>7s} {'stderr':>7s} {'theory':>7s}")
    for name, m in manifests.items():
        s = m.summary
        fmt = lambda v: "   n/a" if v is None else f"{v:7.3f}"  # noqa: E731
        print(f"{name:28s} {fmt(s.get('d_hat'))} {fmt(s.get('stderr'))} {fmt(s.get('d_theory'))}")

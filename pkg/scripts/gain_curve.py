"""Fading-averaged coding gain against the traffic ratio for one midpoint relay."""
from _common import parser, run_presets

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--draws", type=int, default=1000)
    args = p.parse_args()
    run_presets(["fig5"], args.out, args.seed, trials=args.draws)

"""Queue trajectories of both opportunistic schedulers inside their stability regions."""
from _common import parser, run_presets

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--events", type=int, default=1_000_000)
    args = p.parse_args()
    run_presets(["schedule-omlnc", "schedule-oplnc"], args.out, args.seed, max_events=args.events)

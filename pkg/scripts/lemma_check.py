"""Empirical checks of the exponential-sum and relay-selection tail bounds."""
from _common import parser, run_presets

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    run_presets(["lemma-check"], args.out, args.seed)

"""Rate regions for the symmetric and asymmetric example channels."""
from _common import parser, run_presets

if __name__ == "__main__":
    args = parser(__doc__).parse_args()
    run_presets(["fig3a", "fig3b"], args.out)

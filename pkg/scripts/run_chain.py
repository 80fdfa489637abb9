"""
Command-line wrapper around constrained_chain.cli_runner.

    python scripts/run_chain.py ensemble --n 14 --mu-over-n 0.05:0.5:0.025 --realisations 200

See `python scripts/run_chain.py --help` for every subcommand.
"""
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
from constrained_chain.cli_runner import main


if __name__ == "__main__":
    main()

"""Allow ``python -m histories_sim``."""
import sys

from histories_sim.main import main

if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
###############################################################################
### Imports
###############################################################################
import sys

from twistlab.cli import main

###############################################################################
### Entry Point
###############################################################################
if __name__ == "__main__":
    sys.exit(main())

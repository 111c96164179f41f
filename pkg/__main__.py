"""
shefk - Main entry point for running from the project directory
"""

import sys
from shefk.cli import main

if __name__ == '__main__':
    sys.exit(main())

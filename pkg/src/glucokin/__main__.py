import sys

from glucokin.cli import main

sys.exit(main())

import sys

from gppp.cli import main

sys.exit(main())

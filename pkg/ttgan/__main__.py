import sys

from ttgan.cli import main

sys.exit(main())

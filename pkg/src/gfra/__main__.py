import sys

from gfra.cli import main

sys.exit(main())

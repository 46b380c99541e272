import sys

from crowdmap.cli import main

sys.exit(main())

import sys

from olinear.cli import main

sys.exit(main())

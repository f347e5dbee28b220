import sys

from qpdisp.cli import main

sys.exit(main())

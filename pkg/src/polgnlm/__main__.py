import sys

from polgnlm.cli import main

sys.exit(main())

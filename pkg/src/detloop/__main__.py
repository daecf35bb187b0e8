import sys

from detloop.cli import main

sys.exit(main())

import sys

from predrive.harness.cli import main

sys.exit(main())

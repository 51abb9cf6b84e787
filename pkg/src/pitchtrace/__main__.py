import sys

from pitchtrace.cli import main

sys.exit(main())

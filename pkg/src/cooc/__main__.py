import sys

from cooc.cli import main

sys.exit(main())

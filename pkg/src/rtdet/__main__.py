import sys

from rtdet.cli import main

sys.exit(main())

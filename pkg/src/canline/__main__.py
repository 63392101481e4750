import sys

from canline.cli import main

sys.exit(main())

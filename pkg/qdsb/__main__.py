import sys

from qdsb.main import main

sys.exit(main())

"""python -m graphot"""

import sys

from graphot.main import main

if __name__ == "__main__":
    sys.exit(main())

import sys

from arabocr.cli import main

sys.exit(main())

import sys

from betaspec.main import main

sys.exit(main())

import sys

from nsgalerkin.cli import main

sys.exit(main())

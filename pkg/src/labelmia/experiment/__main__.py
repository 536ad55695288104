import sys

from labelmia.experiment.cli import main

sys.exit(main())

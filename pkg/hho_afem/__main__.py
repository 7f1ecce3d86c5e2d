import sys

from hho_afem.cli import main

sys.exit(main())

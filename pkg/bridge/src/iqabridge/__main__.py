import sys

from iqabridge.server import main

sys.exit(main())

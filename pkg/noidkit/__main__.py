import sys

from noidkit.main import main

sys.exit(main())

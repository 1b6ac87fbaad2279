import sys

from condthin.cli import main

sys.exit(main())

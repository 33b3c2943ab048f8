import sys
from adapted_ot.cli import main
sys.exit(main())

from ark.cli import main
import sys

sys.exit(main())

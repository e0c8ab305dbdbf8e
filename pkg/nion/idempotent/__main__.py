# standard libraries
import sys

# local libraries
from nion.idempotent import Command

sys.exit(Command.main())

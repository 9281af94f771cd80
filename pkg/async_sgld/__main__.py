# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

import sys

from async_sgld.cli import main

sys.exit(main())

#!/usr/bin/env python3
import sys
import os
import logging
import traceback

# Add the msddp package to the Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "src")))

from msddp.main import main, setup_logging

setup_logging()
logger = logging.getLogger(__name__)

try:
    sys.exit(main())
except Exception as e:
    logger.error(f"Fatal error: {str(e)}")
    traceback.print_exc()
    sys.exit(1)

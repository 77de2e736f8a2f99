#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Launcher wrapper for `vortrace.app`.

Keeps `python vortrace.py <subcommand>` working by delegating to
`vortrace.app.main()`.
"""

import sys

from vortrace.app import main

if __name__ == "__main__":
    sys.exit(main())

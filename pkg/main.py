#!/usr/bin/env python3
"""
qsp-lab: Main entry point
"""
from src.qsp_lab.cli import app

if __name__ == "__main__":
    app()

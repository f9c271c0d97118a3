# Tests for qsp-lab

"""Recall of both query criteria at several compression rates, as CSV on stdout.

``python scripts/recall_sweep.py raw.csv [rate ...]``; rates default to 10 50 200.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from trajectory_engine.cli import main  # noqa: E402

if len(sys.argv) < 2:
    print(__doc__)
    sys.exit(2)
rates = sys.argv[2:] or ['10', '50', '200']
sys.exit(main(['sweep', '--kind', 'rate', '--raw', sys.argv[1], '--values', ','.join(rates), '--format', 'csv']))

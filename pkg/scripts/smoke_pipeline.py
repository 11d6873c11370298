"""Generate, compress, index, query and evaluate in a scratch directory.

Run from the repository root: ``python scripts/smoke_pipeline.py [workdir]``.
"""
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from trajectory_engine.cli import main  # noqa: E402

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix='roce-'))
work.mkdir(parents=True, exist_ok=True)
raw, comp, tree = work / 'raw.csv', work / 'comp.jsonl', work / 'tree.json'

steps = [
    ['generate', '--out', raw, '--count', 200, '--points-min', 200, '--points-max', 600, '--seed', 1],
    ['compress', '--input', raw, '--out', comp, '--epsilon', 10, '--verify', '--threads', 4],
    ['index', '--input', comp, '--out', tree, '--xi', 32],
    ['query', '--index', tree, '--dataset', comp, '--region', 1000, 1000, 1300, 1300],
    ['eval', '--raw', raw, '--dataset', comp, '--index', tree, '--mode', 'traditional', '--queries', 200],
    ['eval', '--raw', raw, '--dataset', comp, '--index', tree, '--queries', 200, '--threads', 4],
]
for argv in steps:
    code = main([str(a) for a in argv])
    print('STATUS', argv[0], code)
    if code:
        sys.exit(code)
print('WORKDIR', work)

"""
The command-line tool, driven from Python
=========================================

Equivalent shell session::

    e2e-absa train --data synth --head crf --seeds 1 --max-steps 1000 --selection-start 500 --output-dir run
    e2e-absa eval run/checkpoint.npz synth/dev.conll
    echo "great pizza but the staff is slow ." | e2e-absa predict run/checkpoint.npz
    e2e-absa stats synth/train.conll
"""

import io
import sys
import tempfile
from pathlib import Path

from e2e_absa.cli import main
from e2e_absa.synthetic import write_splits

work = Path(tempfile.mkdtemp())
write_splits(work / "synth", 200, 100, 100)

main(["train", "--data", str(work / "synth"), "--head", "crf", "--seeds", "1", "--batch-size", "8",
      "--max-steps", "1000", "--selection-start", "500", "--output-dir", str(work / "run")])
print(sorted(p.name for p in (work / "run").iterdir()))

main(["eval", str(work / "run" / "checkpoint.npz"), str(work / "synth" / "dev.conll")])

sys.stdin = io.StringIO("great pizza but the staff is slow .\n")
main(["predict", str(work / "run" / "checkpoint.npz")])

main(["stats", str(work / "synth" / "train.conll")])

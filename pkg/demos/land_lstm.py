"""
Training Land-LSTM on synthetic talking heads
=============================================

A few hundred clips are enough to see the landmark model separate speaking
from silent faces. The acceptance suite runs the full 2,000-clip version.
"""

import numpy as np

from vvad.evaluation import ModelPredictor, Sample, holdout_eval
from vvad.models import LAND_LSTM, build_model, prepare_landmarks
from vvad.synthetic import SynthConfig, generate
from vvad.training import TrainConfig, train

clips = generate(SynthConfig(n_clips=400, seed=0))
x = [prepare_landmarks(c.landmarks) for c in clips]
y = np.array([c.label for c in clips])

model = build_model(LAND_LSTM, seed=0)
result = train(model, x[:300], y[:300], TrainConfig(max_epochs=10),
               on_epoch=lambda h: print(f"epoch {h['epoch']:2d} val loss {h['val_loss']:.3f} acc {h['val_acc']:.2f}"))
print("best epoch:", result.best_epoch)

test = [Sample(c.clip_id, c.label, "manual", xi) for c, xi in zip(clips[300:], x[300:])]
report = holdout_eval(ModelPredictor(result.model), test)
print(f"test TPR {report.tpr:.3f}  TNR {report.tnr:.3f}  ACC {report.acc:.3f}")

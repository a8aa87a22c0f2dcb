"""
OF-ConvNet with voting
======================

The flow network classifies single frames and a majority vote turns frame
decisions into a clip label. We train the small tiny-cnn backbone on flow
renders of synthetic faces.
"""

import numpy as np

from vvad.evaluation import ModelPredictor, Sample, holdout_eval
from vvad.models import OF_CONVNET, OfConvNetConfig, build_model, predict
from vvad.synthetic import SynthConfig, flow_clip, generate
from vvad.training import TrainConfig, train

clips = generate(SynthConfig(n_clips=160, clip_len=16, noise_sigma=0.0, head_motion="none", seed=1))
flows = [flow_clip(c.geometry, 48) for c in clips]
y = np.array([c.label for c in clips])

model = build_model(OF_CONVNET, OfConvNetConfig(), seed=0)
result = train(model, flows[:120], y[:120], TrainConfig(max_epochs=4))
print("per-frame validation accuracy:", [round(h["val_acc"], 3) for h in result.history])

pred = predict(result.model, flows[120:121], [clips[120].clip_id])[0]
print("one clip:", pred.to_dict()["label"], "from frames", "".join("S" if p else "." for p in pred.per_frame))

test = [Sample(c.clip_id, c.label, "manual", f) for c, f in zip(clips[120:], flows[120:])]
print("clip accuracy after voting:", holdout_eval(ModelPredictor(result.model), test).acc)

"""Scratch: desk-scale transfer experiment tuning. Not part of the package."""
import time

import numpy as np

from emoalign.corpus import Dataset, SyntheticSpec, generate_synthetic_corpus
from emoalign.evaluation import evaluate, random_guess_macro_f1
from emoalign.inference import calibrate_on_samples
from emoalign.model import EmotionModel
from emoalign.training import TrainConfig, train

t0 = time.time()
spec = SyntheticSpec(n_emotions=8, synonyms_per_emotion=4, n_train=2000, n_val=400,
                     n_test=400, seed=7)
dataset, annotations, seen_space, unseen_space = generate_synthetic_corpus(spec)
print("corpus built", time.time() - t0)

config = TrainConfig(
    batch_size=32, epochs=8, learning_rate=1e-3, seed=7,
    emotion_dim=32, temperature=0.1, n_queries=8,
    hidden_size=64, n_layers=2, n_heads=4, max_len=64,
    checkpoint_dir="/tmp/scratch_ckpt",
)
report = train(dataset, annotations, config)
print("trained", time.time() - t0)
print("train losses:", [round(x, 4) for x in report.train_losses])
print("val micro-f1:", [round(x, 4) for x in report.val_metrics])

model = EmotionModel.load(report.checkpoint_path)
val = dataset.by_split("val")
test = Dataset(name="test", kind="multi", samples=dataset.by_split("test"))

for space in (seen_space, unseen_space):
    thresholds = calibrate_on_samples(model, val, space)
    result = evaluate(test, model, space, thresholds=thresholds)
    baseline = random_guess_macro_f1([s.gold_categorical for s in test.samples], space, seed=0)
    print(f"{space.name}: macro={result.macro_f1:.4f} micro={result.micro_f1:.4f} "
          f"baseline={baseline:.4f} thresholds={sorted(set(thresholds.thresholds.values()))}")
print("total", time.time() - t0, "s")

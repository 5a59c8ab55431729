"""
From a raw recording to model inputs
====================================

A synthetic 256 Hz recording goes through both preprocessing styles: the
labram style (200 Hz, one-second patches with spatial and temporal indices)
and the neurogpt style (250 Hz, fixed 22-channel montage filled by nearest
electrodes within a distance threshold).
"""

import numpy as np

from neurotune.signalprep import Recording, electrode_position, pipeline

rng = np.random.default_rng(0)
labels = ("Fz", "C3", "Cz", "C4", "Pz", "Oz")
fs = 256.0
t = np.arange(int(4 * fs)) / fs
data = rng.standard_normal((len(labels), t.size)) + 2 * np.sin(2 * np.pi * 50 * t)  # line noise everywhere
data[labels.index("Cz")] += 3 * np.sin(2 * np.pi * 10 * t)  # alpha at Cz only
rec = Recording(data, fs, labels, np.stack([electrode_position(l) for l in labels]), "demo")

lab = pipeline(rec, "labram")
print("labram stages:", " -> ".join(lab.stages))
p = lab.patched
print(f"patches {p.patches.shape}, valid tokens {p.attention_length}")
print("first tokens (electrode index, second):",
      [(int(s), int(t)) for s, t in zip(p.spatial_index[:6], p.temporal_index[:6])])

gpt = pipeline(rec, "neurogpt")
print("\nneurogpt stages:", " -> ".join(gpt.stages))
print(f"output: {gpt.recording.n_channels} channels at {gpt.recording.fs:g} Hz")
for target, entry in gpt.mapping.items():
    if entry["source"] is not None:
        print(f"  {target:<4} <- {entry['source']:<4} {entry['distance_mm']:5.1f} mm")
print(f"  {sum(e['source'] is None for e in gpt.mapping.values())} channels have no electrode within 30 mm (zeros)")

# line noise is gone, alpha survives (amplitudes after re-referencing)
spec = np.abs(np.fft.rfft(gpt.recording.data[gpt.recording.channel_names.index("Cz")]))
freqs = np.fft.rfftfreq(gpt.recording.n_samples, 1 / gpt.recording.fs)
for f in (10, 50):
    print(f"  Cz amplitude at {f} Hz: {2 * spec[np.argmin(np.abs(freqs - f))] / gpt.recording.n_samples:.3f}")

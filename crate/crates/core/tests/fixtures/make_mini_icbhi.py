"""Regenerates the six-recording fixture in mini_icbhi/ (deterministic)."""

import pathlib
import wave

import numpy as np

OUT = pathlib.Path(__file__).with_name("mini_icbhi")

# stem, rate, bits, channels, seconds, subset, [(onset, offset, crackle, wheeze)]
RECORDINGS = [
    ("101_1b1_Al_sc_Meditron", 4000, 16, 1, 8.0, "train",
     [(0.5, 2.5, 1, 0), (2.5, 4.75, 0, 1), (4.75, 7.0, 1, 1), (7.0, 8.0, 0, 0)]),
    ("102_1b1_Ar_sc_Meditron", 44100, 16, 1, 6.0, "train",
     [(0.0, 1.5, 0, 0), (1.5, 3.25, 1, 0), (3.25, 6.02, 0, 1)]),
    ("103_2b2_Ar_mc_LittC2SE", 4000, 24, 1, 5.0, "train",
     [(0.25, 2.0, 1, 1), (2.0, 4.5, 0, 0)]),
    ("104_1b1_Al_sc_Litt3200", 4000, 16, 2, 7.0, "test",
     [(0.1, 2.1, 1, 0), (2.1, 4.35, 0, 0), (4.35, 6.9, 0, 1)]),
    ("105_1b1_Tc_sc_Meditron", 22050, 24, 2, 5.0, "test",
     [(0.2, 2.6, 1, 1), (2.6, 5.0, 0, 0)]),
    ("106_2b1_Pl_mc_AKGC417L", 10000, 16, 1, 4.0, "test",
     [(0.3, 1.8, 0, 0), (1.8, 3.9, 1, 0)]),
]


def synth(rate, seconds, cycles, rng):
    t = np.arange(int(round(rate * seconds))) / rate
    x = 0.05 * rng.standard_normal(t.size) + 0.2 * np.sin(2 * np.pi * 150 * t)
    for onset, offset, crackle, wheeze in cycles:
        span = (t >= onset) & (t < offset)
        if wheeze:
            x[span] += 0.3 * np.sin(2 * np.pi * 400 * t[span])
        if crackle:
            for click in rng.uniform(onset, min(offset, seconds), 12):
                i = int(click * rate)
                x[i:i + 8] += 0.5 * np.hanning(8)[: len(x[i:i + 8])]
    return np.clip(x, -0.99, 0.99)


def write_wav(path, data, rate, bits):
    scale = 2 ** (bits - 1) - 1
    ints = np.round(data * scale).astype(np.int32)
    if bits == 16:
        raw = ints.astype("<i2").tobytes()
    else:
        b = ints.astype("<i4").view(np.uint8).reshape(-1, 4)[:, :3]
        raw = b.tobytes()
    with wave.open(str(path), "wb") as w:
        w.setnchannels(data.shape[1])
        w.setsampwidth(bits // 8)
        w.setframerate(rate)
        w.writeframes(raw)


def main():
    OUT.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240517)
    split = []
    for stem, rate, bits, channels, seconds, subset, cycles in RECORDINGS:
        mono = synth(rate, seconds, cycles, rng)
        data = np.stack([mono * (1.0 - 0.2 * c) for c in range(channels)], axis=1)
        write_wav(OUT / f"{stem}.wav", data, rate, bits)
        lines = [f"{a:.3f}\t{b:.3f}\t{c}\t{w}" for a, b, c, w in cycles]
        (OUT / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        split.append(f"{stem}\t{subset}")
    (OUT.parent / "mini_icbhi_split.txt").write_text("\n".join(split) + "\n")


if __name__ == "__main__":
    main()

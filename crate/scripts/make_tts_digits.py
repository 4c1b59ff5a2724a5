#!/usr/bin/env python3
"""Synthesize a small multi-speaker spoken-digit corpus with espeak-ng.

Uses the shared library shipped in the `espeakng-loader` wheel
(`pip install espeakng-loader`), so no system TTS install is needed.
Writes 8 kHz 16-bit mono WAV files plus a `manifest.csv`
(path,label,speaker) understood by `oscnet`.
"""
import argparse
import csv
import ctypes
import os
import random

import numpy as np
from scipy.signal import resample_poly

import espeakng_loader

WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
VOICES = ["m1", "m2", "m3", "m4", "m7", "f1", "f2", "f3", "f4", "f5", "klatt", "klatt3"]

AUDIO_OUTPUT_SYNCHRONOUS = 2
ESPEAK_RATE, ESPEAK_PITCH, ESPEAK_RANGE = 1, 3, 4
SYNTH_CB = ctypes.CFUNCTYPE(ctypes.c_int, ctypes.POINTER(ctypes.c_short), ctypes.c_int, ctypes.c_void_p)


class Espeak:
    def __init__(self):
        self.lib = ctypes.cdll.LoadLibrary(espeakng_loader.get_library_path())
        data = espeakng_loader.get_data_path().encode()
        self.lib.espeak_ng_InitializePath(ctypes.c_char_p(data))
        self.rate = self.lib.espeak_Initialize(AUDIO_OUTPUT_SYNCHRONOUS, 0, ctypes.c_char_p(data), 0)
        if self.rate <= 0:
            raise RuntimeError("espeak-ng initialization failed")
        self.buf = []
        self.cb = SYNTH_CB(self._collect)
        self.lib.espeak_SetSynthCallback(self.cb)

    def _collect(self, wav, n, _events):
        if n > 0:
            self.buf.append(np.ctypeslib.as_array(wav, shape=(n,)).copy())
        return 0

    def say(self, text, voice, rate, pitch, pitch_range):
        if self.lib.espeak_SetVoiceByName(ctypes.c_char_p(f"en+{voice}".encode())) != 0:
            raise RuntimeError(f"unknown voice {voice}")
        self.lib.espeak_SetParameter(ESPEAK_RATE, rate, 0)
        self.lib.espeak_SetParameter(ESPEAK_PITCH, pitch, 0)
        self.lib.espeak_SetParameter(ESPEAK_RANGE, pitch_range, 0)
        self.buf = []
        raw = text.encode()
        self.lib.espeak_Synth(ctypes.c_char_p(raw), len(raw) + 1, 0, 0, 0, 0, None, None)
        self.lib.espeak_Synchronize()
        return np.concatenate(self.buf).astype(np.float64) if self.buf else np.zeros(0)


def trim(x, rel=0.02):
    idx = np.nonzero(np.abs(x) > rel * np.abs(x).max())[0]
    return x[idx[0]: idx[-1] + 1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", help="output directory")
    ap.add_argument("--takes", type=int, default=10, help="utterances per voice and digit")
    ap.add_argument("--seed", type=int, default=2016)
    ap.add_argument("--rate", type=int, default=8000)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    tts = Espeak()
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for voice in VOICES:
        for digit, word in enumerate(WORDS):
            for take in range(args.takes):
                audio = tts.say(word, voice, rng.randint(150, 190), rng.randint(25, 75), rng.randint(20, 80))
                audio = resample_poly(trim(audio), args.rate, tts.rate)
                noise = np.random.default_rng(rng.randrange(2**32)).normal(0.0, 0.003 * np.abs(audio).max(), audio.shape)
                pcm = np.clip(audio + noise, -32768, 32767).astype("<i2")
                name = f"{digit}_{voice}_{take}.wav"
                write_wav(os.path.join(args.out, name), pcm, args.rate)
                rows.append((name, digit, voice))
    with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["path", "label", "speaker"])
        w.writerows(rows)
    print(f"wrote {len(rows)} utterances to {args.out}")


def write_wav(path, pcm, rate):
    import wave
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())


if __name__ == "__main__":
    main()

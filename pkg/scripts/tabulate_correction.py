"""Regenerate src/switchscope/_correction_table.py by Monte Carlo.

Usage: python3 scripts/tabulate_correction.py
"""

from pathlib import Path

from switchscope.searchlite import simulate_min_statistic

ENSEMBLES = (1, 2, 4, 8, 16, 32, 64)
WINDOWS = tuple(2 ** i for i in range(1, 15))
FRAME_BUDGET = 2 ** 18          # averaged frames * ensemble per trial
TRIALS = 24

OUT = Path(__file__).resolve().parents[1] / "src" / "switchscope" / "_correction_table.py"


def main():
    lines = ['"""Noise-mean / expected-minimum ratios, generated by scripts/tabulate_correction.py.',
             "",
             "CORRECTION_TABLE[ensemble][window]; nfft-independent for the half-overlap Hann STFT.",
             '"""', "", "CORRECTION_TABLE = {"]
    for e in ENSEMBLES:
        ws = [w for w in WINDOWS if e * w <= FRAME_BUDGET]
        means = simulate_min_statistic(e, ws, n_trials=TRIALS, seed=e)
        lines.append(f"    {e}: {{")
        for w in ws:
            lines.append(f"        {w}: {1.0 / means[w]:.5f},")
        lines.append("    },")
        print(e, {w: round(1 / means[w], 3) for w in ws}, flush=True)
    lines.append("}")
    OUT.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()

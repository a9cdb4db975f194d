import numpy as np


def cnoise(rng, n, var=1.0, dtype=np.complex128):
    """Circular complex Gaussian noise with per-sample variance ``var``."""
    x = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(var / 2)
    return x.astype(dtype)


def box_overlaps(box, packet, hop, origin=0):
    """True when a detection box shares time and frequency with a ground-truth packet."""
    a = origin + box.frame_start * hop
    b = origin + (box.frame_end + 1) * hop
    lo = box.center_freq_hz - box.bandwidth_hz / 2
    hi = box.center_freq_hz + box.bandwidth_hz / 2
    return a < packet.stop_sample and packet.start_sample < b and lo < packet.freq_hi_hz and packet.freq_lo_hz < hi


def match_packets(annotations, packets, hop, origin=0):
    """Largest overlapping annotation for each packet (None when undetected)."""
    out = []
    for p in packets:
        best = None
        for a in annotations:
            if box_overlaps(a.box, p, hop, origin):
                area = (a.box.frame_end - a.box.frame_start) * (a.box.bin_end - a.box.bin_start)
                if best is None or area > best[0]:
                    best = (area, a)
        out.append(None if best is None else best[1])
    return out


ACCEPTANCE_LINES = []


def report(number, title, passed, detail):
    """Print and keep one result line per acceptance criterion."""
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed

"""Noise-mean / expected-minimum ratios, generated by scripts/tabulate_correction.py.

CORRECTION_TABLE[ensemble][window]; nfft-independent for the half-overlap Hann STFT.
"""

CORRECTION_TABLE = {
    1: {
        2: 2.00023,
        4: 4.18717,
        8: 8.28452,
        16: 16.15191,
        32: 31.82633,
        64: 61.45883,
        128: 123.08547,
        256: 244.59056,
        512: 494.50714,
        1024: 1062.09977,
        2048: 2119.79746,
        4096: 4118.42674,
        8192: 8139.12431,
        16384: 16489.50237,
    },
    2: {
        2: 1.62796,
        4: 2.46431,
        8: 3.71253,
        16: 5.55111,
        32: 8.14410,
        64: 11.81039,
        128: 17.61853,
        256: 25.33323,
        512: 36.81068,
        1024: 51.86916,
        2048: 72.72930,
        4096: 105.67334,
        8192: 147.78559,
        16384: 207.52601,
    },
    4: {
        2: 1.35553,
        4: 1.83341,
        8: 2.38273,
        16: 3.09123,
        32: 3.79768,
        64: 4.76427,
        128: 5.89415,
        256: 7.18948,
        512: 8.68326,
        1024: 10.49194,
        2048: 12.71011,
        4096: 15.38237,
        8192: 18.38484,
        16384: 22.18611,
    },
    8: {
        2: 1.23964,
        4: 1.50547,
        8: 1.79159,
        16: 2.10580,
        32: 2.44282,
        64: 2.76586,
        128: 3.12940,
        256: 3.52911,
        512: 3.94663,
        1024: 4.43812,
        2048: 4.95482,
        4096: 5.49660,
        8192: 6.09181,
        16384: 6.73490,
    },
    16: {
        2: 1.16139,
        4: 1.32841,
        8: 1.48677,
        16: 1.64799,
        32: 1.80449,
        64: 1.96415,
        128: 2.13843,
        256: 2.31212,
        512: 2.48240,
        1024: 2.65743,
        2048: 2.84732,
        4096: 3.05162,
        8192: 3.24233,
        16384: 3.44429,
    },
    32: {
        2: 1.10547,
        4: 1.20561,
        8: 1.31034,
        16: 1.40471,
        32: 1.49936,
        64: 1.58517,
        128: 1.67005,
        256: 1.76111,
        512: 1.84630,
        1024: 1.93044,
        2048: 2.01414,
        4096: 2.10060,
        8192: 2.19067,
    },
    64: {
        2: 1.07296,
        4: 1.14566,
        8: 1.20501,
        16: 1.26456,
        32: 1.32031,
        64: 1.37653,
        128: 1.42798,
        256: 1.47668,
        512: 1.52463,
        1024: 1.57169,
        2048: 1.61552,
        4096: 1.65987,
    },
}

"""Per-trial seeds: SplitMix64 applied to (base seed, cell index, trial index).

Each step adds the golden-ratio increment 0x9E3779B97F4A7C15 and mixes with
the multiply-xorshift finalizer (multipliers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, shifts 30, 27, 31), all modulo 2**64.  Python integers
make the result identical on every platform.
"""

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


def splitmix64(x):
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK64
    return z ^ (z >> 31)


def trial_seed(base_seed, cell, trial):
    z = splitmix64(base_seed & MASK64)
    z = splitmix64(z ^ cell)
    return splitmix64(z ^ trial)

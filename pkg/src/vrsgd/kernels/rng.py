"""xoshiro256** with splitmix64 seeding, mirroring the C implementation
bit for bit so pre-drawn serial index sequences match the compiled workers'
on-the-fly draws."""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(state):
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """Deterministic 64-bit stream; ``stream`` decorrelates workers."""

    def __init__(self, seed, stream=0):
        st = (int(seed) + (int(stream) + 1) * _GOLDEN) & _MASK
        s = []
        for _ in range(4):
            st, z = _splitmix64(st)
            s.append(z)
        self.s = s

    @classmethod
    def from_state(cls, arr):
        obj = cls.__new__(cls)
        obj.s = [int(v) for v in arr]
        return obj

    def state_array(self):
        return np.array(self.s, dtype=np.uint64)

    def store_state(self, arr):
        for i in range(4):
            arr[i] = self.s[i]

    def next_u64(self):
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_index(self, n):
        return self.next_u64() % n

    def next_double(self):
        # 53-bit mantissa in [0, 1)
        return (self.next_u64() >> 11) * (2.0 ** -53)

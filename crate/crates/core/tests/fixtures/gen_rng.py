"""Independent reference for the crate's random streams.

SplitMix64 seed mixing, PCG32 key expansion (as in rand_core's
seed_from_u64) and the ChaCha block function with 8 rounds, written from
their published definitions. Regenerate with:

    python3 gen_rng.py > rng_streams.txt
"""

M64 = (1 << 64) - 1
M32 = (1 << 32) - 1


def splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def mix_seed(seed, path):
    acc = splitmix64(seed)
    for t in path:
        acc = splitmix64((acc + splitmix64(t ^ 0xD1B54A32D192ED03)) & M64)
    return acc


def pcg32_key(seed):
    mul, inc = 6364136223846793005, 11634580027462260723
    words = []
    state = seed
    for _ in range(8):
        state = (state * mul + inc) & M64
        xorshifted = (((state >> 18) ^ state) >> 27) & M32
        rot = state >> 59
        words.append(((xorshifted >> rot) | (xorshifted << ((32 - rot) & 31))) & M32)
    return words


def rotl(x, n):
    return ((x << n) | (x >> (32 - n))) & M32


def quarter(s, a, b, c, d):
    s[a] = (s[a] + s[b]) & M32; s[d] = rotl(s[d] ^ s[a], 16)
    s[c] = (s[c] + s[d]) & M32; s[b] = rotl(s[b] ^ s[c], 12)
    s[a] = (s[a] + s[b]) & M32; s[d] = rotl(s[d] ^ s[a], 8)
    s[c] = (s[c] + s[d]) & M32; s[b] = rotl(s[b] ^ s[c], 7)


def chacha8_block(key, counter):
    init = [0x61707865, 0x3320646E, 0x79622D32, 0x6B206574] + key + [
        counter & M32, counter >> 32, 0, 0]
    s = list(init)
    for _ in range(4):
        quarter(s, 0, 4, 8, 12); quarter(s, 1, 5, 9, 13)
        quarter(s, 2, 6, 10, 14); quarter(s, 3, 7, 11, 15)
        quarter(s, 0, 5, 10, 15); quarter(s, 1, 6, 11, 12)
        quarter(s, 2, 7, 8, 13); quarter(s, 3, 4, 9, 14)
    return [(a + b) & M32 for a, b in zip(s, init)]


def u64_stream(seed, n):
    key = pcg32_key(seed)
    words, counter = [], 0
    while len(words) < 2 * n:
        words += chacha8_block(key, counter)
        counter += 1
    return [words[2 * i] | (words[2 * i + 1] << 32) for i in range(n)]


def below(stream, n):
    """Lemire multiply-shift with rejection, consuming from an iterator."""
    m = next(stream) * n
    if (m & M64) < n:
        threshold = ((1 << 64) - n) % n
        while (m & M64) < threshold:
            m = next(stream) * n
    return m >> 64


if __name__ == "__main__":
    print("# mix_seed seed path... value")
    for seed, path in [(0, []), (1, [1]), (42, [2, 0]), (7, [4, 123456]), (M64, [5, 6, 7])]:
        print("mix", seed, ",".join(map(str, path)) or "-", mix_seed(seed, path))
    for seed in [0, 42, mix_seed(7, [1, 2])]:
        for v in u64_stream(seed, 1000):
            print("u64", seed, v)
    it = iter(u64_stream(99, 5000))
    for n in [1, 2, 3, 10, 1000, 2**63 + 5]:
        for _ in range(20):
            print("below", 99, n, below(it, n))

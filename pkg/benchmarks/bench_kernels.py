"""Compare the compiled and pure-Python edit-distance kernels.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import random
import timeit

from lecquiz import kernels


def workloads(rng):
    def text(n):
        return "".join(rng.choice("abcdefgh ijklmnop") for _ in range(n))

    # question stems are ~100 chars; dedup compares each stem to the ones before it
    stems = [text(rng.randint(60, 140)) for _ in range(60)]
    pairs = [(a, b) for i, a in enumerate(stems) for b in stems[:i]]
    return {
        "stem dedup (1770 pairs)": pairs,
        "long strings (20 x 1000 chars)": [(text(1000), text(1000)) for _ in range(20)],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"default backend: {kernels.BACKEND}")
    for name, pairs in workloads(random.Random(args.seed)).items():
        times = {}
        for backend, lev in backends.items():
            times[backend] = min(timeit.repeat(lambda: [lev(a, b) for a, b in pairs], number=1, repeat=args.repeat))
        line = "  ".join(f"{b}: {t * 1000:9.2f} ms" for b, t in times.items())
        if "cython" in times:
            line += f"  speedup x{times['python'] / times['cython']:.0f}"
        print(f"{name:<32} {line}")


if __name__ == "__main__":
    main()

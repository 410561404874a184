"""Pure-Python fallback for the compiled kernels in ``_kernels.pyx``."""


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute distance between two strings."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]

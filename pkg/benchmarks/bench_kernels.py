"""Timing comparison of the numba and numpy kernel backends.

Runs the three hot kernels on sweep-scale shapes and prints per-call
times for both backends.  Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from cfrelay import kernels, ldpc, tcq


def _time(fn, repeats=5):
    fn()  # warm-up, includes jit compilation on the numba path
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_spa(backend, n=4096, col=3, row=24, seed=0):
    impl = kernels.get_backend(backend)
    code = ldpc.gen_regular(n, col, row, seed=seed)
    rng = np.random.default_rng(1)
    llrs = rng.normal(0, 2, n)
    state = ldpc.new_state(code)

    def body():
        impl.spa_update(
            code.check_ptr, code.edge_bit, llrs,
            state.msg_b2c, state.msg_c2b, state.checksum,
        )

    return _time(body)


def bench_viterbi(backend, n=4096):
    impl = kernels.get_backend(backend)
    model = tcq.make_model()
    rng = np.random.default_rng(2)
    y = rng.normal(0, 3, n) + 1j * rng.normal(0, 3, n)

    def body():
        impl.viterbi(
            model.trellis.next_state, model.labeling.branch_point,
            model.codebook.points, y,
        )

    return _time(body)


def bench_bcjr(backend, n=4096):
    impl = kernels.get_backend(backend)
    model = tcq.make_model()
    trellis, lab = model.trellis, model.labeling
    rng = np.random.default_rng(3)
    P = len(model.codebook.points)
    prior = rng.random((n, P))
    prior /= prior.sum(axis=1, keepdims=True)
    bit_p1 = rng.random((n, trellis.num_inputs))

    def body():
        impl.bcjr(trellis.next_state, lab.branch_point, trellis.u_bits, prior, bit_p1)

    return _time(body)


def main():
    print(f"default backend: {kernels.BACKEND} (numba available: {kernels.HAS_NUMBA})")
    names = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    rows = [
        ("spa_update n=4096 (3,24)", bench_spa),
        ("viterbi    n=4096 8-state", bench_viterbi),
        ("bcjr       n=4096 8-state", bench_bcjr),
    ]
    print(f"{'kernel':28s}" + "".join(f"{b:>12s}" for b in names))
    for label, fn in rows:
        times = [fn(b) for b in names]
        cells = "".join(f"{t * 1e3:9.2f} ms" for t in times)
        print(f"{label:28s}{cells}")


if __name__ == "__main__":
    main()

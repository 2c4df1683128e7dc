#!/usr/bin/env python3
"""Benchmark the compiled segment/scatter kernels against the numpy
fallback, on raw kernel calls and on full model forward/backward passes.

Usage: python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from hlwlab.gatmodel import GatConfig, GraphBatch, gat_backward, gat_forward, init_gat_params
from hlwlab.numcore import _pykernels, compiled_available, mse_bwd, mse_fwd
from hlwlab.scenario import RoomConfig, build_graph, build_scenario
from hlwlab.channel import LiFiPhyConfig, WiFiPhyConfig


def make_batch(n_ue: int, n_graphs: int = 1) -> GraphBatch:
    room = RoomConfig(length_m=10, width_m=10, lifi_rows=4, lifi_cols=4,
                      n_ue=n_ue, n_subflows=3)
    graphs = [build_graph(build_scenario(room, LiFiPhyConfig(), WiFiPhyConfig(), s))
              for s in range(n_graphs)]
    return GraphBatch.from_graphs(graphs)


def time_fn(fn, repeats: int) -> float:
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(kernels, batch: GraphBatch, f_dim: int, repeats: int) -> dict:
    rng = np.random.default_rng(0)
    n_edges = len(batch.edge_src)
    n_nodes = batch.features.shape[0]
    logits = np.ascontiguousarray(rng.standard_normal(n_edges))
    z = np.ascontiguousarray(rng.standard_normal((n_nodes, f_dim)))
    dout = np.ascontiguousarray(rng.standard_normal((n_nodes, f_dim)))
    alpha = kernels.seg_softmax_fwd(logits, batch.seg_ptr)
    return {
        "softmax_fwd": time_fn(lambda: kernels.seg_softmax_fwd(logits, batch.seg_ptr), repeats),
        "softmax_bwd": time_fn(lambda: kernels.seg_softmax_bwd(alpha, logits, batch.seg_ptr), repeats),
        "aggregate_fwd": time_fn(lambda: kernels.edge_aggregate_fwd(alpha, z, batch.edge_src, batch.seg_ptr), repeats),
        "aggregate_bwd": time_fn(lambda: kernels.edge_aggregate_bwd(alpha, z, batch.edge_src, batch.seg_ptr, dout), repeats),
    }


def bench_model(batch: GraphBatch, repeats: int) -> float:
    cfg = GatConfig(in_dim=4, out_dim=3, hidden_dim=32, n_heads=3, dropout_p=0.0)
    params = init_gat_params(cfg, seed=0)
    target = np.random.default_rng(1).random((len(batch.ue_rows), 3))

    def step():
        pred, caches = gat_forward(batch, params, cfg, training=False)
        mse_fwd(pred, target)
        gat_backward(caches, mse_bwd(pred, target), batch)

    return time_fn(step, repeats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    if not compiled_available():
        print("compiled kernels not built; only the numpy lane will run")
        backends = [("numpy", _pykernels)]
    else:
        from hlwlab.numcore import _ckernels
        backends = [("numpy", _pykernels), ("cython", _ckernels)]

    print(f"{'case':<28} " + "".join(f"{name:>12} " for name, _ in backends)
          + ("speedup" if len(backends) == 2 else ""))
    for n_ue, n_graphs in [(10, 1), (50, 1), (20, 100)]:
        batch = make_batch(n_ue, n_graphs)
        label = f"n_ue={n_ue} x{n_graphs} (E={len(batch.edge_src)})"
        results = [bench_kernels(k, batch, 32, args.repeats) for _, k in backends]
        for op in results[0]:
            line = f"{label + ' ' + op:<28} "
            for r in results:
                line += f"{r[op]*1e6:>10.1f}us "
            if len(results) == 2:
                line += f"{results[0][op]/results[1][op]:>6.1f}x"
            print(line)
            label = ""

    print()
    from hlwlab.numcore import backend_name
    batch = make_batch(20, 20)
    dt = bench_model(batch, max(10, args.repeats // 10))
    print(f"full 2-layer fwd+bwd, 20-graph batch, active backend "
          f"'{backend_name()}': {dt*1e3:.2f} ms")
    print("(set HLWLAB_KERNELS=py and rerun to time the numpy lane end to end)")


if __name__ == "__main__":
    main()

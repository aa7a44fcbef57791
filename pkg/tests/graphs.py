"""One small graph per autodiff node kind, each ending in a scalar loss."""

import numpy as np

from avhighlight.autodiff import Graph, ParamStore, run


def kind_graph(kind, rng):
    g = Graph()
    p = ParamStore()
    if kind == "dense":
        x = g.input("x", (None, 3))
        p.add("W", rng.standard_normal((3, 2)))
        p.add("b", rng.standard_normal(2))
        h = g.add("dense", x, params=("W", "b"))
        feeds = {"x": rng.standard_normal((4, 3))}
    elif kind == "filterbank2d":
        x = g.input("x", (None, 4))
        p.add("W", rng.standard_normal((2, 2, 3)))
        p.add("b", rng.standard_normal(3))
        h = g.add("filterbank2d", x, params=("W", "b"))
        feeds = {"x": rng.standard_normal((2, 4))}
    elif kind in ("relu", "tanh", "sigmoid", "dropout"):
        p.add("a", rng.standard_normal((3, 4)))
        h = g.add(kind, g.add("param", params=("a",)), **({"rate": 0.5} if kind == "dropout" else {}))
        feeds = {}
    elif kind == "concat":
        p.add("a", rng.standard_normal((2, 3)))
        p.add("c", rng.standard_normal((2, 2)))
        h = g.add("concat", g.add("param", params=("a",)), g.add("param", params=("c",)))
        feeds = {}
    elif kind in ("sum", "mean"):
        p.add("a", rng.standard_normal((2, 3, 4)))
        h = g.add(kind, g.add("param", params=("a",)), axis=1)
        feeds = {}
    elif kind == "mul":
        p.add("a", rng.standard_normal((3,)))
        p.add("c", rng.standard_normal((3,)))
        h = g.add("mul", g.add("param", params=("a",)), g.add("param", params=("c",)))
        feeds = {}
    elif kind == "conv1d":
        x = g.input("x", (None, 7, 2))
        p.add("W", rng.standard_normal((3, 2, 4)))
        p.add("b", rng.standard_normal(4))
        h = g.add("conv1d", x, params=("W", "b"))
        feeds = {"x": rng.standard_normal((2, 7, 2))}
    elif kind == "maxpool1d":
        p.add("a", rng.standard_normal((2, 7, 3)))
        h = g.add("maxpool1d", g.add("param", params=("a",)))
        feeds = {}
    elif kind in ("lstm", "bilstm"):
        x = g.input("x", (None, 5, 3))
        names = []
        for d in ("f", "b") if kind == "bilstm" else ("f",):
            p.add(f"{d}.W", 0.5 * rng.standard_normal((3, 8)))
            p.add(f"{d}.U", 0.5 * rng.standard_normal((2, 8)))
            p.add(f"{d}.b", 0.1 * rng.standard_normal(8))
            names += [f"{d}.W", f"{d}.U", f"{d}.b"]
        h = g.add(kind, x, params=tuple(names), input_dropout=0.5, recurrent_dropout=0.5)
        feeds = {"x": rng.standard_normal((2, 5, 3))}
    elif kind == "ccc_loss":
        p.add("s", rng.standard_normal(6))
        g.set_output("loss", g.add("ccc_loss", g.add("param", params=("s",)), g.input("y", (None,))))
        return g, p, {"y": rng.uniform(0, 2, 6)}
    elif kind == "margin_ranking_loss":
        p.add("s", 0.3 * rng.standard_normal(5))
        g.set_output("loss", g.add("margin_ranking_loss", g.add("param", params=("s",)),
                                   g.input("hi", (None,)), g.input("lo", (None,))))
        return g, p, {"hi": np.array([0, 1, 4]), "lo": np.array([2, 3, 2])}
    else:
        raise AssertionError(kind)
    # weight the outputs so every element has a distinct adjoint
    out = g.add("tanh", h)
    p.add("readout", rng.standard_normal(run(g, p, feeds).values[out].shape))
    g.set_output("loss", g.add("sum", g.add("mul", out, g.add("param", params=("readout",)))))
    return g, p, feeds


NODE_KINDS = ["dense", "filterbank2d", "relu", "tanh", "sigmoid", "concat", "dropout", "sum", "mean", "mul",
              "conv1d", "maxpool1d", "lstm", "bilstm", "ccc_loss", "margin_ranking_loss"]

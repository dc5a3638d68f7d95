"""Finite-difference verification of every differentiable op on the tape.

Each registered case builds a tiny model whose inputs are Parameters, plus
a closure that recomputes a scalar loss from the current parameter values.
The checker compares analytic gradients against central differences entry
by entry in float64, over several randomly drawn shapes and values per
case.  A deliberate-corruption mode scales the analytic gradients by 1.01
and demands that the comparison fail, which guards the checker itself
against vacuous tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .optim import ParamStore
from .rng import substream

REGISTRY: dict[str, "callable"] = {}


def case(name: str):
    def register(builder):
        REGISTRY[name] = builder
        return builder
    return register


@dataclass
class CheckResult:
    case: str
    trial: int
    worst_param: str
    max_abs_err: float
    max_rel_err: float
    ok: bool


def _rel_err(a: float, f: float) -> float:
    m = max(abs(a), abs(f))
    if m < 1e-7:  # below finite-difference resolution on both sides
        return 0.0
    return abs(a - f) / m


def run_case(name: str, trials: int = 20, seed: int = 0, eps: float = 1e-5,
             tol: float = 1e-4, corrupt: bool = False) -> list[CheckResult]:
    if name not in REGISTRY:
        raise ConfigError(f"unknown gradient-check case {name!r}; "
                          f"known: {sorted(REGISTRY)}")
    results = []
    for trial in range(trials):
        store, loss_fn = REGISTRY[name](substream(seed, "gradcheck", name, trial))
        loss = loss_fn()
        store.zero_grads()
        ad.backward(loss)
        analytic = {p.name: p.grad.copy() for p in store.params()}
        if corrupt:
            for g in analytic.values():
                g *= 1.01

        amax, rmax, worst = 0.0, 0.0, ""
        for p in store.params():
            flat = p.value.reshape(-1)
            aflat = analytic[p.name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_fn().item()
                flat[i] = orig - eps
                down = loss_fn().item()
                flat[i] = orig
                fd = (up - down) / (2.0 * eps)
                amax = max(amax, abs(aflat[i] - fd))
                r = _rel_err(aflat[i], fd)
                if r > rmax:
                    rmax, worst = r, p.name
        results.append(CheckResult(name, trial, worst, amax, rmax, rmax < tol))
    return results


def run_all(trials: int = 20, seed: int = 0, eps: float = 1e-5, tol: float = 1e-4,
            corrupt: bool = False) -> list[CheckResult]:
    out = []
    for name in sorted(REGISTRY):
        out.extend(run_case(name, trials=trials, seed=seed, eps=eps, tol=tol,
                            corrupt=corrupt))
    return out


def format_report(results: list[CheckResult]) -> str:
    lines = []
    by_case: dict[str, list[CheckResult]] = {}
    for r in results:
        by_case.setdefault(r.case, []).append(r)
    for name in sorted(by_case):
        rs = by_case[name]
        worst = max(rs, key=lambda r: r.max_rel_err)
        status = "pass" if all(r.ok for r in rs) else "FAIL"
        lines.append(f"{status}  {name:<20s} trials={len(rs)} "
                     f"max_rel={worst.max_rel_err:.3e} (trial {worst.trial}, "
                     f"{worst.worst_param})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# registered cases (parameters kept tiny so exhaustive FD stays fast)


def _param(store, rng, name, shape, scale=0.8):
    return store.add(name, scale * rng.standard_normal(shape))


@case("linear")
def _case_linear(rng):
    s = ParamStore()
    B, I, O = rng.integers(2, 6, size=3)
    _param(s, rng, "x", (B, I))
    _param(s, rng, "W", (I, O))
    _param(s, rng, "b", (O,))
    t = rng.standard_normal((B, O))

    def loss():
        return ad.mse_loss(ad.linear(s.l("x"), s.l("W"), s.l("b")), t)
    return s, loss


@case("matmul_tanh")
def _case_matmul(rng):
    s = ParamStore()
    m, k, n = rng.integers(2, 5, size=3)
    _param(s, rng, "a", (m, k))
    _param(s, rng, "b", (k, n))

    def loss():
        return ad.sum_all(ad.tanh(ad.matmul(s.l("a"), s.l("b"))))
    return s, loss


@case("relu")
def _case_relu(rng):
    s = ParamStore()
    # keep entries away from the kink so FD stays valid
    x = rng.standard_normal((5, 4))
    x[np.abs(x) < 0.1] += 0.2
    s.add("x", x)

    def loss():
        return ad.mean_all(ad.relu(s.l("x")))
    return s, loss


@case("softmax_nll")
def _case_softmax_nll(rng):
    s = ParamStore()
    rows, classes = rng.integers(3, 7), rng.integers(2, 6)
    _param(s, rng, "z", (rows, classes))
    y = rng.integers(0, classes, size=rows)
    w = rng.random(rows) + 0.5

    def loss():
        return ad.nll_rows(ad.softmax_rows(s.l("z")), y, weights=w)
    return s, loss


@case("uniform_distance")
def _case_uniform(rng):
    s = ParamStore()
    _param(s, rng, "z", (5, 3))
    w = (rng.random(5) > 0.3).astype(float)
    w[0] = 1.0

    def loss():
        return ad.uniform_distance_loss(ad.softmax_rows(s.l("z")), weights=w)
    return s, loss


@case("mse_weighted")
def _case_mse(rng):
    s = ParamStore()
    _param(s, rng, "x", (6, 3))
    t = rng.standard_normal((6, 3))
    w = rng.random(6)

    def loss():
        return ad.mse_loss(s.l("x"), t, weights=w)
    return s, loss


@case("concat_slice_tile")
def _case_plumbing(rng):
    s = ParamStore()
    _param(s, rng, "a", (2, 3))
    _param(s, rng, "b", (6, 2))
    t = rng.standard_normal((4, 5))

    def loss():
        wide = ad.concat_cols([ad.tile_rows(s.l("a"), 3), s.l("b")])
        return ad.mse_loss(ad.slice_rows(wide, 2, 6), t)
    return s, loss


@case("shift_rows")
def _case_shift(rng):
    s = ParamStore()
    _param(s, rng, "x", (8, 3))
    t = rng.standard_normal((8, 3))

    def loss():
        return ad.mse_loss(ad.shift_rows_down(s.l("x"), 2), t)
    return s, loss


@case("embedding")
def _case_embedding(rng):
    s = ParamStore()
    _param(s, rng, "table", (5, 3))
    ids = rng.integers(0, 5, size=6)
    t = rng.standard_normal((6, 3))

    def loss():
        return ad.mse_loss(ad.embedding_lookup(s.l("table"), ids), t)
    return s, loss


@case("dropout")
def _case_dropout(rng):
    s = ParamStore()
    _param(s, rng, "x", (6, 4))
    t = rng.standard_normal((6, 4))
    mask_seed = int(rng.integers(1 << 31))

    def loss():
        # fresh generator per call so the mask is identical across FD evals
        return ad.mse_loss(ad.dropout(s.l("x"), 0.4, substream(mask_seed, "mask")), t)
    return s, loss


@case("conv1d_centered")
def _case_conv_centered(rng):
    s = ParamStore()
    cin, cout = rng.integers(2, 5, size=2)
    _param(s, rng, "x", (10, cin))  # T=5, block=2
    _param(s, rng, "W", (3, cin, cout))
    _param(s, rng, "b", (cout,))
    t = rng.standard_normal((10, cout))

    def loss():
        return ad.mse_loss(ad.conv1d_time(s.l("x"), s.l("W"), s.l("b"), block=2), t)
    return s, loss


@case("conv1d_causal")
def _case_conv_causal(rng):
    s = ParamStore()
    cin, cout = rng.integers(2, 5, size=2)
    _param(s, rng, "x", (10, cin))
    _param(s, rng, "W", (3, cin, cout))
    _param(s, rng, "b", (cout,))
    t = rng.standard_normal((10, cout))

    def loss():
        return ad.mse_loss(
            ad.conv1d_time(s.l("x"), s.l("W"), s.l("b"), block=2, causal=True), t)
    return s, loss


def _scan_case(rng, reverse):
    s = ParamStore()
    F, H = rng.integers(2, 5, size=2)
    _param(s, rng, "x", (12, F))  # T=4, block=3
    _param(s, rng, "Wx", (F, H), scale=0.5)
    _param(s, rng, "Wh", (H, H), scale=0.5)
    _param(s, rng, "b", (H,), scale=0.2)
    mask = (rng.random((12, 1)) > 0.25).astype(float)
    mask[:3] = 1.0
    t = rng.standard_normal((12, H))

    def loss():
        h = ad.rnn_scan(s.l("x"), s.l("Wx"), s.l("Wh"), s.l("b"),
                        block=3, mask=mask, reverse=reverse)
        return ad.mse_loss(h, t, weights=mask[:, 0])
    return s, loss


@case("rnn_scan_forward")
def _case_scan_fwd(rng):
    return _scan_case(rng, reverse=False)


@case("rnn_scan_reverse")
def _case_scan_rev(rng):
    return _scan_case(rng, reverse=True)


@case("encoder_stack")
def _case_stack(rng):
    # conv -> relu -> bidirectional scan -> linear -> softmax/nll plus an mse
    # branch; exercises gradient fan-out through shared activations.
    s = ParamStore()
    _param(s, rng, "x", (8, 3))  # T=4, block=2
    _param(s, rng, "Wc", (3, 3, 4), scale=0.5)
    _param(s, rng, "bc", (4,), scale=0.2)
    _param(s, rng, "Wf", (4, 3), scale=0.5)
    _param(s, rng, "Uf", (3, 3), scale=0.5)
    _param(s, rng, "bf", (3,), scale=0.2)
    _param(s, rng, "Wr", (4, 3), scale=0.5)
    _param(s, rng, "Ur", (3, 3), scale=0.5)
    _param(s, rng, "br", (3,), scale=0.2)
    _param(s, rng, "Wo", (6, 4), scale=0.5)
    _param(s, rng, "bo", (4,), scale=0.2)
    mask = np.ones((8, 1))
    mask[6:] = 0.0
    y = rng.integers(0, 4, size=8)
    t = rng.standard_normal((8, 4))

    def loss():
        c = ad.relu(ad.conv1d_time(s.l("x"), s.l("Wc"), s.l("bc"), block=2))
        f = ad.rnn_scan(c, s.l("Wf"), s.l("Uf"), s.l("bf"), block=2, mask=mask)
        r = ad.rnn_scan(c, s.l("Wr"), s.l("Ur"), s.l("br"), block=2, mask=mask,
                        reverse=True)
        h = ad.linear(ad.concat_cols([f, r]), s.l("Wo"), s.l("bo"))
        nll = ad.nll_rows(ad.softmax_rows(h), y, weights=mask[:, 0])
        return nll + ad.mse_loss(h, t, weights=mask[:, 0])
    return s, loss

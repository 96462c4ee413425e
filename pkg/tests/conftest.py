import time

import numpy as np
import pytest

from nvi import autodiff as ad


def jvp_error(build, arrays, dtype=np.float64, step=1e-5, seed=0, with_condition=False):
    """Relative error between the tape's directional derivative and central differences.

    ``build(*tensors)`` returns any-shape output; it is contracted with a fixed
    random weight array to get a scalar.  The analytic side runs in ``dtype``,
    the difference quotient always in float64.  With ``with_condition`` also
    returns the condition number sum|g_i v_i| / |sum g_i v_i| of the contraction.
    """
    rng = np.random.default_rng(seed)
    # evaluate both sides at the same (dtype-representable) point
    arrays = [np.asarray(a, dtype=dtype).astype(np.float64) for a in arrays]
    dirs = [rng.normal(size=a.shape) for a in arrays]
    out64 = build(*[ad.Tensor(a) for a in arrays]).values
    w = rng.normal(size=out64.shape).astype(dtype).astype(np.float64)

    def scalar(xs, dt):
        t = [ad.Tensor(x.astype(dt)) for x in xs]
        return float(np.sum(build(*t).values.astype(np.float64) * w))

    leaves = [ad.Tensor(a.astype(dtype), requires_grad=True) for a in arrays]
    with ad.Tape() as tape:
        out = build(*leaves)
        loss = ad.sum(ad.mul(out, ad.Tensor(w.astype(dtype))))
    g = ad.backward(tape, loss, leaves, accumulate=False)
    analytic = sum(float(np.sum(g[l].astype(np.float64) * d)) for l, d in zip(leaves, dirs))
    up = scalar([a + step * d for a, d in zip(arrays, dirs)], np.float64)
    down = scalar([a - step * d for a, d in zip(arrays, dirs)], np.float64)
    numeric = (up - down) / (2 * step)
    err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
    if not with_condition:
        return err
    spread = sum(float(np.sum(np.abs(g[l].astype(np.float64) * d))) for l, d in zip(leaves, dirs))
    return err, spread / max(abs(analytic), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_nasm(seed=0, noise=0.3, vocab=4, embed=2, hidden=2, latent=1, layers=1, joint=None):
    """Float64 NASM with default init plus N(0, noise) on every weight and bias."""
    from nvi.nasm import NasmConfig, init_params

    cfg = NasmConfig(vocab_size=vocab, embed_dim=embed, hidden=hidden, layers=layers,
                     latent_dim=latent, prior_hidden=hidden, joint_hidden=joint or 3 * hidden,
                     dropout=0.0)
    gen, inf = init_params(cfg, seed=seed, dtype=np.float64)
    r = np.random.default_rng(seed + 1000)
    if noise:
        for t in list(gen.named().values()) + list(inf.named().values()):
            t.values += noise * r.normal(size=t.shape)
    return cfg, gen, inf


ACCEPTANCE = pytest.StashKey[dict]()


class Criterion:
    """Context manager that records one acceptance criterion's outcome for the summary."""

    def __init__(self, store: dict, number: int, title: str):
        self.store, self.number, self.title = store, number, title
        self.detail = ""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            status = "PASS"
        elif issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL"
        detail = self.detail
        if exc is not None:
            first = str(exc).strip().splitlines()
            detail = "; ".join(x for x in (detail, first[0] if first else exc_type.__name__) if x)
        self.store[self.number] = (self.title, status, detail, elapsed)
        return False


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(ACCEPTANCE, {})
    return lambda number, title: Criterion(store, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, detail, elapsed = results[number]
        line = f"criterion {number:2d}  {status}  {title}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(f"{line} [{elapsed:.1f} s]")

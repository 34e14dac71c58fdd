import torch


def central_difference(fn, x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Brute-force central-difference gradient of a scalar function, one
    coordinate at a time. Independent of autograd.
    """
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    grad_flat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + eps
            f_plus = float(fn(x))
            flat[i] = original - eps
            f_minus = float(fn(x))
            flat[i] = original
            grad_flat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def assert_grad_matches(fn, x: torch.Tensor, rtol: float = 1e-3, atol: float = 1e-8):
    """Compare the autograd gradient of scalar fn against central differences."""
    x = x.detach().clone().double().requires_grad_(True)
    fn(x).backward()
    analytic = x.grad.detach().clone()
    numeric = central_difference(fn, x.detach().clone())
    assert torch.allclose(analytic, numeric, rtol=rtol, atol=atol), (
        f"gradient mismatch: max abs diff "
        f"{(analytic - numeric).abs().max().item():.3e}"
    )


def scalarize(module, seed: int = 0):
    """Wrap a module into a scalar function via a fixed random projection."""
    projection = {}

    def fn(x):
        y = module(x)
        if "v" not in projection:
            g = torch.Generator().manual_seed(seed)
            projection["v"] = torch.randn(y.shape, generator=g, dtype=torch.float64)
        return (y * projection["v"]).sum()

    return fn

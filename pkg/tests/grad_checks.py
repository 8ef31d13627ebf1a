"""Autograd versus central differences for every training loss on tiny float64 nets."""
import torch

from oracles import central_difference_grad, relative_error
from seismoaug.featureext import FeatureExtractor
from seismoaug.genmodels import ArchConfig, AutoEncoder, GenHyper, VAE
from seismoaug.genmodels.training import batch_loss
from seismoaug.inversion import InvArch, InversionNet, invnet_loss

TINY = ArchConfig(height=8, width=8, channels=(2, 2), latent_dim=4)
TINY_INV = InvArch(height=8, width=8, n_shots=1, n_receivers=4, nt=8, decimate=1,
                   widths=(1, 1, 1, 1, 1), decoder_channels=(1, 1, 1, 1), bottleneck=2)


def _compare(model, loss_fn):
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss_fn().backward()
    analytic = [p.grad.detach().clone() for p in params]
    numeric = central_difference_grad(loss_fn, params)
    return relative_error([a.numpy() for a in analytic], [n.numpy() for n in numeric]), sum(p.numel() for p in params)


def _generator_case(kind, seed):
    torch.manual_seed(seed)
    model = (AutoEncoder(TINY) if kind == "ae" else VAE(TINY)).double()
    g = torch.Generator().manual_seed(seed + 100)
    x = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
    y = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
    # selection B = conv1_1..conv3_1, all three blocks of the tiny extractor
    hyper = GenHyper(gamma=1e2, layers="B", arch=TINY)
    extractor = FeatureExtractor(widths=(2, 2, 2), seed=seed).double()
    batch = {
        "ae": (x, y, torch.tensor([10.0, 100.0, 200.0], dtype=torch.float64), (x + y) / 2),
        "vae": (x,),
        "vae_percep": (x,),
        "vae_reg": (x, y),
    }[kind]

    def loss():
        eps = torch.Generator().manual_seed(seed + 7)  # same noise on every call
        return batch_loss(model, kind, batch, hyper, eps_gen=eps, extractor=extractor).total

    return model, loss


def _inversion_case(seed):
    torch.manual_seed(seed)
    model = InversionNet(TINY_INV).double().eval()
    g = torch.Generator().manual_seed(seed + 100)
    gathers = torch.randn(3, 1, 8, 4, generator=g, dtype=torch.float64)
    truth = torch.rand(3, 8, 8, generator=g, dtype=torch.float64)
    return model, lambda: invnet_loss(model(gathers), truth)


def gradient_errors(seed=0):
    """{loss name: (relative error, parameter count)} for the five losses."""
    out = {}
    for kind in ("ae", "vae", "vae_percep", "vae_reg"):
        out[kind] = _compare(*_generator_case(kind, seed))
    out["invnet"] = _compare(*_inversion_case(seed))
    return out

"""Lazy loading of the pretrained UniverSeg model.

torch and the `universeg` package are imported only here, so the
protocol and server modules stay importable (and testable) without them.
"""

from __future__ import annotations

import numpy as np


class ModelUnavailable(Exception):
    """UniverSeg (or its weights) could not be loaded."""


def load_runner(device: str = "cpu"):
    """Return a runner closure over the pretrained model in eval mode.

    The runner maps (query, support images, support labels) — 128x128
    float32 arrays and uint8 masks — to a 128x128 probability array.
    """
    try:
        import torch
        from universeg import universeg
    except ImportError as exc:
        raise ModelUnavailable(
            "universeg/torch not importable; install the 'model' extra and "
            "https://github.com/JJGO/UniverSeg"
        ) from exc

    try:
        model = universeg(pretrained=True).to(device).eval()
    except Exception as exc:  # weights download or device failure
        raise ModelUnavailable(f"failed to load pretrained UniverSeg: {exc}") from exc

    def runner(query: np.ndarray, images: list, labels: list) -> np.ndarray:
        with torch.no_grad():
            q = torch.from_numpy(np.ascontiguousarray(query))[None, None]
            si = torch.stack([torch.from_numpy(np.ascontiguousarray(i)) for i in images])
            sl = torch.stack(
                [torch.from_numpy(np.ascontiguousarray(l, dtype=np.float32)) for l in labels]
            )
            logits = model(
                q.to(device), si[None, :, None].to(device), sl[None, :, None].to(device)
            )
            return torch.sigmoid(logits)[0, 0].cpu().numpy()

    return runner

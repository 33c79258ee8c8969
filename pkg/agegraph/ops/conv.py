import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..common import ShapeError
from .base_op import Op


class Conv2dOp(Op):
    """
    Valid cross-correlation of h×w×c images (optionally with a leading batch
    axis) with k×k×c×f kernels.
    """
    def __init__(self, stride=1):
        if int(stride) < 1:
            raise ShapeError(f'conv2d: stride must be positive, got {stride}')
        self.stride = int(stride)

    def forward(self, image, kernels):
        self.batched = image.ndim == 4
        x = image if self.batched else image[None]
        if x.ndim != 4 or kernels.ndim != 4:
            raise ShapeError(f'conv2d: expected h×w×c image and k×k×c×f kernels, '
                             f'got {image.shape} and {kernels.shape}')
        k, k2, c, _ = kernels.shape
        _, h, w, cx = x.shape
        if k != k2 or c != cx:
            raise ShapeError(f'conv2d: kernels {kernels.shape} do not fit image {image.shape}')
        if k > h or k > w:
            raise ShapeError(f'conv2d: kernel {kernels.shape} larger than image {image.shape}')

        s = self.stride
        windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        self.x, self.kernels, self.windows = x, kernels, windows
        out = np.einsum('nijcab,abcf->nijf', windows, kernels, optimize=True)
        return out if self.batched else out[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        k = self.kernels.shape[0]
        s = self.stride
        oh, ow = g.shape[1], g.shape[2]

        dk = np.einsum('nijcab,nijf->abcf', self.windows, g, optimize=True)
        dx = np.zeros_like(self.x)
        for a in range(k):
            for b in range(k):
                dx[:, a:a + s * (oh - 1) + 1:s, b:b + s * (ow - 1) + 1:s, :] += \
                    g @ self.kernels[a, b].T
        return (dx if self.batched else dx[0]), dk

"""
Tensor core.

Deterministic numerics for the LeNet-style networks: valid cross-correlation,
mean-pool sub-sampling, fully-connected layers, logistic activation, squared
error loss, and backpropagation with per-kernel gradient masking.

Arrays are numpy. Per-sample operations take [maps, H, W] inputs; the same
functions accept a stacked mini-batch [N, maps, H, W] and then return sums of
the per-sample weight gradients.

Every arithmetic kernel has a matching ``charge_*`` function that records its
MACs and memory events on a CostLedger, so counting and training share the
same geometry rules.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import PolicyError, ShapeError
from app.services.ledger import CostLedger, MemEvent, Phase


SIGMOID = "sigmoid"
IDENTITY = "identity"
ACTIVATIONS = (SIGMOID, IDENTITY)

KIND_CONV = "conv"
KIND_POOL = "meanpool"
KIND_FC = "fullyconnected"
KIND_OUTPUT = "output"


# =============================================================================
# DOMAIN TYPES
# =============================================================================

@dataclass(frozen=True)
class LayerSpec:
    """
    One layer of a network with its inferred shapes.

    Attributes:
        kind: conv, meanpool, fullyconnected or output
        size: output maps (conv), pool factor (meanpool) or neuron count
        kernel: (kH, kW) for conv layers, (0, 0) otherwise
        activation: sigmoid or identity
        in_shape: (maps, H, W) for spatial inputs, (n,) for vectors
        out_shape: same convention as in_shape
    """
    kind: str
    size: int
    kernel: Tuple[int, int] = (0, 0)
    activation: str = SIGMOID
    in_shape: Tuple[int, ...] = ()
    out_shape: Tuple[int, ...] = ()

    @property
    def is_conv(self) -> bool:
        return self.kind == KIND_CONV

    @property
    def is_pool(self) -> bool:
        return self.kind == KIND_POOL

    @property
    def is_dense(self) -> bool:
        return self.kind in (KIND_FC, KIND_OUTPUT)

    @property
    def in_size(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def out_size(self) -> int:
        return int(np.prod(self.out_shape))

    @property
    def weight_count(self) -> int:
        if self.is_conv:
            return self.out_shape[0] * self.in_shape[0] * self.kernel[0] * self.kernel[1]
        if self.is_dense:
            return self.size * self.in_size
        return 0

    @property
    def bias_count(self) -> int:
        if self.is_conv:
            return self.out_shape[0]
        if self.is_dense:
            return self.size
        return 0

    def describe(self) -> str:
        if self.is_conv:
            return f"({self.kernel[0]}x{self.kernel[1]}){self.size}c"
        if self.is_pool:
            return f"{self.size}s"
        return f"{self.size}{'o' if self.kind == KIND_OUTPUT else 'fc'}"


@dataclass
class ConvLayerState:
    """
    Kernels and biases of one conv layer.

    ``origin[o][i]`` is None for an owned trainable kernel, or the key of the
    KernelBank entry the slot references.
    """
    kernels: np.ndarray
    biases: np.ndarray
    origin: Tuple[Tuple[Optional[str], ...], ...] = ()

    def __post_init__(self):
        if self.kernels.ndim != 4:
            raise ShapeError(f"Conv kernels must be [out, in, kH, kW], got shape {self.kernels.shape}")
        out_maps, in_maps, kh, kw = self.kernels.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"Kernel extents must be odd, got {kh}x{kw}")
        if self.biases.shape != (out_maps,):
            raise ShapeError(f"Expected {out_maps} biases, got shape {self.biases.shape}")
        if not self.origin:
            self.origin = tuple((None,) * in_maps for _ in range(out_maps))
        if len(self.origin) != out_maps or any(len(row) != in_maps for row in self.origin):
            raise ShapeError(f"Origin grid must be {out_maps}x{in_maps}")

    @property
    def out_maps(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_maps(self) -> int:
        return self.kernels.shape[1]

    def owned_mask(self) -> np.ndarray:
        """Boolean [out, in] grid, True where the slot owns its kernel."""
        return np.array([[tag is None for tag in row] for row in self.origin], dtype=bool)

    def copy(self) -> "ConvLayerState":
        return ConvLayerState(self.kernels.copy(), self.biases.copy(), self.origin)


@dataclass
class FcLayerState:
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"Fully-connected weights {self.weights.shape} and biases {self.biases.shape} disagree"
            )

    def copy(self) -> "FcLayerState":
        return FcLayerState(self.weights.copy(), self.biases.copy())


@dataclass
class ConvGradients:
    """
    Masked conv gradients.

    ``kernel_grad`` and ``bias_grad`` are dense with zeros where the mask is
    False; ``kernel_grads`` exposes only the computed slots.
    """
    input_grad: Optional[np.ndarray]
    kernel_grad: np.ndarray
    bias_grad: np.ndarray
    slot_mask: np.ndarray
    bias_mask: np.ndarray

    @property
    def kernel_grads(self) -> Dict[Tuple[int, int], np.ndarray]:
        return {
            (int(o), int(i)): self.kernel_grad[o, i]
            for o, i in zip(*np.nonzero(self.slot_mask))
        }

    @property
    def bias_grads(self) -> Dict[int, float]:
        return {int(o): float(self.bias_grad[o]) for o in np.flatnonzero(self.bias_mask)}


@dataclass
class FcGradients:
    input_grad: Optional[np.ndarray]
    weight_grad: np.ndarray
    bias_grad: np.ndarray


@dataclass
class LossResult:
    loss: float
    grad: np.ndarray = field(repr=False)


# =============================================================================
# ACTIVATION
# =============================================================================

def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |z|."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == SIGMOID:
        return sigmoid(z)
    if activation == IDENTITY:
        return z
    raise ShapeError(f"Unknown activation '{activation}'")


def activation_derivative(a: np.ndarray, activation: str) -> np.ndarray:
    """Derivative expressed through the activation output ``a``."""
    if activation == SIGMOID:
        return a * (1 - a)
    if activation == IDENTITY:
        return np.ones_like(a)
    raise ShapeError(f"Unknown activation '{activation}'")


# =============================================================================
# CONVOLUTION
# =============================================================================

def conv2d_valid(inp: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """
    Valid cross-correlation of one map with one kernel.

    Args:
        inp: [H, W] map
        kernel: [kH, kW] kernel

    Returns:
        [H-kH+1, W-kW+1] map with out[y, x] = sum_uv inp[y+u, x+v] * kernel[u, v]

    Examples:
        >>> conv2d_valid(np.ones((3, 3)), np.ones((2, 2)))
        array([[4., 4.], [4., 4.]])
    """
    if inp.ndim != 2 or kernel.ndim != 2:
        raise ShapeError(f"conv2d_valid expects 2-D arrays, got {inp.shape} and {kernel.shape}")
    if kernel.shape[0] > inp.shape[0] or kernel.shape[1] > inp.shape[1]:
        raise ShapeError(f"Kernel {kernel.shape} larger than input {inp.shape}")
    windows = sliding_window_view(inp, kernel.shape)
    return np.einsum("yxuv,uv->yx", windows, kernel)


def _as_batch(x: np.ndarray, name: str) -> Tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{name} must be [maps, H, W] or [N, maps, H, W], got shape {x.shape}")


def conv_layer_forward(
    state: ConvLayerState,
    inputs: np.ndarray,
    activation: str = SIGMOID,
) -> np.ndarray:
    """
    Forward pass of a conv layer.

    outputMap[j] = activation(sum_i conv2d_valid(inputs[i], kernels[j, i]) + bias[j])

    Args:
        state: layer kernels and biases
        inputs: [inMaps, H, W] or [N, inMaps, H, W]
        activation: sigmoid or identity

    Returns:
        Output maps with the same leading layout as ``inputs``
    """
    x, single = _as_batch(inputs, "Conv input")
    _, in_maps, h, w = x.shape
    _, k_in, kh, kw = state.kernels.shape
    if in_maps != k_in:
        raise ShapeError(f"Conv layer expects {k_in} input maps, got {in_maps}")
    if kh > h or kw > w:
        raise ShapeError(f"Kernel {kh}x{kw} larger than input {h}x{w}")

    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    z = np.tensordot(windows, state.kernels, axes=([1, 4, 5], [1, 2, 3]))
    z = z.transpose(0, 3, 1, 2) + state.biases[None, :, None, None]
    out = np.ascontiguousarray(activate(z, activation))
    return out[0] if single else out


def conv_layer_backward(
    state: ConvLayerState,
    inputs: np.ndarray,
    output_grad: np.ndarray,
    mask: Optional[np.ndarray] = None,
    bias_mask: Optional[np.ndarray] = None,
    outputs: Optional[np.ndarray] = None,
    activation: str = SIGMOID,
    route_error: bool = True,
) -> ConvGradients:
    """
    Backward pass of a conv layer with per-slot gradient masking.

    The input gradient is computed through every slot; kernel gradients only
    for slots whose mask is True, bias gradients only for maps whose bias
    mask is True (default: any slot of the map is True).

    Args:
        state: layer kernels and biases
        inputs: forward inputs, [inMaps, H, W] or [N, inMaps, H, W]
        output_grad: dLoss/dOutput, same layout as the forward output
        mask: boolean [outMaps, inMaps]; None means all True
        bias_mask: boolean [outMaps]
        outputs: forward outputs (recomputed when None)
        activation: sigmoid or identity
        route_error: False skips the input gradient (first layer)

    Returns:
        ConvGradients
    """
    x, single = _as_batch(inputs, "Conv input")
    g, _ = _as_batch(output_grad, "Conv output gradient")
    out_maps, in_maps, kh, kw = state.kernels.shape
    n, _, h, w = x.shape
    expected = (n, out_maps, h - kh + 1, w - kw + 1)
    if g.shape != expected:
        raise ShapeError(f"Conv output gradient has shape {g.shape}, expected {expected}")

    if mask is None:
        mask = np.ones((out_maps, in_maps), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (out_maps, in_maps):
        raise PolicyError(f"Gradient mask has shape {mask.shape}, expected {(out_maps, in_maps)}")
    if bias_mask is None:
        bias_mask = mask.any(axis=1)
    bias_mask = np.asarray(bias_mask, dtype=bool)
    if bias_mask.shape != (out_maps,):
        raise PolicyError(f"Bias mask has shape {bias_mask.shape}, expected {(out_maps,)}")

    if outputs is None:
        a = conv_layer_forward(state, x, activation)
    else:
        a, _ = _as_batch(outputs, "Conv output")
    delta = g * activation_derivative(a, activation)

    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    kernel_grad = np.zeros_like(state.kernels)
    full_rows = np.flatnonzero(mask.all(axis=1))
    if full_rows.size:
        kernel_grad[full_rows] = np.tensordot(
            delta[:, full_rows], windows, axes=([0, 2, 3], [0, 2, 3])
        )
    for row in np.flatnonzero(mask.any(axis=1) & ~mask.all(axis=1)):
        cols = np.flatnonzero(mask[row])
        kernel_grad[row, cols] = np.tensordot(
            delta[:, row], windows[:, cols], axes=([0, 1, 2], [0, 2, 3])
        )

    bias_grad = np.zeros_like(state.biases)
    if bias_mask.any():
        bias_grad[bias_mask] = delta[:, bias_mask].sum(axis=(0, 2, 3))

    input_grad = None
    if route_error:
        padded = np.pad(delta, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        back_windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
        flipped = state.kernels[:, :, ::-1, ::-1]
        input_grad = np.tensordot(back_windows, flipped, axes=([1, 4, 5], [0, 2, 3]))
        input_grad = np.ascontiguousarray(input_grad.transpose(0, 3, 1, 2))
        if single:
            input_grad = input_grad[0]

    return ConvGradients(
        input_grad=input_grad,
        kernel_grad=kernel_grad,
        bias_grad=bias_grad,
        slot_mask=mask,
        bias_mask=bias_mask,
    )


# =============================================================================
# MEAN POOLING
# =============================================================================

def meanpool_forward(inp: np.ndarray, factor: int) -> np.ndarray:
    """
    Mean of every factor x factor block over the last two axes.

    Examples:
        >>> meanpool_forward(np.arange(4.0).reshape(1, 2, 2), 2)
        array([[[1.5]]])
    """
    if factor < 1:
        raise ShapeError(f"Pool factor must be >= 1, got {factor}")
    h, w = inp.shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"Extent {h}x{w} is not divisible by pool factor {factor}")
    blocks = inp.reshape(*inp.shape[:-2], h // factor, factor, w // factor, factor)
    return blocks.mean(axis=(-3, -1)).astype(inp.dtype, copy=False)


def meanpool_backward(
    output_grad: np.ndarray,
    factor: int,
    input_shape: Optional[Tuple[int, ...]] = None,
) -> np.ndarray:
    """Adjoint of meanpool_forward: each input cell gets output_grad / factor^2."""
    if factor < 1:
        raise ShapeError(f"Pool factor must be >= 1, got {factor}")
    if input_shape is not None:
        expected = tuple(input_shape[:-2]) + (input_shape[-2] // factor, input_shape[-1] // factor)
        if input_shape[-2] % factor or input_shape[-1] % factor or output_grad.shape != expected:
            raise ShapeError(
                f"Pool gradient shape {output_grad.shape} does not match input {tuple(input_shape)}"
            )
    spread = np.repeat(np.repeat(output_grad, factor, axis=-2), factor, axis=-1)
    return spread / output_grad.dtype.type(factor * factor)


# =============================================================================
# FULLY CONNECTED
# =============================================================================

def _as_rows(x: np.ndarray, n_in: int) -> Tuple[np.ndarray, bool]:
    if x.ndim == 1:
        rows, single = x[None], True
    else:
        rows, single = x.reshape(x.shape[0], -1), False
    if rows.shape[1] != n_in:
        raise ShapeError(f"Fully-connected layer expects {n_in} inputs, got {rows.shape[1]}")
    return rows, single


def fc_forward(
    weights: np.ndarray,
    bias: np.ndarray,
    inp: np.ndarray,
    activation: str = SIGMOID,
) -> np.ndarray:
    """out = activation(W . input + bias) for a vector or a batch of rows."""
    rows, single = _as_rows(inp, weights.shape[1])
    out = activate(rows @ weights.T + bias, activation)
    return out[0] if single else out


def fc_backward(
    weights: np.ndarray,
    inp: np.ndarray,
    output_grad: np.ndarray,
    outputs: Optional[np.ndarray] = None,
    bias: Optional[np.ndarray] = None,
    activation: str = SIGMOID,
    route_error: bool = True,
) -> FcGradients:
    """
    Adjoint of fc_forward.

    Args:
        weights: [nOut, nIn]
        inp: forward input (vector or batch; batch inputs are flattened)
        output_grad: dLoss/dOutput
        outputs: forward outputs; recomputed from ``bias`` when None
        bias: needed only when ``outputs`` is None
        activation: sigmoid or identity
        route_error: False skips the input gradient

    Returns:
        FcGradients with batch-summed weight and bias gradients
    """
    rows, single = _as_rows(inp, weights.shape[1])
    g = output_grad[None] if output_grad.ndim == 1 else output_grad
    if g.shape != (rows.shape[0], weights.shape[0]):
        raise ShapeError(f"Output gradient shape {output_grad.shape} does not match {weights.shape[0]} outputs")
    if outputs is None:
        if bias is None:
            bias = np.zeros(weights.shape[0], dtype=weights.dtype)
        outputs = fc_forward(weights, bias, rows, activation)
    a = outputs[None] if outputs.ndim == 1 else outputs
    delta = g * activation_derivative(a, activation)

    input_grad = None
    if route_error:
        input_grad = delta @ weights
        input_grad = input_grad[0] if single else input_grad.reshape(inp.shape)
    return FcGradients(
        input_grad=input_grad,
        weight_grad=delta.T @ rows,
        bias_grad=delta.sum(axis=0),
    )


# =============================================================================
# LOSS
# =============================================================================

def one_hot(labels: np.ndarray, classes: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeError(f"Labels must lie in [0, {classes})")
    out = np.zeros((labels.size, classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def mse_loss(predicted: np.ndarray, target: np.ndarray) -> LossResult:
    """
    Squared error loss: 0.5 * sum((pred - target)^2), gradient pred - target.

    Examples:
        >>> mse_loss(np.zeros(10), np.eye(10)[0]).loss
        0.5
    """
    if predicted.shape != target.shape:
        raise ShapeError(f"Prediction shape {predicted.shape} does not match target {target.shape}")
    diff = predicted - target
    return LossResult(loss=float(0.5 * np.sum(diff * diff)), grad=diff)


def batch_mse_loss(predicted: np.ndarray, targets: np.ndarray) -> LossResult:
    """Mean of the per-sample losses; gradient (pred - target) / N."""
    if predicted.ndim != 2:
        raise ShapeError(f"Batch predictions must be [N, C], got {predicted.shape}")
    result = mse_loss(predicted, targets)
    n = predicted.shape[0]
    return LossResult(loss=result.loss / n, grad=result.grad / predicted.dtype.type(n))


# =============================================================================
# INITIALIZATION
# =============================================================================

def uniform_init(
    rng: np.random.Generator,
    shape: Tuple[int, ...],
    fan_in: int,
    fan_out: int,
    dtype=np.float32,
) -> np.ndarray:
    """Uniform in [-r, r] with r = sqrt(6 / (fanIn + fanOut))."""
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape).astype(dtype)


# =============================================================================
# COST CHARGES
# =============================================================================
# Each function records the work of one arithmetic kernel for ``n`` samples.
# A MAC is one multiply-accumulate; bias adds are folded into the conv/fc
# accumulators, pooling sums count one MAC per input cell.

def charge_conv_forward(ledger: CostLedger, layer: int, spec: LayerSpec, n: int) -> None:
    in_maps, h, w = spec.in_shape
    out_maps, oh, ow = spec.out_shape
    kh, kw = spec.kernel
    ledger.add_macs(layer, Phase.FORWARD_PROP, n * out_maps * oh * ow * kh * kw * in_maps)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_READ, n * in_maps * h * w)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_WRITE, n * out_maps * oh * ow)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.WEIGHT_READ, n * (spec.weight_count + spec.bias_count))


def charge_conv_backward(
    ledger: CostLedger,
    layer: int,
    spec: LayerSpec,
    n: int,
    slot_mask: np.ndarray,
    bias_mask: np.ndarray,
    route_error: bool,
) -> None:
    in_maps, h, w = spec.in_shape
    out_maps, oh, ow = spec.out_shape
    kh, kw = spec.kernel
    _charge_activation_derivative(ledger, layer, spec, n)

    if route_error:
        ledger.add_macs(layer, Phase.BACKPROP_ERROR, n * out_maps * oh * ow * kh * kw * in_maps)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_READ, n * out_maps * oh * ow)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.WEIGHT_READ, n * spec.weight_count)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_WRITE, n * in_maps * h * w)

    slots = int(np.count_nonzero(slot_mask))
    rows = int(np.count_nonzero(np.asarray(slot_mask).any(axis=1)))
    biases = int(np.count_nonzero(bias_mask))
    ledger.add_macs(layer, Phase.WEIGHT_GRADIENT, n * (slots * oh * ow * kh * kw + biases * oh * ow))
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.ACTIVATION_READ, n * (slots * h * w + rows * oh * ow))
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.WEIGHT_READ, n * (slots * kh * kw + biases))
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.WEIGHT_WRITE, n * (slots * kh * kw + biases))


def charge_pool_forward(ledger: CostLedger, layer: int, spec: LayerSpec, n: int) -> None:
    ledger.add_macs(layer, Phase.FORWARD_PROP, n * spec.in_size)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_READ, n * spec.in_size)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_WRITE, n * spec.out_size)


def charge_pool_backward(ledger: CostLedger, layer: int, spec: LayerSpec, n: int) -> None:
    ledger.add_macs(layer, Phase.BACKPROP_ERROR, n * spec.in_size)
    ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_READ, n * spec.out_size)
    ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_WRITE, n * spec.in_size)


def charge_fc_forward(ledger: CostLedger, layer: int, spec: LayerSpec, n: int) -> None:
    ledger.add_macs(layer, Phase.FORWARD_PROP, n * spec.size * spec.in_size)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_READ, n * spec.in_size)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.ACTIVATION_WRITE, n * spec.size)
    ledger.add_mem(layer, Phase.FORWARD_PROP, MemEvent.WEIGHT_READ, n * (spec.weight_count + spec.bias_count))


def charge_fc_backward(ledger: CostLedger, layer: int, spec: LayerSpec, n: int, route_error: bool) -> None:
    _charge_activation_derivative(ledger, layer, spec, n)
    if route_error:
        ledger.add_macs(layer, Phase.BACKPROP_ERROR, n * spec.size * spec.in_size)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_READ, n * spec.size)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.WEIGHT_READ, n * spec.weight_count)
        ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_WRITE, n * spec.in_size)

    params = spec.weight_count + spec.bias_count
    ledger.add_macs(layer, Phase.WEIGHT_GRADIENT, n * params)
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.ACTIVATION_READ, n * (spec.in_size + spec.size))
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.WEIGHT_READ, n * params)
    ledger.add_mem(layer, Phase.WEIGHT_GRADIENT, MemEvent.WEIGHT_WRITE, n * params)


def charge_loss(ledger: CostLedger, layer: int, outputs: int, n: int) -> None:
    ledger.add_macs(layer, Phase.ERROR_AND_LOSS, n * outputs)
    ledger.add_mem(layer, Phase.ERROR_AND_LOSS, MemEvent.ACTIVATION_READ, n * outputs)
    ledger.add_mem(layer, Phase.ERROR_AND_LOSS, MemEvent.ACTIVATION_WRITE, n * outputs)


def charge_weight_update(ledger: CostLedger, layer: int, params: int, n: int, batches: int) -> None:
    """One MAC per updated parameter per sample; memory traffic once per batch."""
    ledger.add_macs(layer, Phase.WEIGHT_UPDATE, n * params)
    ledger.add_mem(layer, Phase.WEIGHT_UPDATE, MemEvent.WEIGHT_READ, batches * params)
    ledger.add_mem(layer, Phase.WEIGHT_UPDATE, MemEvent.WEIGHT_WRITE, batches * params)


def _charge_activation_derivative(ledger: CostLedger, layer: int, spec: LayerSpec, n: int) -> None:
    if spec.activation != SIGMOID:
        return
    size = spec.out_size
    ledger.add_macs(layer, Phase.BACKPROP_ERROR, n * size)
    ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_READ, 2 * n * size)
    ledger.add_mem(layer, Phase.BACKPROP_ERROR, MemEvent.ACTIVATION_WRITE, n * size)

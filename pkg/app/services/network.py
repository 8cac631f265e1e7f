"""
Network service.

Runs a LayerSpec stack forward and backward over stacked mini-batches,
charges every arithmetic kernel to a CostLedger, and checks backprop
against central finite differences.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import EVAL_BATCH_SIZE, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP, GRAD_CHECK_TOLERANCE
from app.errors import GradientCheckError, ShapeError
from app.services import tensor_core as tc
from app.services.ledger import CostLedger
from app.services.tensor_core import (
    ConvGradients,
    ConvLayerState,
    FcGradients,
    FcLayerState,
    LayerSpec,
)

logger = logging.getLogger(__name__)

LayerState = Optional[Union[ConvLayerState, FcLayerState]]
LayerGradients = Union[ConvGradients, FcGradients]
MaskMap = Optional[Dict[int, np.ndarray]]


def init_states(layers: Sequence[LayerSpec], seed: int, dtype=np.float32) -> List[LayerState]:
    """Seeded uniform kernels and weights, zero biases; pooling layers hold None."""
    rng = np.random.default_rng(seed)
    states: List[LayerState] = []
    for spec in layers:
        if spec.is_conv:
            out_maps, in_maps = spec.out_shape[0], spec.in_shape[0]
            kh, kw = spec.kernel
            kernels = tc.uniform_init(
                rng, (out_maps, in_maps, kh, kw), in_maps * kh * kw, out_maps * kh * kw, dtype
            )
            states.append(ConvLayerState(kernels, np.zeros(out_maps, dtype=dtype)))
        elif spec.is_dense:
            weights = tc.uniform_init(rng, (spec.size, spec.in_size), spec.in_size, spec.size, dtype)
            states.append(FcLayerState(weights, np.zeros(spec.size, dtype=dtype)))
        else:
            states.append(None)
    return states


@dataclass
class ForwardTrace:
    inputs: List[np.ndarray] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)

    @property
    def prediction(self) -> np.ndarray:
        return self.outputs[-1]


class Network:
    """A layer stack with its mutable parameter states."""

    def __init__(self, layers: Sequence[LayerSpec], states: Sequence[LayerState]):
        self.layers = tuple(layers)
        self.states = list(states)
        if len(self.layers) != len(self.states):
            raise ShapeError(f"{len(self.layers)} layers but {len(self.states)} states")
        for index, (spec, state) in enumerate(zip(self.layers, self.states)):
            if spec.is_conv:
                expected = (spec.out_shape[0], spec.in_shape[0]) + tuple(spec.kernel)
                if not isinstance(state, ConvLayerState) or state.kernels.shape != expected:
                    raise ShapeError(f"Layer {index} needs conv kernels of shape {expected}")
            elif spec.is_dense:
                expected = (spec.size, spec.in_size)
                if not isinstance(state, FcLayerState) or state.weights.shape != expected:
                    raise ShapeError(f"Layer {index} needs weights of shape {expected}")

    @classmethod
    def build(cls, layers: Sequence[LayerSpec], seed: int, dtype=np.float32) -> "Network":
        return cls(layers, init_states(layers, seed, dtype))

    @property
    def dtype(self) -> np.dtype:
        for state in self.states:
            if isinstance(state, ConvLayerState):
                return state.kernels.dtype
            if isinstance(state, FcLayerState):
                return state.weights.dtype
        return np.dtype(np.float32)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.layers[0].in_shape

    @property
    def output_size(self) -> int:
        return self.layers[-1].size

    def copy(self) -> "Network":
        return Network(self.layers, [None if s is None else s.copy() for s in self.states])

    def astype(self, dtype) -> "Network":
        states: List[LayerState] = []
        for state in self.states:
            if isinstance(state, ConvLayerState):
                states.append(ConvLayerState(state.kernels.astype(dtype), state.biases.astype(dtype), state.origin))
            elif isinstance(state, FcLayerState):
                states.append(FcLayerState(state.weights.astype(dtype), state.biases.astype(dtype)))
            else:
                states.append(None)
        return Network(self.layers, states)

    # -------------------------------------------------------------------------
    # Passes
    # -------------------------------------------------------------------------

    def forward(self, x: np.ndarray, ledger: Optional[CostLedger] = None) -> ForwardTrace:
        """
        Forward pass over a stacked batch.

        Args:
            x: [N, maps, H, W] batch matching the first layer's input shape
            ledger: charged with ForwardProp work when given

        Returns:
            ForwardTrace with every layer's input and output
        """
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.input_shape):
            raise ShapeError(f"Input batch {x.shape} does not match network input {self.input_shape}")
        h = np.ascontiguousarray(x, dtype=self.dtype)
        n = h.shape[0]
        trace = ForwardTrace()
        for index, (spec, state) in enumerate(zip(self.layers, self.states)):
            trace.inputs.append(h)
            if spec.is_conv:
                h = tc.conv_layer_forward(state, h, spec.activation)
            elif spec.is_pool:
                h = tc.meanpool_forward(h, spec.size)
            else:
                h = tc.fc_forward(state.weights, state.biases, h.reshape(n, -1), spec.activation)
            trace.outputs.append(h)
            if ledger is not None:
                charge_layer_forward(ledger, index, spec, n)
        return trace

    def backward(
        self,
        trace: ForwardTrace,
        output_grad: np.ndarray,
        masks: MaskMap = None,
        bias_masks: MaskMap = None,
        ledger: Optional[CostLedger] = None,
    ) -> Dict[int, LayerGradients]:
        """
        Backward pass.

        Error is routed into every layer except the first. Conv weight
        gradients follow ``masks`` (default all True).

        Returns:
            layer index -> ConvGradients or FcGradients
        """
        n = output_grad.shape[0]
        g: Optional[np.ndarray] = output_grad
        grads: Dict[int, LayerGradients] = {}
        for index in range(len(self.layers) - 1, -1, -1):
            spec, state = self.layers[index], self.states[index]
            inputs, outputs = trace.inputs[index], trace.outputs[index]
            route = index > 0
            slot_mask, bias_mask = None, None
            if spec.is_conv:
                slot_mask, bias_mask = _layer_masks(spec, index, masks, bias_masks)
                result = tc.conv_layer_backward(
                    state, inputs, g, slot_mask, bias_mask,
                    outputs=outputs, activation=spec.activation, route_error=route,
                )
                grads[index] = result
                g = result.input_grad
            elif spec.is_pool:
                g = tc.meanpool_backward(g, spec.size, inputs.shape) if route else None
            else:
                result = tc.fc_backward(
                    state.weights, inputs, g,
                    outputs=outputs, activation=spec.activation, route_error=route,
                )
                grads[index] = result
                g = result.input_grad
            if ledger is not None:
                charge_layer_backward(ledger, index, spec, n, slot_mask, bias_mask)
        return grads

    def loss_and_gradients(
        self,
        x: np.ndarray,
        targets: np.ndarray,
        masks: MaskMap = None,
        bias_masks: MaskMap = None,
        ledger: Optional[CostLedger] = None,
    ) -> Tuple[float, Dict[int, LayerGradients]]:
        """Forward, mean squared-error loss and backward for one batch."""
        trace = self.forward(x, ledger)
        loss = tc.batch_mse_loss(trace.prediction, targets.astype(self.dtype, copy=False))
        if ledger is not None:
            tc.charge_loss(ledger, len(self.layers) - 1, self.output_size, x.shape[0])
        return loss.loss, self.backward(trace, loss.grad, masks, bias_masks, ledger)

    def predict(self, x: np.ndarray, batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
        chunks = [self.forward(x[start:start + batch_size]).prediction for start in range(0, len(x), batch_size)]
        return np.concatenate(chunks) if chunks else np.zeros((0, self.output_size), dtype=self.dtype)

    def accuracy(self, x: np.ndarray, labels: np.ndarray, batch_size: int = EVAL_BATCH_SIZE) -> float:
        """Percentage of samples whose arg-max output equals the label."""
        if len(labels) == 0:
            return 0.0
        predicted = np.argmax(self.predict(x, batch_size), axis=1)
        return float(100.0 * np.mean(predicted == labels))

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for state in self.states:
            if isinstance(state, ConvLayerState):
                digest.update(state.kernels.tobytes())
                digest.update(state.biases.tobytes())
            elif isinstance(state, FcLayerState):
                digest.update(state.weights.tobytes())
                digest.update(state.biases.tobytes())
        return digest.hexdigest()


def sgd_step(network: Network, grads: Dict[int, LayerGradients], learning_rate: float) -> None:
    """Plain SGD with no policy: every computed gradient is applied."""
    for index, g in grads.items():
        state = network.states[index]
        if isinstance(g, FcGradients):
            sgd_step_dense(state, g, learning_rate)
            continue
        lr = state.kernels.dtype.type(learning_rate)
        if g.slot_mask.any():
            state.kernels[g.slot_mask] -= lr * g.kernel_grad[g.slot_mask]
        if g.bias_mask.any():
            state.biases[g.bias_mask] -= lr * g.bias_grad[g.bias_mask]


def sgd_step_dense(state: FcLayerState, grads: FcGradients, learning_rate: float) -> None:
    lr = state.weights.dtype.type(learning_rate)
    state.weights -= lr * grads.weight_grad
    state.biases -= lr * grads.bias_grad


def _layer_masks(
    spec: LayerSpec,
    index: int,
    masks: MaskMap,
    bias_masks: MaskMap,
) -> Tuple[np.ndarray, np.ndarray]:
    slot_mask = None if masks is None else masks.get(index)
    if slot_mask is None:
        slot_mask = np.ones((spec.out_shape[0], spec.in_shape[0]), dtype=bool)
    bias_mask = None if bias_masks is None else bias_masks.get(index)
    if bias_mask is None:
        bias_mask = np.asarray(slot_mask, dtype=bool).any(axis=1)
    return np.asarray(slot_mask, dtype=bool), np.asarray(bias_mask, dtype=bool)


# =============================================================================
# COST CHARGING
# =============================================================================

def charge_layer_forward(ledger: CostLedger, index: int, spec: LayerSpec, n: int) -> None:
    if spec.is_conv:
        tc.charge_conv_forward(ledger, index, spec, n)
    elif spec.is_pool:
        tc.charge_pool_forward(ledger, index, spec, n)
    else:
        tc.charge_fc_forward(ledger, index, spec, n)


def charge_layer_backward(
    ledger: CostLedger,
    index: int,
    spec: LayerSpec,
    n: int,
    slot_mask: Optional[np.ndarray] = None,
    bias_mask: Optional[np.ndarray] = None,
) -> None:
    route = index > 0
    if spec.is_conv:
        if slot_mask is None:
            slot_mask = np.ones((spec.out_shape[0], spec.in_shape[0]), dtype=bool)
        if bias_mask is None:
            bias_mask = slot_mask.any(axis=1)
        tc.charge_conv_backward(ledger, index, spec, n, slot_mask, bias_mask, route)
    elif spec.is_pool:
        if route:
            tc.charge_pool_backward(ledger, index, spec, n)
    else:
        tc.charge_fc_backward(ledger, index, spec, n, route)


def updated_parameter_count(
    spec: LayerSpec,
    slot_mask: Optional[np.ndarray] = None,
    bias_mask: Optional[np.ndarray] = None,
) -> int:
    if spec.is_conv:
        if slot_mask is None:
            return spec.weight_count + spec.bias_count
        if bias_mask is None:
            bias_mask = slot_mask.any(axis=1)
        kh, kw = spec.kernel
        return int(np.count_nonzero(slot_mask)) * kh * kw + int(np.count_nonzero(bias_mask))
    return spec.weight_count + spec.bias_count


def charge_update(
    ledger: CostLedger,
    layers: Sequence[LayerSpec],
    n: int,
    batches: int,
    masks: MaskMap = None,
    bias_masks: MaskMap = None,
) -> None:
    """WeightUpdate work for ``batches`` optimizer steps covering ``n`` samples."""
    for index, spec in enumerate(layers):
        if spec.is_pool:
            continue
        slot_mask = None if masks is None else masks.get(index)
        bias_mask = None if bias_masks is None else bias_masks.get(index)
        params = updated_parameter_count(spec, slot_mask, bias_mask)
        tc.charge_weight_update(ledger, index, params, n, batches)


def charge_training_step(
    ledger: CostLedger,
    layers: Sequence[LayerSpec],
    n: int,
    batches: int,
    masks: MaskMap = None,
    bias_masks: MaskMap = None,
) -> CostLedger:
    """
    Charge the work of training ``n`` samples in ``batches`` steps without
    doing the arithmetic. Matches what forward, loss, backward and update
    record during real training.
    """
    for index, spec in enumerate(layers):
        charge_layer_forward(ledger, index, spec, n)
    tc.charge_loss(ledger, len(layers) - 1, layers[-1].size, n)
    for index in range(len(layers) - 1, -1, -1):
        spec = layers[index]
        slot_mask, bias_mask = (None, None)
        if spec.is_conv:
            slot_mask, bias_mask = _layer_masks(spec, index, masks, bias_masks)
        charge_layer_backward(ledger, index, spec, n, slot_mask, bias_mask)
    charge_update(ledger, layers, n, batches, masks, bias_masks)
    ledger.samples_processed += n
    ledger.batches_processed += batches
    return ledger


# =============================================================================
# GRADIENT CHECK
# =============================================================================

@dataclass
class GradientCheckReport:
    max_relative_error: float
    worst_parameter: str
    parameters_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "max_relative_error": self.max_relative_error,
            "worst_parameter": self.worst_parameter,
            "parameters_checked": self.parameters_checked,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_error(analytic: float, numeric: float, floor: float = GRAD_CHECK_FLOOR) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor compares tiny gradients absolutely."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _checked_parameters(
    network: Network,
    grads: Dict[int, LayerGradients],
) -> Iterator[Tuple[str, np.ndarray, np.ndarray, List[Tuple[int, ...]]]]:
    for index, state in enumerate(network.states):
        g = grads.get(index)
        if isinstance(g, ConvGradients):
            kernel_idx = [
                (o, i, u, v)
                for o, i in zip(*np.nonzero(g.slot_mask))
                for u in range(state.kernels.shape[2])
                for v in range(state.kernels.shape[3])
            ]
            yield f"layer{index}.kernels", state.kernels, g.kernel_grad, kernel_idx
            yield f"layer{index}.biases", state.biases, g.bias_grad, [(o,) for o in np.flatnonzero(g.bias_mask)]
        elif isinstance(g, FcGradients):
            yield f"layer{index}.weights", state.weights, g.weight_grad, list(np.ndindex(state.weights.shape))
            yield f"layer{index}.biases", state.biases, g.bias_grad, list(np.ndindex(state.biases.shape))


def numerical_gradient_check(
    network: Network,
    sample: Tuple[np.ndarray, Union[int, np.ndarray]],
    tolerance: float = GRAD_CHECK_TOLERANCE,
    step: float = GRAD_CHECK_STEP,
    masks: MaskMap = None,
) -> GradientCheckReport:
    """
    Compare backprop against central finite differences for every trainable
    parameter, in 64-bit arithmetic.

    Args:
        network: network to check (a float64 copy is used if needed)
        sample: (image, label or target vector); image [maps, H, W] or [H, W]
        tolerance: pass threshold on the max relative error
        step: finite-difference step
        masks: conv slot masks; masked-out slots are not trainable

    Returns:
        GradientCheckReport

    Raises:
        GradientCheckError: a non-finite value appears, naming the parameter
    """
    net64 = network if network.dtype == np.float64 else network.astype(np.float64)
    image, target = sample
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    x = x[None]
    if np.isscalar(target) or np.ndim(target) == 0:
        t = tc.one_hot(np.array([int(target)]), net64.output_size, dtype=np.float64)
    else:
        t = np.asarray(target, dtype=np.float64).reshape(1, -1)

    def loss(parameter: str) -> float:
        prediction = net64.forward(x).prediction
        if not np.all(np.isfinite(prediction)):
            raise GradientCheckError(parameter)
        return tc.mse_loss(prediction, t).loss

    trace = net64.forward(x)
    if not np.all(np.isfinite(trace.prediction)):
        raise GradientCheckError("forward pass")
    grads = net64.backward(trace, trace.prediction - t, masks)

    worst, worst_name, checked = 0.0, "", 0
    for name, param, analytic, indices in _checked_parameters(net64, grads):
        for idx in indices:
            label = f"{name}[{', '.join(str(int(v)) for v in idx)}]"
            original = param[idx]
            param[idx] = original + step
            plus = loss(label)
            param[idx] = original - step
            minus = loss(label)
            param[idx] = original
            a = float(analytic[idx])
            if not np.isfinite(a):
                raise GradientCheckError(label, "non-finite analytic gradient")
            numeric = (plus - minus) / (2 * step)
            err = relative_error(a, numeric)
            checked += 1
            if err > worst or not worst_name:
                worst, worst_name = err, label

    report = GradientCheckReport(worst, worst_name, checked, tolerance)
    logger.info(
        f"Gradient check: {checked} parameters, max relative error {worst:.3e} at {worst_name} "
        f"({'pass' if report.passed else 'FAIL'})"
    )
    return report

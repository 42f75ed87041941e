from .layers import (
    activation_backward,
    activation_forward,
    bce_grad,
    bce_loss,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    glorot_uniform_init,
    maxpool2d_backward,
    maxpool2d_forward,
    sigmoid,
)
from .network import Network, Params, count_params, init_params, network_backward, network_forward, sgd_step
from .spec import (
    PRESETS,
    Activation,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    NetworkSpec,
    QuantumLayer,
    build_desk_architectures,
    build_reference_architectures,
    layer_param_count,
    to_hybrid,
)

from .arch import NO_SYMMETRY, LanguageModel, SymmetrySpec, build_lstm_lm, build_small_cnn, build_wrn
from .layers import (
    BatchNorm2d, Conv2d, Dropout, Embedding, GlobalAvgPool, Layer, Linear, MaxPool2d, ReLU,
    Residual, Sequential, Sigmoid,
)
from .losses import cross_entropy, cross_entropy_with_grad, log_softmax, mse_with_grad
from .lstm import GATES, LSTMLayer, lstm_cell_backward, lstm_cell_forward
from .model import Model, backward, count_params, forward
from .optim import SGD, sgd_step
from .params import DenseWeight, ParamGroup, SymmetricWeight, make_weight

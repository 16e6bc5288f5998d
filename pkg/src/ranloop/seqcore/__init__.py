from .tensor import (Tensor, add, mul, matmul, exp, log, sqrt, tanh, relu,
                     softmax, tsum, tmean, reshape, transpose, concat,
                     take_rows, dropout, power, grad_check, as_tensor)
from .layers import (AttentionConfig, Module, Linear, Embedding, LayerNorm,
                     FeedForward, MultiHeadAttention, EncoderLayer, DecoderLayer,
                     attention, probsparse_attention, sparsity_scores,
                     select_dominant, sinusoidal_encoding, causal_mask,
                     cross_entropy, mse, halve_length)
from .optim import Adam, minibatches
from .serialize import save_params, load_params, save_module, load_into_module, ModelFileError

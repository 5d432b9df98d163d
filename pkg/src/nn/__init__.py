from .tensor import Tensor, Parameter, no_grad, numeric_gradient
from .layers import (Module, Dense, GraphAttention, TreeConv, Adjacency, dense_forward, dropout, gaussian_nll,
                     graph_attention_layer, graph_readout, tree_conv_layer, dynamic_pool)
from .optim import Adam
from .checkpoint import save_checkpoint, read_checkpoint, state_dict, load_state_dict

"""Dense-tensor numeric core: convolutions, batch norm, pooling, dense,
softmax/cross-entropy, exact backprop, and Adam."""


class ShapeMismatch(Exception):
    pass


class CacheMismatch(Exception):
    pass

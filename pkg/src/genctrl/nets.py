"""Small fully connected networks with hand-written backprop and Adam."""

import numpy as np

__all__ = ["elu", "elu_grad", "Mlp", "Adam", "actor_network", "critic_network"]


def elu(z):
    return np.maximum(z, 0) + np.expm1(np.minimum(z, 0))


def elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def _elu_grad_from_output(h):
    # for z > 0 the output exceeds 0 so h + 1 > 1; otherwise h + 1 = e^z <= 1
    return np.minimum(h + 1, 1)


class Mlp:
    """ELU hidden layers and a tanh-scaled or linear output layer.

    ``concat_at`` names the layer whose input is extended by an auxiliary
    vector (the action, for a critic); ``aux_width`` is its width.
    """

    def __init__(self, layer_sizes, output="linear", scale=1.0, concat_at=None,
                 aux_width=0, rng=None, final_init=3e-3, dtype=np.float64):
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.layer_sizes = [int(n) for n in layer_sizes]
        self.output = output
        self.scale = float(scale)
        self.concat_at = concat_at
        self.aux_width = int(aux_width) if concat_at is not None else 0
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng() if rng is None else rng
        shapes = []
        n_layers = len(self.layer_sizes) - 1
        for l in range(n_layers):
            fan_in = self.layer_sizes[l] + (self.aux_width if l == concat_at else 0)
            shapes.append((fan_in, self.layer_sizes[l + 1]))
        self._allocate(shapes)
        for l, (fan_in, fan_out) in enumerate(shapes):
            lim = final_init if l == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.weights[l][...] = rng.uniform(-lim, lim, size=(fan_in, fan_out))
            self.biases[l][...] = rng.uniform(-lim, lim, size=fan_out)

    def _allocate(self, shapes):
        # all parameters live in one flat buffer; weights and biases are views into it
        sizes = [a * b for a, b in shapes] + [b for _, b in shapes]
        self.flat = np.zeros(sum(sizes), dtype=self.dtype)
        views, k = [], 0
        for size, shape in zip(sizes, list(shapes) + [(b,) for _, b in shapes]):
            views.append(self.flat[k:k + size].reshape(shape))
            k += size
        self.weights = views[:len(shapes)]
        self.biases = views[len(shapes):]

    @property
    def params(self):
        return self.weights + self.biases

    def set_params(self, values):
        for dst, src in zip(self.params, values):
            dst[...] = src

    def flatten(self, grads):
        return np.concatenate([np.ravel(g) for g in grads])

    def copy(self):
        new = object.__new__(Mlp)
        new.__dict__.update(self.__dict__)
        new._allocate([w.shape for w in self.weights])
        new.flat[:] = self.flat
        return new

    def same_architecture(self, other):
        return (self.layer_sizes == other.layer_sizes and self.concat_at == other.concat_at
                and self.aux_width == other.aux_width and self.output == other.output)

    def forward(self, x, aux=None, cache=False):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x).astype(self.dtype, copy=False)
        if h.shape[1] != self.layer_sizes[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.layer_sizes[0]}")
        if self.concat_at is not None:
            if aux is None:
                raise ValueError("this network needs an auxiliary input")
            aux = np.atleast_2d(np.asarray(aux, dtype=self.dtype))
            if aux.shape[1] != self.aux_width:
                raise ValueError(f"auxiliary width {aux.shape[1]} != {self.aux_width}")
        inputs, pre, post = [], [], []
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if l == self.concat_at:
                h = np.concatenate([h, aux], axis=1)
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            if l < last:
                h = elu(z)
                post.append(h)
            elif self.output == "tanh":
                h = self.scale * np.tanh(z)
            else:
                h = z
        out = h[0] if single else h
        if cache:
            return out, (inputs, pre, post)
        return out

    def backward(self, cache, grad_out, param_grads=True):
        """Gradients of sum(grad_out * output) w.r.t. weights, biases, input and aux input.

        Returns ``(param_grads, grad_input, grad_aux)`` with ``param_grads``
        ordered like ``params``.  With ``param_grads=False`` only the input
        gradients are formed, and ``grad_input`` is None.
        """
        inputs, pre, post = cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=self.dtype))
        last = len(self.weights) - 1
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        grad_aux = None
        for l in range(last, -1, -1):
            z = pre[l]
            if l == last:
                if self.output == "tanh":
                    g = g * self.scale * (1 - np.tanh(z) ** 2)
            else:
                g = g * _elu_grad_from_output(post[l])
            if param_grads:
                gw[l] = inputs[l].T @ g
                gb[l] = g.sum(axis=0)
            if l == 0 and self.concat_at != 0 and not param_grads:
                break
            g = g @ self.weights[l].T
            if l == self.concat_at:
                width = g.shape[1] - self.aux_width
                grad_aux = g[:, width:]
                g = g[:, :width]
        if not param_grads:
            return None, None, grad_aux
        return gw + gb, g, grad_aux

    def to_dict(self):
        return {
            "layer_sizes": self.layer_sizes,
            "activations": ["elu"] * (len(self.weights) - 1) + [self.output],
            "output_scale": self.scale,
            "concat_at": self.concat_at,
            "aux_width": self.aux_width,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "dtype": self.dtype.name,
        }

    @classmethod
    def from_dict(cls, d):
        net = object.__new__(cls)
        net.layer_sizes = list(d["layer_sizes"])
        net.output = d["activations"][-1]
        net.scale = float(d["output_scale"])
        net.concat_at = d["concat_at"]
        net.aux_width = int(d["aux_width"])
        net.dtype = np.dtype(d.get("dtype", "float64"))
        weights = [np.array(w, dtype=float) for w in d["weights"]]
        net._allocate([w.shape for w in weights])
        net.set_params(weights + [np.array(b, dtype=float) for b in d["biases"]])
        return net


class Adam:
    """Adam on a flat parameter vector, updated in place."""

    def __init__(self, size, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, dtype=np.float64):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self._tmp = np.zeros(size, dtype=dtype)

    def step(self, flat, grad):
        """Descend along ``grad``, modifying ``flat`` in place."""
        self.t += 1
        tmp = self._tmp
        self.m *= self.b1
        np.multiply(grad, 1 - self.b1, out=tmp)
        self.m += tmp
        self.v *= self.b2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1 - self.b2
        self.v += tmp
        # bias corrections folded into the step size and epsilon
        c2 = np.sqrt(1 - self.b2**self.t)
        step_size = self.lr * c2 / (1 - self.b1**self.t)
        np.sqrt(self.v, out=tmp)
        tmp += self.eps * c2
        np.divide(self.m, tmp, out=tmp)
        tmp *= step_size
        flat -= tmp
        return flat


def actor_network(n_actions, u_max, rng, obs_dim=32, hidden=(400, 300), dtype=np.float64):
    return Mlp([obs_dim, *hidden, n_actions], output="tanh", scale=u_max, rng=rng, dtype=dtype)


def critic_network(n_actions, rng, obs_dim=32, hidden=(400, 300), dtype=np.float64):
    # the action joins the first hidden layer's output at the input of the second hidden layer
    return Mlp([obs_dim, *hidden, 1], output="linear", concat_at=1, aux_width=n_actions,
               rng=rng, dtype=dtype)

use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{he_conv, he_dense, ParamId, ParamSet};
use super::tensor::{Scalar, Tensor};
use crate::rng::CounterRng;

/// Whether a forward pass should accumulate parameter gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    /// Parameters enter the graph as constants.
    Frozen,
}

fn bind<T: Scalar>(g: &mut Graph<T>, params: &ParamSet<T>, id: ParamId, mode: Mode) -> Var {
    match mode {
        Mode::Train => g.param(params, id),
        Mode::Frozen => g.frozen_param(params, id),
    }
}

/// Square convolution with "same" padding for odd kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        rng: &mut CounterRng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
    ) -> Self {
        let w = params.add(format!("{name}.weight"), he_conv(rng, cout, cin, k));
        let b = params.add(format!("{name}.bias"), Tensor::zeros([1, cout, 1, 1]));
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>, x: Var, mode: Mode) -> Var {
        let w = bind(g, params, self.w, mode);
        let b = bind(g, params, self.b, mode);
        g.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<T: Scalar>(
        params: &mut ParamSet<T>,
        rng: &mut CounterRng,
        name: &str,
        inp: usize,
        out: usize,
    ) -> Self {
        let w = params.add(format!("{name}.weight"), he_dense(rng, out, inp));
        let b = params.add(format!("{name}.bias"), Tensor::zeros([1, out, 1, 1]));
        Self { w, b }
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamSet<T>, x: Var, mode: Mode) -> Var {
        let w = bind(g, params, self.w, mode);
        let b = bind(g, params, self.b, mode);
        g.linear(x, w, b)
    }
}

//! Layer helpers built on [`Graph`] ops.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;

/// Negative-side slope of the leaky rectifier used throughout the network.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Weight/bias pair of one convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

/// Weights of a two-convolution residual block; `proj` is the 1x1 skip
/// projection used when input and output channel counts differ.
#[derive(Debug, Clone, Copy)]
pub struct ResidualVars {
    pub first: ConvVars,
    pub second: ConvVars,
    pub proj: Option<ConvVars>,
}

/// Stride-1 dilated 3x3 (or any odd k) conv with "same" zero padding.
pub fn conv2d_same<T: Real>(g: &mut Graph<T>, x: Var, c: ConvVars, dilation: usize) -> Result<Var> {
    let k = g.shape(c.weight)[2];
    g.conv2d(x, c.weight, c.bias, 1, dilation, dilation * (k - 1) / 2)
}

pub fn leaky<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    g.leaky_relu(x, T::of(LEAKY_SLOPE))
}

/// `x + conv(lrelu(conv(x)))`, both convs dilated by `dilation`.
pub fn residual_block2d<T: Real>(g: &mut Graph<T>, x: Var, block: &ResidualVars, dilation: usize) -> Result<Var> {
    let cin = g.shape(x)[0];
    let cout = g.shape(block.second.weight)[0];
    let skip = match block.proj {
        Some(p) => g.conv2d(x, p.weight, p.bias, 1, 1, 0)?,
        None if cin == cout => x,
        None => {
            return Err(Error::shape(format!(
                "residual block maps {cin} to {cout} channels without a projection"
            )))
        }
    };
    let h = conv2d_same(g, x, block.first, dilation)?;
    let h = leaky(g, h);
    let h = conv2d_same(g, h, block.second, dilation)?;
    g.add(h, skip)
}

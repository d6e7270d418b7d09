use crate::autograd::Var;
use crate::error::Result;
use crate::layers::{add, BatchNorm, Context, Conv, Layer, Relu};

/// Pre-activation residual block on an unchanged active set:
/// `x + SSC(ReLU(BN(SSC(ReLU(BN(x))))))`.
pub struct ResidualBlock {
    pub bn1: BatchNorm,
    pub conv1: Conv,
    pub bn2: BatchNorm,
    pub conv2: Conv,
}

impl Layer for ResidualBlock {
    fn kind(&self) -> &'static str {
        "res"
    }

    fn forward(&self, x: Var, cx: &mut Context) -> Result<Var> {
        let h = self.bn1.forward(x, cx)?;
        let h = Relu.forward(h, cx)?;
        let h = self.conv1.forward(h, cx)?;
        let h = self.bn2.forward(h, cx)?;
        let h = Relu.forward(h, cx)?;
        let h = self.conv2.forward(h, cx)?;
        add(cx, x, h)
    }
}

//! Graph convolution: `sigma(A_hat * H * W_g)`, where `g` is the node's group.

use crate::autodiff::{Tape, Var};
use crate::error::Result;

use super::{LayerArgs, LayerInput, ParamKind};

pub(super) fn layer(tape: &mut Tape, args: &LayerArgs<'_>, input: LayerInput<'_>, vars: &[Var]) -> Result<Var> {
    let adj = args.ctx.adjacency();
    let (f_in, f_out) = args.spec.layer_dims(args.layer);
    let weights: Vec<Var> = (0..args.spec.groups())
        .map(|g| args.param(vars, g, 0, ParamKind::Weight))
        .collect();
    let mut outs = Vec::with_capacity(weights.len());
    match input {
        // Widening layer: propagate once, then apply each group's weights.
        LayerInput::Hidden(h) if f_in < f_out => {
            let p = tape.spmm(adj, h)?;
            for &w in &weights {
                outs.push(tape.matmul(p, w)?);
            }
        }
        _ => {
            for &w in &weights {
                let z = input.times(tape, w)?;
                outs.push(tape.spmm(adj, z)?);
            }
        }
    }
    let merged = args.merge_nodes(tape, &outs)?;
    args.finish(tape, merged)
}

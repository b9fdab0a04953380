//! GraphSAGE with the mean aggregator: `sigma(W_g [h_v | mean_{u in N(v)} h_u])`.
//! Isolated nodes aggregate to the zero vector.

use crate::autodiff::{Tape, Var};
use crate::error::Result;

use super::{LayerArgs, LayerInput, ParamKind};

pub(super) fn layer(tape: &mut Tape, args: &LayerArgs<'_>, input: LayerInput<'_>, vars: &[Var]) -> Result<Var> {
    let concat = match input {
        LayerInput::Features(_) => None,
        LayerInput::Hidden(h) => {
            let m = tape.spmm(args.ctx.mean_adjacency(), h)?;
            Some(tape.concat_cols(h, m)?)
        }
    };
    let mut outs = Vec::with_capacity(args.spec.groups());
    for g in 0..args.spec.groups() {
        let w = args.param(vars, g, 0, ParamKind::Weight);
        let wt = tape.transpose(w)?;
        outs.push(match concat {
            Some(c) => tape.matmul(c, wt)?,
            None => tape.spmm(args.ctx.sage_input(), wt)?,
        });
    }
    let merged = args.merge_nodes(tape, &outs)?;
    args.finish(tape, merged)
}

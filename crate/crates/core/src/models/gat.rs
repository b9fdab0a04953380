//! Graph attention over `N(k) + {k}`.
//!
//! For target `k` in group `g`, `e_kj = LeakyReLU(a_g . [W_g h_k | W_g h_j])`,
//! the coefficients are the softmax of `e_k.` over the in-edges of `k`, and
//! the output is `sigma(sum_j alpha_kj W_g h_j)`.

use std::sync::Arc;

use crate::autodiff::{Activation, Tape, Var};
use crate::error::Result;
use crate::stratify::DegreePartition;

use super::{GraphContext, LayerArgs, LayerInput, ModelWeights, ParamKind};

/// Softmax-normalised attention of one head, plus each group's `H * W_g`.
fn attention(
    tape: &mut Tape,
    args: &LayerArgs<'_>,
    input: LayerInput<'_>,
    vars: &[Var],
    head: usize,
) -> Result<(Var, Vec<Var>)> {
    let edges = args.ctx.attention_edges();
    let (_, f_out) = args.spec.layer_dims(args.layer);
    let sources: Arc<[usize]> = edges.sources().into();
    let targets: Arc<[usize]> = edges.targets().into();
    let leaky = Activation::LeakyRelu {
        slope: args.spec.leaky_slope,
    };
    let mut z = Vec::with_capacity(args.spec.groups());
    let mut scores = Vec::with_capacity(args.spec.groups());
    for g in 0..args.spec.groups() {
        let w = args.param(vars, g, head, ParamKind::Weight);
        let a = args.param(vars, g, head, ParamKind::Attention);
        let zg = input.times(tape, w)?;
        let a_target = tape.slice_rows(a, 0, f_out)?;
        let a_source = tape.slice_rows(a, f_out, f_out)?;
        let s_target = tape.matmul(zg, a_target)?;
        let s_source = tape.matmul(zg, a_source)?;
        let e_target = tape.gather_rows(s_target, &targets)?;
        let e_source = tape.gather_rows(s_source, &sources)?;
        let e = tape.add(e_target, e_source)?;
        scores.push(tape.activation(e, leaky)?);
        z.push(zg);
    }
    let e = match (scores.as_slice(), args.partition) {
        ([single], _) => *single,
        ([low, high], Some(p)) => {
            let edge_low: Arc<[bool]> = targets.iter().map(|&k| p.is_low(k)).collect();
            tape.row_merge(&edge_low, *low, *high)?
        }
        _ => unreachable!("grouped layers always carry a partition"),
    };
    let alpha = tape.segment_softmax(e, edges)?;
    Ok((alpha, z))
}

pub(super) fn layer(tape: &mut Tape, args: &LayerArgs<'_>, input: LayerInput<'_>, vars: &[Var]) -> Result<Var> {
    let edges = args.ctx.attention_edges();
    let heads = args.spec.heads();
    let mut head_outs = Vec::with_capacity(heads);
    for head in 0..heads {
        let (alpha, z) = attention(tape, args, input, vars, head)?;
        let mut outs = Vec::with_capacity(z.len());
        for zg in z {
            outs.push(tape.edge_aggregate(alpha, zg, edges)?);
        }
        head_outs.push(args.merge_nodes(tape, &outs)?);
    }
    let mut out = head_outs[0];
    if args.activation.is_some() {
        for &h in &head_outs[1..] {
            out = tape.concat_cols(out, h)?;
        }
    } else if heads > 1 {
        for &h in &head_outs[1..] {
            out = tape.add(out, h)?;
        }
        out = tape.scale(out, 1.0 / heads as f64)?;
    }
    args.finish(tape, out)
}

/// First-layer attention coefficients of one head, one per edge of
/// [`GraphContext::attention_edges`].
pub fn attention_coefficients(
    weights: &ModelWeights,
    ctx: &GraphContext,
    partition: Option<&DegreePartition>,
    head: usize,
) -> Result<Vec<f64>> {
    let spec = weights.spec();
    let mut tape = Tape::new();
    let vars: Vec<Var> = weights.params().iter().map(|p| tape.constant(p.clone())).collect();
    let args = LayerArgs {
        spec,
        ctx,
        partition: if spec.variant.is_grouped() { partition } else { None },
        layer: 0,
        activation: None,
    };
    super::check_partition(spec, ctx, partition)?;
    let (alpha, _) = attention(&mut tape, &args, LayerInput::Features(ctx.features()), &vars, head)?;
    Ok(tape.value(alpha)?.data().to_vec())
}

//! Unrolling cells over whole sequences.

use super::cells::{Cell, CellState};
use super::matrix::check_len;
use crate::error::{Error, Result};

/// Hidden states, one per input position.
pub type States = Vec<Vec<f64>>;

fn check_inputs(cell: &Cell, inputs: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Empty("input sequence".into()));
    }
    for x in inputs {
        check_len("sequence input", x.len(), cell.input_dim())?;
    }
    Ok(())
}

/// Runs `cell` left to right and returns the full state after every step.
pub fn run_sequence_states(cell: &Cell, inputs: &[Vec<f64>], init: Option<&CellState>) -> Result<Vec<CellState>> {
    cell.validate()?;
    check_inputs(cell, inputs)?;
    let mut state = match init {
        Some(s) => {
            cell.check_state(s)?;
            s.clone()
        }
        None => cell.zero_state(),
    };
    let mut out = Vec::with_capacity(inputs.len());
    for x in inputs {
        state = cell.step(x, &state);
        out.push(state.clone());
    }
    Ok(out)
}

/// Hidden state after every step, starting from `init` (zeros when `None`).
pub fn run_sequence(cell: &Cell, inputs: &[Vec<f64>], init: Option<&CellState>) -> Result<Vec<Vec<f64>>> {
    Ok(run_sequence_states(cell, inputs, init)?
        .into_iter()
        .map(|s| s.h)
        .collect())
}

/// Forward run over `inputs` and backward run over the reversed inputs.
///
/// Backward states are re-aligned to input positions: `backward[t]` is the
/// backward cell's state after consuming `inputs[T-1..=t]`, so `backward[0]`
/// is its final state.
pub fn run_bidirectional(fwd: &Cell, bwd: &Cell, inputs: &[Vec<f64>]) -> Result<(States, States)> {
    let forward = run_sequence(fwd, inputs, None)?;
    let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
    let mut backward = run_sequence(bwd, &reversed, None)?;
    backward.reverse();
    Ok((forward, backward))
}

//! LSTM and binary Tree-LSTM cells recorded on the tape.

use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tape::{Tape, ValueId};
use super::DiffError;

/// A recurrent hidden/cell pair.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: ValueId,
    pub c: ValueId,
}

impl CellState {
    /// A fresh all-zero state of width `d`.
    pub fn zeros(tape: &mut Tape, d: usize) -> Self {
        CellState {
            h: tape.zeros(d),
            c: tape.zeros(d),
        }
    }
}

fn lookup(set: &ParamSet, name: &str) -> Result<ParamId, DiffError> {
    set.id_of(name).ok_or_else(|| DiffError::Graph {
        reason: format!("parameter `{name}` is not registered"),
    })
}

/// Parameters of a standard LSTM cell. Gate order is input, forget,
/// output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
}

impl LstmParams {
    pub const GATES: [&'static str; 4] = ["i", "f", "o", "g"];

    /// Registers freshly initialized weights under `prefix`.
    ///
    /// `w` matrices are `d x d_in`, `u` matrices `d x d`, biases length `d`.
    pub fn init(
        set: &mut ParamSet,
        prefix: &str,
        d_in: usize,
        d: usize,
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, DiffError> {
        let mut w = [ParamId::default(); 4];
        let mut u = [ParamId::default(); 4];
        let mut b = [ParamId::default(); 4];
        for (slot, gate) in Self::GATES.iter().enumerate() {
            w[slot] = set.init_uniform(&format!("{prefix}.w.{gate}"), &[d, d_in], init_range, rng)?;
            u[slot] = set.init_uniform(&format!("{prefix}.u.{gate}"), &[d, d], init_range, rng)?;
            b[slot] = set.init_uniform(&format!("{prefix}.b.{gate}"), &[d], init_range, rng)?;
        }
        Ok(LstmParams { w, u, b })
    }

    /// Finds previously registered weights by name, e.g. after loading a
    /// checkpoint.
    pub fn find(set: &ParamSet, prefix: &str) -> Result<Self, DiffError> {
        let mut w = [ParamId::default(); 4];
        let mut u = [ParamId::default(); 4];
        let mut b = [ParamId::default(); 4];
        for (slot, gate) in Self::GATES.iter().enumerate() {
            w[slot] = lookup(set, &format!("{prefix}.w.{gate}"))?;
            u[slot] = lookup(set, &format!("{prefix}.u.{gate}"))?;
            b[slot] = lookup(set, &format!("{prefix}.b.{gate}"))?;
        }
        Ok(LstmParams { w, u, b })
    }
}

/// Parameters of a binary Tree-LSTM cell. Gate order is input, left
/// forget, right forget, output, candidate; `u` matrices act on the
/// concatenated child hidden states.
#[derive(Debug, Clone, Copy)]
pub struct TreeLstmParams {
    pub w: [ParamId; 5],
    pub u: [ParamId; 5],
    pub b: [ParamId; 5],
}

impl TreeLstmParams {
    pub const GATES: [&'static str; 5] = ["i", "fl", "fr", "o", "g"];

    /// Registers freshly initialized weights under `prefix`.
    ///
    /// `w` matrices are `d x d_in`, `u` matrices `d x 2d`, biases length `d`.
    pub fn init(
        set: &mut ParamSet,
        prefix: &str,
        d_in: usize,
        d: usize,
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, DiffError> {
        let mut w = [ParamId::default(); 5];
        let mut u = [ParamId::default(); 5];
        let mut b = [ParamId::default(); 5];
        for (slot, gate) in Self::GATES.iter().enumerate() {
            w[slot] = set.init_uniform(&format!("{prefix}.w.{gate}"), &[d, d_in], init_range, rng)?;
            u[slot] =
                set.init_uniform(&format!("{prefix}.u.{gate}"), &[d, 2 * d], init_range, rng)?;
            b[slot] = set.init_uniform(&format!("{prefix}.b.{gate}"), &[d], init_range, rng)?;
        }
        Ok(TreeLstmParams { w, u, b })
    }

    /// Finds previously registered weights by name.
    pub fn find(set: &ParamSet, prefix: &str) -> Result<Self, DiffError> {
        let mut w = [ParamId::default(); 5];
        let mut u = [ParamId::default(); 5];
        let mut b = [ParamId::default(); 5];
        for (slot, gate) in Self::GATES.iter().enumerate() {
            w[slot] = lookup(set, &format!("{prefix}.w.{gate}"))?;
            u[slot] = lookup(set, &format!("{prefix}.u.{gate}"))?;
            b[slot] = lookup(set, &format!("{prefix}.b.{gate}"))?;
        }
        Ok(TreeLstmParams { w, u, b })
    }
}

fn preactivation(
    tape: &mut Tape,
    set: &ParamSet,
    w: ParamId,
    x: ValueId,
    u: ParamId,
    h: ValueId,
    b: ParamId,
) -> Result<ValueId, DiffError> {
    let wx = tape.matvec(set, w, x)?;
    let uh = tape.matvec(set, u, h)?;
    let sum = tape.add(wx, uh)?;
    let bias = tape.param(set, b);
    tape.add(sum, bias)
}

/// One step of the standard LSTM recurrence.
pub fn lstm_cell(
    tape: &mut Tape,
    set: &ParamSet,
    p: &LstmParams,
    x: ValueId,
    prev: CellState,
) -> Result<CellState, DiffError> {
    let pre = |tape: &mut Tape, slot: usize| {
        preactivation(tape, set, p.w[slot], x, p.u[slot], prev.h, p.b[slot])
    };
    let pi = pre(tape, 0)?;
    let i = tape.sigmoid(pi)?;
    let pf = pre(tape, 1)?;
    let f = tape.sigmoid(pf)?;
    let po = pre(tape, 2)?;
    let o = tape.sigmoid(po)?;
    let pg = pre(tape, 3)?;
    let g = tape.tanh(pg)?;
    let fc = tape.mul(f, prev.c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(CellState { h, c })
}

/// One step of the binary Tree-LSTM, combining two child states. A missing
/// child is represented by an all-zero state.
pub fn tree_lstm_cell(
    tape: &mut Tape,
    set: &ParamSet,
    p: &TreeLstmParams,
    x: ValueId,
    left: CellState,
    right: CellState,
) -> Result<CellState, DiffError> {
    let hcat = tape.concat(left.h, right.h)?;
    let pre = |tape: &mut Tape, slot: usize| {
        preactivation(tape, set, p.w[slot], x, p.u[slot], hcat, p.b[slot])
    };
    let pi = pre(tape, 0)?;
    let i = tape.sigmoid(pi)?;
    let pfl = pre(tape, 1)?;
    let fl = tape.sigmoid(pfl)?;
    let pfr = pre(tape, 2)?;
    let fr = tape.sigmoid(pfr)?;
    let po = pre(tape, 3)?;
    let o = tape.sigmoid(po)?;
    let pg = pre(tape, 4)?;
    let g = tape.tanh(pg)?;
    let ig = tape.mul(i, g)?;
    let flc = tape.mul(fl, left.c)?;
    let frc = tape.mul(fr, right.c)?;
    let partial = tape.add(ig, flc)?;
    let c = tape.add(partial, frc)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(CellState { h, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::TensorValue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_lstm(set: &mut ParamSet, d_in: usize, d: usize) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        LstmParams::init(set, "z", d_in, d, 0.0, &mut rng).expect("unique names")
    }

    #[test]
    fn zero_weight_lstm_halves_the_cell_state() {
        let d = 3;
        let mut set = ParamSet::new();
        let p = zero_lstm(&mut set, 2, d);
        let mut tape = Tape::new();
        let x = tape.input(vec![0.7, -1.2]);
        let c0 = vec![0.8, -0.4, 0.0];
        let prev = CellState {
            h: tape.zeros(d),
            c: tape.input(c0.clone()),
        };
        let next = lstm_cell(&mut tape, &set, &p, x, prev).expect("widths agree");
        for (j, &c) in tape.value(next.c).iter().enumerate() {
            assert!((c - 0.5 * c0[j]).abs() < 1e-15);
        }
        for (j, &h) in tape.value(next.h).iter().enumerate() {
            assert!((h - 0.5 * (0.5 * c0[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let d = 4;
        let mut set = ParamSet::new();
        let p = zero_lstm(&mut set, d, d);
        let mut tape = Tape::new();
        let x = tape.zeros(d);
        let prev = CellState::zeros(&mut tape, d);
        let next = lstm_cell(&mut tape, &set, &p, x, prev).expect("widths agree");
        assert!(tape.value(next.h).iter().all(|&v| v == 0.0));
        assert!(tape.value(next.c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tree_cell_with_missing_children_matches_lstm_with_zero_state() {
        let d = 3;
        let d_in = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut set = ParamSet::new();
        let tree = TreeLstmParams::init(&mut set, "tree", d_in, d, 0.1, &mut rng).unwrap();
        // Rebuild an LSTM whose i/f/o/g weights copy the tree cell's
        // i/fl/o/g weights. With zero child states the forget paths and the
        // `u` terms contribute nothing, so outputs must coincide.
        let mut lstm_set = ParamSet::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let u = [
            lstm_set.init_uniform("l.u.i", &[d, d], 0.1, &mut rng2).unwrap(),
            lstm_set.init_uniform("l.u.f", &[d, d], 0.1, &mut rng2).unwrap(),
            lstm_set.init_uniform("l.u.o", &[d, d], 0.1, &mut rng2).unwrap(),
            lstm_set.init_uniform("l.u.g", &[d, d], 0.1, &mut rng2).unwrap(),
        ];
        let mut copy = |name: &str, src: ParamId| {
            lstm_set
                .register(name, set.value(src).clone())
                .expect("unique names")
        };
        let w = [
            copy("l.w.i", tree.w[0]),
            copy("l.w.f", tree.w[1]),
            copy("l.w.o", tree.w[3]),
            copy("l.w.g", tree.w[4]),
        ];
        let b = [
            copy("l.b.i", tree.b[0]),
            copy("l.b.f", tree.b[1]),
            copy("l.b.o", tree.b[3]),
            copy("l.b.g", tree.b[4]),
        ];
        let lstm = LstmParams { w, u, b };

        let xv = vec![0.3, -0.9];
        let mut t1 = Tape::new();
        let x1 = t1.input(xv.clone());
        let l = CellState::zeros(&mut t1, d);
        let r = CellState::zeros(&mut t1, d);
        let out_tree = tree_lstm_cell(&mut t1, &set, &tree, x1, l, r).unwrap();

        let mut t2 = Tape::new();
        let x2 = t2.input(xv);
        let prev = CellState::zeros(&mut t2, d);
        let out_lstm = lstm_cell(&mut t2, &lstm_set, &lstm, x2, prev).unwrap();

        for (a, b) in t1.value(out_tree.h).iter().zip(t2.value(out_lstm.h)) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in t1.value(out_tree.c).iter().zip(t2.value(out_lstm.c)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_tree_weights_ignore_child_order() {
        let d = 3;
        let d_in = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set = ParamSet::new();
        let mut rand_mat = |rows: usize, cols: usize| -> Vec<f64> {
            (0..rows * cols).map(|_| rng.random_range(-0.5..0.5)).collect()
        };
        // i/o/g gates get u = [A | A]; the forget pair gets mirrored
        // halves [P | Q] and [Q | P] with shared w and b.
        let mirror = |half_a: &[f64], half_b: &[f64], rows: usize, cols: usize| -> Vec<f64> {
            let mut m = Vec::with_capacity(rows * 2 * cols);
            for r in 0..rows {
                m.extend_from_slice(&half_a[r * cols..(r + 1) * cols]);
                m.extend_from_slice(&half_b[r * cols..(r + 1) * cols]);
            }
            m
        };
        let a_i = rand_mat(d, d);
        let a_o = rand_mat(d, d);
        let a_g = rand_mat(d, d);
        let p_half = rand_mat(d, d);
        let q_half = rand_mat(d, d);
        let w_shared = rand_mat(d, d_in);
        let b_shared = rand_mat(d, 1);
        let mut reg = |name: &str, rows: usize, cols: usize, data: Vec<f64>| {
            set.register(name, TensorValue::matrix(rows, cols, data).unwrap())
                .unwrap()
        };
        let w = [
            reg("t.w.i", d, d_in, rand_mat(d, d_in)),
            reg("t.w.fl", d, d_in, w_shared.clone()),
            reg("t.w.fr", d, d_in, w_shared),
            reg("t.w.o", d, d_in, rand_mat(d, d_in)),
            reg("t.w.g", d, d_in, rand_mat(d, d_in)),
        ];
        let u = [
            reg("t.u.i", d, 2 * d, mirror(&a_i, &a_i, d, d)),
            reg("t.u.fl", d, 2 * d, mirror(&p_half, &q_half, d, d)),
            reg("t.u.fr", d, 2 * d, mirror(&q_half, &p_half, d, d)),
            reg("t.u.o", d, 2 * d, mirror(&a_o, &a_o, d, d)),
            reg("t.u.g", d, 2 * d, mirror(&a_g, &a_g, d, d)),
        ];
        let mut reg_vec = |name: &str, data: Vec<f64>| {
            set.register(name, TensorValue::vector(data)).unwrap()
        };
        let b = [
            reg_vec("t.b.i", rand_mat(d, 1)),
            reg_vec("t.b.fl", b_shared.clone()),
            reg_vec("t.b.fr", b_shared),
            reg_vec("t.b.o", rand_mat(d, 1)),
            reg_vec("t.b.g", rand_mat(d, 1)),
        ];
        let p = TreeLstmParams { w, u, b };

        let xv = vec![0.4, 0.6];
        let hl = vec![0.2, -0.3, 0.5];
        let cl = vec![0.1, 0.0, -0.2];
        let hr = vec![-0.6, 0.9, 0.05];
        let cr = vec![0.7, -0.1, 0.3];

        let run = |first: (&[f64], &[f64]), second: (&[f64], &[f64])| -> (Vec<f64>, Vec<f64>) {
            let mut tape = Tape::new();
            let x = tape.input(xv.clone());
            let left = CellState {
                h: tape.input(first.0.to_vec()),
                c: tape.input(first.1.to_vec()),
            };
            let right = CellState {
                h: tape.input(second.0.to_vec()),
                c: tape.input(second.1.to_vec()),
            };
            let out = tree_lstm_cell(&mut tape, &set, &p, x, left, right).unwrap();
            (tape.value(out.h).to_vec(), tape.value(out.c).to_vec())
        };
        let (h1, c1) = run((&hl, &cl), (&hr, &cr));
        let (h2, c2) = run((&hr, &cr), (&hl, &cl));
        for (a, b) in h1.iter().zip(&h2) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in c1.iter().zip(&c2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn find_recovers_registered_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParamSet::new();
        let made = TreeLstmParams::init(&mut set, "enc", 8, 4, 0.1, &mut rng).unwrap();
        let found = TreeLstmParams::find(&set, "enc").unwrap();
        assert_eq!(made.w, found.w);
        assert_eq!(made.u, found.u);
        assert_eq!(made.b, found.b);
        assert!(TreeLstmParams::find(&set, "missing").is_err());
    }
}

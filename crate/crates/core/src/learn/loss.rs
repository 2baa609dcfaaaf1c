//! Contrastive objectives over projected embeddings.
//!
//! Both objectives are the same symmetric InfoNCE computation applied to
//! different row stacks:
//!
//! * temporal: rows are [anchor frames; their temporal neighbors], so the
//!   positive for row i is row (i + m) mod 2m and negatives are every other
//!   embedding in the stack;
//! * multimodal: rows are [anchor frames with an utterance; utterance
//!   embeddings], same pairing, so image negatives include the other texts
//!   and vice versa.
//!
//! Similarity is cosine; gradients flow through the row normalization.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::scalar::{lit, Scalar};
use crate::{Error, Result};

/// L2-normalize each row. Errors on a zero row (cosine undefined).
pub fn normalize_rows<S: Scalar>(z: &ArrayView2<S>) -> Result<(Array2<S>, Array1<S>)> {
    let mut out = z.to_owned();
    let mut norms = Array1::<S>::zeros(z.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.iter().map(|v| *v * *v).fold(S::zero(), |a, b| a + b).sqrt();
        if !(n > S::zero()) {
            return Err(Error::ZeroNorm(i));
        }
        row.mapv_inplace(|v| v / n);
        norms[i] = n;
    }
    Ok((out, norms))
}

/// Symmetric InfoNCE over a stack of 2m rows where row i pairs with row
/// (i + m) mod 2m. Every other row in the stack (all but self) is a
/// negative. Returns the mean loss over all 2m anchor terms and its
/// gradient with respect to the *unnormalized* input rows.
pub fn symmetric_infonce<S: Scalar>(
    z: &ArrayView2<S>,
    temperature: S,
) -> Result<(S, Array2<S>)> {
    let rows = z.nrows();
    assert!(rows >= 4 && rows % 2 == 0, "need an even stack of paired rows");
    let m = rows / 2;
    let (zn, norms) = normalize_rows(z)?;
    let sim = zn.dot(&zn.t());
    let inv_t = S::one() / temperature;

    let mut loss = S::zero();
    // g[i][k] = dL/dsim[i][k] summed over the loss terms, already scaled
    // by 1/(2m) and 1/temperature.
    let mut g = Array2::<S>::zeros((rows, rows));
    let scale = S::one() / lit::<S>(rows as f64);
    for i in 0..rows {
        let pos = (i + m) % rows;
        // log-sum-exp over k != i, stabilized by the row max.
        let mut max = S::neg_infinity();
        for k in 0..rows {
            if k != i && sim[[i, k]] > max {
                max = sim[[i, k]];
            }
        }
        let mut denom = S::zero();
        for k in 0..rows {
            if k != i {
                denom = denom + ((sim[[i, k]] - max) * inv_t).exp();
            }
        }
        let lse = denom.ln() + max * inv_t;
        loss = loss + lse - sim[[i, pos]] * inv_t;
        for k in 0..rows {
            if k == i {
                continue;
            }
            let soft = ((sim[[i, k]] - max) * inv_t).exp() / denom;
            let mut gk = soft;
            if k == pos {
                gk = gk - S::one();
            }
            g[[i, k]] = g[[i, k]] + scale * inv_t * gk;
        }
    }
    loss = loss * scale;

    // sim = Zn Zn^T, so dZn = (G + G^T) Zn.
    let gsym = &g + &g.t();
    let dzn = gsym.dot(&zn);
    // Back through row normalization: dz = (dzn - (dzn . zn) zn) / norm.
    let mut dz = dzn;
    for i in 0..rows {
        let zr = zn.row(i);
        let dot = dz.row(i).dot(&zr);
        let mut dr = dz.row_mut(i);
        for j in 0..dr.len() {
            dr[j] = (dr[j] - dot * zr[j]) / norms[i];
        }
    }
    Ok((loss, dz))
}

/// Temporal loss: z1 stacks anchors then neighbors.
pub fn cltt_loss<S: Scalar>(z1: &ArrayView2<S>, temperature: S) -> Result<S> {
    symmetric_infonce(z1, temperature).map(|(l, _)| l)
}

pub fn cltt_loss_grad<S: Scalar>(
    z1: &ArrayView2<S>,
    temperature: S,
) -> Result<(S, Array2<S>)> {
    symmetric_infonce(z1, temperature)
}

/// Multimodal loss over K image rows (z2) and their K utterance rows (z3).
/// Returns the loss plus gradients split back into the two inputs.
pub fn mmcl_loss_grad<S: Scalar>(
    z2: &ArrayView2<S>,
    z3: &ArrayView2<S>,
    temperature: S,
) -> Result<(S, Array2<S>, Array2<S>)> {
    let k = z2.nrows();
    assert_eq!(k, z3.nrows(), "image/text row mismatch");
    assert_eq!(z2.ncols(), z3.ncols(), "image/text dim mismatch");
    let mut stack = Array2::<S>::zeros((2 * k, z2.ncols()));
    stack.slice_mut(s![..k, ..]).assign(z2);
    stack.slice_mut(s![k.., ..]).assign(z3);
    let (loss, dz) = symmetric_infonce(&stack.view(), temperature)?;
    let d2 = dz.slice(s![..k, ..]).to_owned();
    let d3 = dz.slice(s![k.., ..]).to_owned();
    Ok((loss, d2, d3))
}

pub fn mmcl_loss<S: Scalar>(
    z2: &ArrayView2<S>,
    z3: &ArrayView2<S>,
    temperature: S,
) -> Result<S> {
    mmcl_loss_grad(z2, z3, temperature).map(|(l, _, _)| l)
}

/// Mean cross-entropy of logits against integer labels, with gradient and
/// accuracy. Used by the supervised reference model.
pub fn cross_entropy<S: Scalar>(
    logits: &ArrayView2<S>,
    labels: &[u32],
) -> (S, Array2<S>, f32) {
    let n = logits.nrows();
    assert_eq!(n, labels.len());
    let scale = S::one() / lit::<S>(n as f64);
    let mut loss = S::zero();
    let mut grad = Array2::<S>::zeros(logits.raw_dim());
    let mut correct = 0usize;
    for i in 0..n {
        let row = logits.row(i);
        let label = labels[i] as usize;
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let mut denom = S::zero();
        for v in row.iter() {
            denom = denom + (*v - max).exp();
        }
        loss = loss + denom.ln() + max - row[label];
        let mut argmax = 0usize;
        for (k, v) in row.iter().enumerate() {
            if *v > row[argmax] {
                argmax = k;
            }
            let soft = (*v - max).exp() / denom;
            grad[[i, k]] = scale * (soft - if k == label { S::one() } else { S::zero() });
        }
        if argmax == label {
            correct += 1;
        }
    }
    (loss * scale, grad, correct as f32 / n as f32)
}

//! Linear-chain CRF over `K` tags.
//!
//! A path `z` over `N` positions scores
//! `Σ_{t<N-1} T[z_t][z_{t+1}] + Σ_t U[t][z_t]`, with no start or stop terms.
//! `T` is `(K, K)`, `U` is `(N, K)`.

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp_slice, Tensor};

fn check_shapes(transitions: &Tensor, emissions: &Tensor) -> Result<(usize, usize)> {
    let ts = transitions.shape();
    let us = emissions.shape();
    if ts.len() != 2 || ts[0] != ts[1] || us.len() != 2 || us[1] != ts[0] {
        return Err(Error::Shape {
            op: "crf",
            lhs: ts.to_vec(),
            rhs: us.to_vec(),
        });
    }
    Ok((us[0], ts[0]))
}

fn check_path(path: &[usize], n: usize, k: usize) -> Result<()> {
    if path.len() != n {
        return Err(Error::invalid(format!("tag path has length {} but there are {n} positions", path.len())));
    }
    if let Some(bad) = path.iter().find(|&&z| z >= k) {
        return Err(Error::invalid(format!("tag index {bad} out of range for {k} tags")));
    }
    Ok(())
}

pub fn path_score(transitions: &Tensor, emissions: &Tensor, path: &[usize]) -> Result<f64> {
    let (n, k) = check_shapes(transitions, emissions)?;
    check_path(path, n, k)?;
    let t = transitions.data();
    let u = emissions.data();
    let mut s = 0.0;
    for (i, &z) in path.iter().enumerate() {
        s += u[i * k + z];
        if i + 1 < n {
            s += t[z * k + path[i + 1]];
        }
    }
    Ok(s)
}

/// Forward log-messages `alpha[t][q]`: log-sum of scores of all prefixes
/// ending in tag `q` at position `t`.
fn forward_messages(t: &[f64], u: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut alpha = vec![0.0; n * k];
    alpha[..k].copy_from_slice(&u[..k]);
    let mut buf = vec![0.0; k];
    for pos in 1..n {
        for q in 0..k {
            for p in 0..k {
                buf[p] = alpha[(pos - 1) * k + p] + t[p * k + q];
            }
            alpha[pos * k + q] = u[pos * k + q] + log_sum_exp_slice(&buf).expect("k > 0");
        }
    }
    alpha
}

/// Backward log-messages `beta[t][p]`: log-sum of scores of all suffixes
/// after position `t` given tag `p` there.
fn backward_messages(t: &[f64], u: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut beta = vec![0.0; n * k];
    let mut buf = vec![0.0; k];
    for pos in (0..n - 1).rev() {
        for p in 0..k {
            for q in 0..k {
                buf[q] = t[p * k + q] + u[(pos + 1) * k + q] + beta[(pos + 1) * k + q];
            }
            beta[pos * k + p] = log_sum_exp_slice(&buf).expect("k > 0");
        }
    }
    beta
}

/// `ln Σ_z exp(path_score(z))` by the forward algorithm.
pub fn log_partition(transitions: &Tensor, emissions: &Tensor) -> Result<f64> {
    let (n, k) = check_shapes(transitions, emissions)?;
    if n == 0 {
        return Err(Error::invalid("CRF needs at least one position"));
    }
    let alpha = forward_messages(transitions.data(), emissions.data(), n, k);
    log_sum_exp_slice(&alpha[(n - 1) * k..])
}

pub fn nll(transitions: &Tensor, emissions: &Tensor, gold: &[usize]) -> Result<f64> {
    let score = path_score(transitions, emissions, gold)?;
    Ok(log_partition(transitions, emissions)? - score)
}

#[derive(Clone, Debug)]
pub struct NllOutput {
    pub loss: f64,
    pub d_emissions: Tensor,
    pub d_transitions: Tensor,
}

/// Loss plus its gradient: expected feature counts under the model (from
/// forward-backward marginals) minus the gold path's counts.
pub fn nll_with_grads(transitions: &Tensor, emissions: &Tensor, gold: &[usize]) -> Result<NllOutput> {
    let (n, k) = check_shapes(transitions, emissions)?;
    if n == 0 {
        return Err(Error::invalid("CRF needs at least one position"));
    }
    check_path(gold, n, k)?;
    let (t, u) = (transitions.data(), emissions.data());
    let alpha = forward_messages(t, u, n, k);
    let beta = backward_messages(t, u, n, k);
    let log_z = log_sum_exp_slice(&alpha[(n - 1) * k..])?;
    let loss = log_z - path_score(transitions, emissions, gold)?;

    let mut du = vec![0.0; n * k];
    for pos in 0..n {
        for q in 0..k {
            du[pos * k + q] = (alpha[pos * k + q] + beta[pos * k + q] - log_z).exp();
        }
        du[pos * k + gold[pos]] -= 1.0;
    }
    let mut dt = vec![0.0; k * k];
    for pos in 0..n.saturating_sub(1) {
        for p in 0..k {
            let a = alpha[pos * k + p];
            for q in 0..k {
                dt[p * k + q] +=
                    (a + t[p * k + q] + u[(pos + 1) * k + q] + beta[(pos + 1) * k + q] - log_z).exp();
            }
        }
        dt[gold[pos] * k + gold[pos + 1]] -= 1.0;
    }
    Ok(NllOutput {
        loss,
        d_emissions: Tensor::matrix(n, k, du)?,
        d_transitions: Tensor::matrix(k, k, dt)?,
    })
}

/// Highest-scoring path. Ties go to the lowest tag index, both for the final
/// tag and for every back-pointer.
pub fn viterbi(transitions: &Tensor, emissions: &Tensor) -> Result<Vec<usize>> {
    let (n, k) = check_shapes(transitions, emissions)?;
    if n == 0 {
        return Err(Error::invalid("CRF needs at least one position"));
    }
    let (t, u) = (transitions.data(), emissions.data());
    let mut delta = u[..k].to_vec();
    let mut back = vec![0usize; n * k];
    let mut next = vec![0.0; k];
    for pos in 1..n {
        for q in 0..k {
            let mut best = 0;
            let mut best_score = delta[0] + t[q];
            for p in 1..k {
                let s = delta[p] + t[p * k + q];
                if s > best_score {
                    best = p;
                    best_score = s;
                }
            }
            back[pos * k + q] = best;
            next[q] = best_score + u[pos * k + q];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut last = 0;
    for q in 1..k {
        if delta[q] > delta[last] {
            last = q;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for pos in (1..n).rev() {
        path[pos - 1] = back[pos * k + path[pos]];
    }
    Ok(path)
}

/// Loss over a padded emission matrix: only the mask's leading `true` run
/// contributes; padding rows are ignored entirely.
pub fn masked_nll(transitions: &Tensor, padded_emissions: &Tensor, padded_gold: &[usize], mask: &[bool]) -> Result<f64> {
    let (rows, k) = check_shapes(transitions, padded_emissions)?;
    if mask.len() != rows || padded_gold.len() != rows {
        return Err(Error::invalid("mask, gold and emissions must share a length"));
    }
    let len = mask.iter().take_while(|&&m| m).count();
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::invalid("mask must be a prefix of true values"));
    }
    let u = Tensor::matrix(len, k, padded_emissions.data()[..len * k].to_vec())?;
    nll(transitions, &u, &padded_gold[..len])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random(n: usize, k: usize, rng: &mut DetRng) -> (Tensor, Tensor) {
        let t = Tensor::matrix(k, k, (0..k * k).map(|_| rng.normal()).collect()).unwrap();
        let u = Tensor::matrix(n, k, (0..n * k).map(|_| rng.normal()).collect()).unwrap();
        (t, u)
    }

    /// All K^N paths in lexicographic order.
    fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..k).map(move |z| {
                        let mut q = p.clone();
                        q.push(z);
                        q
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn single_position() {
        let t = Tensor::zeros(&[6, 6]);
        let u = Tensor::matrix(1, 6, vec![0.1, 0.7, 0.7, -1.0, 0.0, 0.2]).unwrap();
        assert_eq!(path_score(&t, &u, &[3]).unwrap(), -1.0);
        assert_eq!(log_partition(&t, &u).unwrap(), log_sum_exp_slice(u.data()).unwrap());
        assert_eq!(viterbi(&t, &u).unwrap(), vec![1]);
    }

    #[test]
    fn zero_transitions_decode_per_position() {
        let mut rng = DetRng::new(4);
        let (_, u) = random(7, 6, &mut rng);
        let t = Tensor::zeros(&[6, 6]);
        let expect: Vec<usize> = (0..7)
            .map(|i| {
                let r = u.row(i);
                (0..6).fold(0, |b, q| if r[q] > r[b] { q } else { b })
            })
            .collect();
        assert_eq!(viterbi(&t, &u).unwrap(), expect);
        let s: f64 = expect.iter().enumerate().map(|(i, &z)| u.row(i)[z]).sum();
        assert!((path_score(&t, &u, &expect).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn path_score_matches_direct_sum() {
        let mut rng = DetRng::new(11);
        let (t, u) = random(4, 6, &mut rng);
        let z = [2, 0, 5, 5];
        let direct = u.row(0)[2] + u.row(1)[0] + u.row(2)[5] + u.row(3)[5]
            + t.row(2)[0] + t.row(0)[5] + t.row(5)[5];
        assert!((path_score(&t, &u, &z).unwrap() - direct).abs() < 1e-12);
        assert!(path_score(&t, &u, &[1, 2]).is_err());
    }

    #[test]
    fn partition_matches_enumeration_and_normalizes() {
        let mut rng = DetRng::new(5);
        for n in 1..=5 {
            let (t, u) = random(n, 6, &mut rng);
            let scores: Vec<f64> = all_paths(n, 6).iter().map(|z| path_score(&t, &u, z).unwrap()).collect();
            let brute = log_sum_exp_slice(&scores).unwrap();
            let lz = log_partition(&t, &u).unwrap();
            assert!((brute - lz).abs() < 1e-8, "n={n}: {brute} vs {lz}");
            let total: f64 = scores.iter().map(|s| (s - lz).exp()).sum();
            assert!((total - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn emission_shift_adds_to_partition() {
        let mut rng = DetRng::new(8);
        let (t, mut u) = random(5, 6, &mut rng);
        let base = log_partition(&t, &u).unwrap();
        let shifts = [0.5, -1.0, 2.0, 0.0, 3.25];
        for (i, c) in shifts.iter().enumerate() {
            for v in &mut u.data_mut()[i * 6..(i + 1) * 6] {
                *v += c;
            }
        }
        let shifted = log_partition(&t, &u).unwrap();
        assert!((shifted - base - shifts.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn nll_limits() {
        let t = Tensor::zeros(&[6, 6]);
        let u = Tensor::zeros(&[2, 6]);
        assert!((nll(&t, &u, &[0, 3]).unwrap() - 2.0 * 6f64.ln()).abs() < 1e-12);

        let mut u = Tensor::zeros(&[3, 6]);
        let gold = [1, 2, 5];
        for (i, &g) in gold.iter().enumerate() {
            u.data_mut()[i * 6 + g] = 100.0;
        }
        let l = nll(&t, &u, &gold).unwrap();
        assert!((0.0..1e-6).contains(&l), "{l}");
        assert!(nll(&t, &u, &[1, 2, 6]).is_err());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = DetRng::new(21);
        let (t, u) = random(4, 6, &mut rng);
        let gold = [0, 3, 4, 1];
        let out = nll_with_grads(&t, &u, &gold).unwrap();
        let eps = 1e-5;
        for (which, base, grad) in [(0, &t, &out.d_transitions), (1, &u, &out.d_emissions)] {
            for i in 0..base.len() {
                let mut plus = base.clone();
                plus.data_mut()[i] += eps;
                let mut minus = base.clone();
                minus.data_mut()[i] -= eps;
                let (lp, lm) = if which == 0 {
                    (nll(&plus, &u, &gold).unwrap(), nll(&minus, &u, &gold).unwrap())
                } else {
                    (nll(&t, &plus, &gold).unwrap(), nll(&t, &minus, &gold).unwrap())
                };
                let fd = (lp - lm) / (2.0 * eps);
                assert!((fd - grad.data()[i]).abs() < 1e-7, "{which}/{i}: {fd} vs {}", grad.data()[i]);
            }
        }
    }

    #[test]
    fn viterbi_dominates_sampled_paths() {
        let mut rng = DetRng::new(3);
        let (t, u) = random(8, 6, &mut rng);
        let best = viterbi(&t, &u).unwrap();
        let best_score = path_score(&t, &u, &best).unwrap();
        for _ in 0..1000 {
            let z: Vec<usize> = (0..8).map(|_| rng.below(6)).collect();
            assert!(best_score >= path_score(&t, &u, &z).unwrap());
        }
    }

    #[test]
    fn masked_loss_ignores_padding() {
        let mut rng = DetRng::new(2);
        let (t, u) = random(3, 6, &mut rng);
        let mut padded = u.data().to_vec();
        padded.extend((0..12).map(|_| rng.normal() * 50.0));
        let padded = Tensor::matrix(5, 6, padded).unwrap();
        let gold = [1, 2, 0];
        let a = masked_nll(&t, &padded, &[1, 2, 0, 0, 0], &[true, true, true, false, false]).unwrap();
        assert_eq!(a, nll(&t, &u, &gold).unwrap());
    }
}

//! Closed-form privacy/utility tradeoffs.

use crate::error::{Error, Result};

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain(format!("need at least two nodes, got {n}")));
    }
    Ok(())
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Upper bound on privacy under shortest-path routing for utility `u`.
pub fn diagonal_bound(u: f64) -> Result<f64> {
    check_alpha(u)?;
    Ok(1.0 - u)
}

/// All-or-nothing mechanism on a reachable network of `n` nodes.
pub fn aon_privacy(n: usize, alpha: f64) -> Result<f64> {
    check_n(n)?;
    check_alpha(alpha)?;
    Ok((1.0 - 2.0 / n as f64) * (1.0 - alpha))
}

fn check_usm(n_servers: usize, n_users: usize) -> Result<()> {
    if n_servers == 0 || n_users == 0 {
        return Err(Error::domain("user-server model needs servers and users"));
    }
    check_n(n_servers + n_users)
}

/// All-or-nothing on the server channels of a single-homed user-server network.
pub fn usm_privacy(n_servers: usize, n_users: usize, mu: usize, alpha: f64) -> Result<f64> {
    check_usm(n_servers, n_users)?;
    check_alpha(alpha)?;
    let n = (n_servers + n_users) as f64;
    let mu = mu as f64;
    Ok((1.0 - 2.0 / n) * (1.0 - alpha) + alpha * mu / (mu + 1.0))
}

/// Lower bound for the multi-homed variant.
pub fn usm_multi_privacy_lb(n_servers: usize, n_users: usize, mu: usize, alpha: f64) -> Result<f64> {
    check_usm(n_servers, n_users)?;
    check_alpha(alpha)?;
    let n = (n_servers + n_users) as f64;
    let mu = mu as f64;
    Ok((1.0 - 2.0 / n) * (1.0 - alpha) + alpha * mu / (mu + 2.0))
}

fn check_clique_len(n: usize, len: usize, min_len: usize) -> Result<()> {
    check_n(n)?;
    if len < min_len {
        return Err(Error::domain(format!("path length {len} below {min_len}")));
    }
    if len + 1 > n {
        return Err(Error::domain(format!("no simple path of length {len} on {n} nodes")));
    }
    Ok(())
}

/// Alternating mechanism on a complete graph with all simple paths of length `len`.
pub fn alternating_privacy(n: usize, len: usize, alpha: f64) -> Result<f64> {
    check_clique_len(n, len, 2)?;
    check_alpha(alpha)?;
    let nf = n as f64;
    // Hit probability of the optimal adversary given an odd/even half-trace, summed over both halves.
    let halves = if len % 2 == 0 {
        2.0 / len.min(n - len) as f64
    } else {
        2.0 / (len + 1) as f64 + 2.0 / (n - len + 1) as f64
    };
    Ok(if alpha <= 0.5 {
        1.0 - 2.0 / nf - (halves - 4.0 / nf) * alpha
    } else {
        (2.0 - halves) * (1.0 - alpha)
    })
}

/// Lower bound on i.i.d. privacy on a complete graph with fixed path length `len`.
///
/// Written as a polynomial in alpha so that alpha = 1 needs no special case.
pub fn iid_privacy_lower_bound(n: usize, len: usize, alpha: f64) -> Result<f64> {
    check_clique_len(n, len, 1)?;
    check_alpha(alpha)?;
    let lambda = len + 1;
    let sum: f64 = (1..lambda)
        .map(|t| alpha.powi((lambda - t) as i32) * (1.0 - alpha).powi(t as i32 - 1) * binom(lambda, t))
        .sum();
    Ok(1.0 - 2.0 * (1.0 - alpha).powi(len as i32) / n as f64 - 2.0 * sum / lambda as f64)
}

/// Exact i.i.d. privacy on a complete graph with fixed path length `len`, in O(len^2).
pub fn iid_privacy_exact(n: usize, len: usize, alpha: f64) -> Result<f64> {
    check_clique_len(n, len, 1)?;
    check_alpha(alpha)?;
    let lambda = len + 1;
    let outside = n - lambda;
    let psi = |k: usize| -> f64 {
        if k <= outside {
            1.0
        } else {
            2.0 * k as f64 / (outside + k) as f64
        }
    };
    let mut hit = 2.0 * (1.0 - alpha).powi(len as i32) / n as f64;
    for t in 1..lambda {
        let weight = alpha.powi((lambda - t) as i32) * (1.0 - alpha).powi(t as i32 - 1) / t as f64;
        let inner: f64 = (1..=t.min(lambda - t))
            .map(|h| binom(t, t - h) * binom(lambda - t - 1, h - 1) * psi(t - h))
            .sum();
        hit += weight * inner;
    }
    Ok(1.0 - hit)
}

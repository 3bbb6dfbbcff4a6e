/// Shifted Legendre polynomial `P_i(2r − 1)` on `r ∈ [0, 1]`.
pub fn shifted_legendre(i: usize, r: f64) -> f64 {
    let x = 2.0 * r - 1.0;
    let (mut prev, mut cur) = (1.0, x);
    if i == 0 {
        return prev;
    }
    for k in 1..i {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Reads the input `delay` tokens back out of one channel's memory
/// (`delay ∈ [0, θ]`).
pub fn decode_window(memory: &[f64], delay: f64, theta: f64) -> f64 {
    memory
        .iter()
        .enumerate()
        .map(|(i, m)| m * shifted_legendre(i, delay / theta))
        .sum()
}

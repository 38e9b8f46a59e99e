//! Integer apportionment helpers shared by truncation and generation.

/// Splits `total` across `weights` with the largest-remainder rule.
///
/// Quotas are `total * w / sum(w)`. Each group first receives the floor of
/// its quota; the leftover units go to the largest fractional remainders,
/// ties resolved toward the earlier group. All arithmetic is exact.
/// Returns all zeros when the weights sum to zero.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let total = total as u128;
    let mut alloc: Vec<usize> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = total * w as u128;
        alloc.push((scaled / sum) as usize);
        remainders.push((scaled % sum, i));
    }
    let assigned: usize = alloc.iter().sum();
    let mut leftover = total as usize - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if leftover == 0 {
            break;
        }
        alloc[i] += 1;
        leftover -= 1;
    }
    alloc
}

/// Produces an interleaving order over groups of the given sizes such that
/// every prefix is apportioned close to the groups' proportions.
///
/// Entry `i` of the result is the group that receives the `i`-th unit. At
/// each step the group with the largest deficit `n * size_g / N - taken_g`
/// is chosen (ties toward the earlier group), computed exactly in integers.
/// Because allocations only ever grow, the prefix allocation for `n` is
/// contained in the allocation for any larger `n`.
pub fn sequential_order(sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let mut taken = vec![0usize; sizes.len()];
    let mut order = Vec::with_capacity(total);
    for step in 1..=total {
        let mut best: Option<(i128, usize)> = None;
        for (g, &size) in sizes.iter().enumerate() {
            if taken[g] >= size {
                continue;
            }
            let deficit = step as i128 * size as i128 - taken[g] as i128 * total as i128;
            if best.is_none_or(|(d, _)| deficit > d) {
                best = Some((deficit, g));
            }
        }
        let (_, g) = best.expect("a group with capacity remains");
        taken[g] += 1;
        order.push(g);
    }
    order
}

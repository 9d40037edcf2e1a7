//! Geometric nested dissection on the diamond lattice.
//!
//! Bonds only join sites whose integer coordinates differ by one on every
//! axis, so a single atomic layer `u_axis == c` separates `u_axis < c`
//! from `u_axis > c`.

const LEAF: usize = 48;

/// Elimination order of atoms: both halves first, separator last.
pub fn nested_dissection(sites: &[[i32; 3]]) -> Vec<usize> {
    let mut order = Vec::with_capacity(sites.len());
    let mut idx: Vec<usize> = (0..sites.len()).collect();
    dissect(sites, &mut idx, &mut order);
    order
}

fn dissect(sites: &[[i32; 3]], idx: &mut [usize], order: &mut Vec<usize>) {
    if idx.len() <= LEAF {
        order.extend_from_slice(idx);
        return;
    }
    let mut lo = [i32::MAX; 3];
    let mut hi = [i32::MIN; 3];
    for &i in idx.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(sites[i][k]);
            hi[k] = hi[k].max(sites[i][k]);
        }
    }
    let axis = (0..3).max_by_key(|&k| (hi[k] - lo[k], -(k as i32))).unwrap();
    if hi[axis] - lo[axis] < 2 {
        order.extend_from_slice(idx);
        return;
    }
    idx.sort_unstable_by_key(|&i| (sites[i][axis], i));
    let cut = sites[idx[idx.len() / 2]][axis].clamp(lo[axis] + 1, hi[axis] - 1);
    let left_end = idx.partition_point(|&i| sites[i][axis] < cut);
    let sep_end = idx.partition_point(|&i| sites[i][axis] <= cut);
    let (left, rest) = idx.split_at_mut(left_end);
    let (sep, right) = rest.split_at_mut(sep_end - left_end);
    let sep: Vec<usize> = sep.to_vec();
    dissect(sites, left, order);
    dissect(sites, right, order);
    order.extend(sep);
}

/// Degree-of-freedom permutation `perm[old] = new` for atom-major blocks
/// of `block` consecutive unknowns.
pub fn expand_to_dofs(atom_order: &[usize], block: usize) -> Vec<usize> {
    let mut perm = vec![0; atom_order.len() * block];
    for (new_atom, &old_atom) in atom_order.iter().enumerate() {
        for o in 0..block {
            perm[old_atom * block + o] = new_atom * block + o;
        }
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, DeviceGeometry};

    #[test]
    fn order_is_a_permutation() {
        let atoms = build_lattice(&DeviceGeometry::with_cells(4)).unwrap();
        let order = nested_dissection(&atoms.sites);
        let mut seen = vec![false; atoms.len()];
        for &i in &order {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let perm = expand_to_dofs(&order, 3);
        let mut hit = vec![false; perm.len()];
        for &p in &perm {
            hit[p] = true;
        }
        assert!(hit.iter().all(|&h| h));
    }
}

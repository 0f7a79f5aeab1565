//! Finite abelian groups `Z_{n_1} x .. x Z_{n_m}`, homomorphisms given by integer matrices,
//! exhaustive subgroup enumeration and the subgroup constants.
//!
//! Elements are indexed in mixed radix with the last factor fastest. Subgroups are stored as
//! bitmasks over element indices.

use crate::datum::{AdjointParams, Mode};
use crate::error::{Error, Result};
use crate::grid::{InequalityMargin, ROUNDOFF};
use num_bigint::BigUint;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;

pub const DEFAULT_ORDER_CAP: usize = 4096;
/// Enumeration stops with an error past this many subgroups.
pub const SUBGROUP_COUNT_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteAbelianGroup {
    pub factors: Vec<u64>,
}

impl FiniteAbelianGroup {
    pub fn new(factors: Vec<u64>) -> Result<Self> {
        if factors.iter().any(|&n| n == 0) {
            return Err(Error::InvalidHom("cyclic factor of order 0".into()));
        }
        Ok(FiniteAbelianGroup { factors })
    }

    pub fn order(&self) -> usize {
        self.factors.iter().product::<u64>() as usize
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn coords(&self, mut e: usize) -> Vec<u64> {
        let mut out = vec![0; self.rank()];
        for a in (0..self.rank()).rev() {
            let n = self.factors[a] as usize;
            out[a] = (e % n) as u64;
            e /= n;
        }
        out
    }

    pub fn index(&self, coords: &[u64]) -> usize {
        coords.iter().zip(&self.factors).fold(0, |acc, (&x, &n)| acc * n as usize + (x % n) as usize)
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        let (x, y) = (self.coords(a), self.coords(b));
        let s: Vec<u64> = x.iter().zip(&y).map(|(u, v)| u + v).collect();
        self.index(&s)
    }

    fn check_cap(&self, cap: usize) -> Result<()> {
        let order = self.order();
        if order > cap {
            return Err(Error::CapExceeded { order, cap });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupHom {
    /// `target rank x source rank` integer matrix.
    pub matrix: Vec<Vec<i64>>,
    pub source: FiniteAbelianGroup,
    pub target: FiniteAbelianGroup,
}

impl GroupHom {
    /// Checks that `n_j` times column `j` vanishes modulo every target order.
    pub fn new(matrix: Vec<Vec<i64>>, source: FiniteAbelianGroup, target: FiniteAbelianGroup) -> Result<Self> {
        if matrix.len() != target.rank() || matrix.iter().any(|r| r.len() != source.rank()) {
            return Err(Error::InvalidHom(format!(
                "matrix shape does not match source rank {} and target rank {}",
                source.rank(),
                target.rank()
            )));
        }
        for (r, row) in matrix.iter().enumerate() {
            let t = target.factors[r] as i128;
            for (j, &m) in row.iter().enumerate() {
                if (source.factors[j] as i128 * m as i128).rem_euclid(t) != 0 {
                    return Err(Error::InvalidHom(format!(
                        "entry ({r},{j}) = {m}: {} * {m} is not 0 mod {t}",
                        source.factors[j]
                    )));
                }
            }
        }
        Ok(GroupHom { matrix, source, target })
    }

    /// Projection onto the listed cyclic factors.
    pub fn coordinate(source: &FiniteAbelianGroup, axes: &[usize]) -> Result<Self> {
        let matrix = axes
            .iter()
            .map(|&a| (0..source.rank()).map(|j| i64::from(j == a)).collect())
            .collect();
        let target = FiniteAbelianGroup::new(axes.iter().map(|&a| source.factors[a]).collect())?;
        GroupHom::new(matrix, source.clone(), target)
    }

    pub fn apply(&self, e: usize) -> usize {
        let x = self.source.coords(e);
        let y: Vec<u64> = self
            .matrix
            .iter()
            .zip(&self.target.factors)
            .map(|(row, &t)| {
                let s: i128 = row.iter().zip(&x).map(|(&m, &v)| m as i128 * v as i128).sum();
                s.rem_euclid(t as i128) as u64
            })
            .collect();
        self.target.index(&y)
    }

    /// Image of every source element.
    pub fn table(&self) -> Vec<usize> {
        (0..self.source.order()).map(|e| self.apply(e)).collect()
    }
}

/// A subgroup as an element bitmask, with a generating set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgroup {
    pub generators: Vec<usize>,
    pub mask: Vec<u64>,
    pub size: usize,
}

impl Subgroup {
    pub fn contains(&self, e: usize) -> bool {
        self.mask[e / 64] >> (e % 64) & 1 == 1
    }

    pub fn elements(&self) -> Vec<usize> {
        (0..self.mask.len() * 64).filter(|&e| self.contains(e)).collect()
    }

    fn from_elements(order: usize, generators: Vec<usize>, elems: &[usize]) -> Self {
        let mut mask = vec![0u64; order.div_ceil(64)];
        for &e in elems {
            mask[e / 64] |= 1 << (e % 64);
        }
        let size = mask.iter().map(|w| w.count_ones() as usize).sum();
        Subgroup { generators, mask, size }
    }
}

/// `S + <g>` as the union of cosets `S + k g` until `k g` falls back into `S`.
fn extend(group: &FiniteAbelianGroup, s: &Subgroup, g: usize) -> Subgroup {
    let base = s.elements();
    let mut elems = base.clone();
    let mut shift = g;
    while !s.contains(shift) {
        elems.extend(base.iter().map(|&x| group.add(x, shift)));
        shift = group.add(shift, g);
    }
    let mut gens = s.generators.clone();
    gens.push(g);
    Subgroup::from_elements(group.order(), gens, &elems)
}

/// All subgroups sorted by `(size, mask)`.
pub fn enumerate_subgroups(group: &FiniteAbelianGroup, cap: usize) -> Result<Vec<Subgroup>> {
    group.check_cap(cap)?;
    let order = group.order();
    let trivial = Subgroup::from_elements(order, vec![], &[0]);
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    seen.insert(trivial.mask.clone());
    let mut all = vec![trivial.clone()];
    let mut frontier = vec![trivial];
    while !frontier.is_empty() {
        let found: Vec<Vec<Subgroup>> = frontier
            .par_iter()
            .map(|s| {
                let mut local: Vec<Subgroup> = Vec::new();
                for g in 0..order {
                    if s.contains(g) {
                        continue;
                    }
                    let t = extend(group, s, g);
                    if !local.iter().any(|u| u.mask == t.mask) {
                        local.push(t);
                    }
                }
                local
            })
            .collect();
        frontier = Vec::new();
        for t in found.into_iter().flatten() {
            if seen.insert(t.mask.clone()) {
                frontier.push(t.clone());
                all.push(t);
                if all.len() > SUBGROUP_COUNT_CAP {
                    return Err(Error::CapExceeded { order: all.len(), cap: SUBGROUP_COUNT_CAP });
                }
            }
        }
        // canonical frontier order keeps generator choices independent of scheduling
        frontier.sort_by(|a, b| (a.size, &a.mask).cmp(&(b.size, &b.mask)));
    }
    all.sort_by(|a, b| (a.size, &a.mask).cmp(&(b.size, &b.mask)));
    Ok(all)
}

/// Group datum: homomorphisms `B_i: G -> G_i` and exponents `c_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteDatum {
    pub group: FiniteAbelianGroup,
    pub maps: Vec<GroupHom>,
    pub c: Vec<f64>,
    #[serde(skip)]
    pub c_exact: Option<Vec<Ratio<i64>>>,
}

impl DiscreteDatum {
    pub fn new(group: FiniteAbelianGroup, maps: Vec<GroupHom>, c: Vec<f64>) -> Result<Self> {
        if maps.is_empty() || maps.len() != c.len() {
            return Err(Error::InvalidDatum("need one positive exponent per map".into()));
        }
        if let Some(i) = c.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::ParameterDomain { index: i, reason: "exponent must be positive".into() });
        }
        if let Some(i) = maps.iter().position(|m| m.source != group) {
            return Err(Error::InvalidHom(format!("map {i} has a different source group")));
        }
        Ok(DiscreteDatum { group, maps, c, c_exact: None })
    }

    pub fn with_exact_exponents(group: FiniteAbelianGroup, maps: Vec<GroupHom>, c: Vec<Ratio<i64>>) -> Result<Self> {
        let f = c.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect();
        let mut out = DiscreteDatum::new(group, maps, f)?;
        out.c_exact = Some(c);
        Ok(out)
    }
}

/// `#H / prod (#H_i)^{c_i}` kept as the integer sizes, compared exactly when the exponents
/// are rational.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeRatio {
    pub numerator: usize,
    pub denominators: Vec<usize>,
}

impl SizeRatio {
    pub fn log_value(&self, c: &[f64]) -> f64 {
        (self.numerator as f64).ln() - self.denominators.iter().zip(c).map(|(&h, &ci)| ci * (h as f64).ln()).sum::<f64>()
    }

    pub fn value(&self, c: &[f64]) -> f64 {
        self.log_value(c).exp()
    }

    /// Raises both sides to the common denominator `D` and compares integers:
    /// `a^D prod b_i^{D c_i}` against `b^D prod a_i^{D c_i}`.
    fn cmp_exact(&self, other: &SizeRatio, c: &[Ratio<i64>]) -> Ordering {
        let den = c.iter().fold(1i64, |acc, r| num_integer_lcm(acc, *r.denom()));
        let pow = |x: usize, e: i64| BigUint::from(x).pow(e as u32);
        let mut left = pow(self.numerator, den);
        let mut right = pow(other.numerator, den);
        for ((&a, &b), r) in self.denominators.iter().zip(&other.denominators).zip(c) {
            let e = (r * den).to_integer();
            left *= pow(b, e);
            right *= pow(a, e);
        }
        left.cmp(&right)
    }

    pub fn compare(&self, other: &SizeRatio, c: &[f64], exact: Option<&[Ratio<i64>]>) -> Ordering {
        match exact {
            Some(e) => self.cmp_exact(other, e),
            None => self.log_value(c).total_cmp(&other.log_value(c)),
        }
    }
}

fn num_integer_lcm(a: i64, b: i64) -> i64 {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgroupConstant {
    pub value: f64,
    pub log_value: f64,
    pub ratio: SizeRatio,
    /// Element lists of the maximizing subgroup(s).
    pub argmax: Vec<Vec<usize>>,
}

fn bitmask_of(order: usize, pred: impl Fn(usize) -> bool) -> Vec<u64> {
    let mut mask = vec![0u64; order.div_ceil(64)];
    for e in (0..order).filter(|&e| pred(e)) {
        mask[e / 64] |= 1 << (e % 64);
    }
    mask
}

/// Supremum of `#(cap_i B_i^{-1} H_i) / prod (#H_i)^{c_i}` over all tuples of subgroups.
pub fn bls_constant(datum: &DiscreteDatum, cap: usize) -> Result<SubgroupConstant> {
    let order = datum.group.order();
    datum.group.check_cap(cap)?;
    let mut lists = Vec::new();
    let mut preimages = Vec::new();
    for m in &datum.maps {
        let subs = enumerate_subgroups(&m.target, cap)?;
        let table = m.table();
        preimages.push(subs.iter().map(|h| bitmask_of(order, |e| h.contains(table[e]))).collect::<Vec<_>>());
        lists.push(subs);
    }
    let exact = datum.c_exact.as_deref();
    let mut best: Option<(SizeRatio, Vec<usize>)> = None;
    let mut idx = vec![0usize; lists.len()];
    let words = order.div_ceil(64);
    loop {
        let mut inter = vec![u64::MAX; words];
        for (i, &j) in idx.iter().enumerate() {
            for (w, p) in inter.iter_mut().zip(&preimages[i][j]) {
                *w &= p;
            }
        }
        let size = inter.iter().map(|w| w.count_ones() as usize).sum();
        let cand = SizeRatio { numerator: size, denominators: idx.iter().enumerate().map(|(i, &j)| lists[i][j].size).collect() };
        let better = match &best {
            None => true,
            Some((b, _)) => cand.compare(b, &datum.c, exact) == Ordering::Greater,
        };
        if better {
            best = Some((cand, idx.clone()));
        }
        // odometer over tuples
        let mut a = 0;
        loop {
            if a == idx.len() {
                let (ratio, at) = best.expect("at least one tuple");
                let log_value = ratio.log_value(&datum.c);
                let argmax = at.iter().enumerate().map(|(i, &j)| lists[i][j].elements()).collect();
                return Ok(SubgroupConstant { value: log_value.exp(), log_value, ratio, argmax });
            }
            idx[a] += 1;
            if idx[a] < lists[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Image sizes `#(B_i H)` of a subgroup under each map.
pub fn image_sizes(datum: &DiscreteDatum, h: &Subgroup) -> Vec<usize> {
    datum
        .maps
        .iter()
        .map(|m| h.elements().into_iter().map(|e| m.apply(e)).collect::<BTreeSet<_>>().len())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjointSubgroupConstant {
    pub value: f64,
    pub log_value: f64,
    /// `sup_H #H / prod #(B_i H)^{c_i}`.
    pub ratio: SizeRatio,
    pub ratio_value: f64,
    pub argmax: Vec<usize>,
}

/// `(sup_H #H / prod #(B_i H)^{c_i})^{(1-p)/p}` over subgroups `H <= G`.
pub fn abls_constant(datum: &DiscreteDatum, params: &AdjointParams, cap: usize) -> Result<AdjointSubgroupConstant> {
    if !(params.p > 0.0 && params.p <= 1.0) || params.mode != Mode::Forward {
        return Err(Error::InvalidParams("subgroup adjoint constant needs forward mode with 0 < p <= 1".into()));
    }
    let subs = enumerate_subgroups(&datum.group, cap)?;
    let exact = datum.c_exact.as_deref();
    let mut best: Option<(SizeRatio, usize)> = None;
    for (j, h) in subs.iter().enumerate() {
        let cand = SizeRatio { numerator: h.size, denominators: image_sizes(datum, h) };
        let better = match &best {
            None => true,
            Some((b, _)) => cand.compare(b, &datum.c, exact) == Ordering::Greater,
        };
        if better {
            best = Some((cand, j));
        }
    }
    let (ratio, j) = best.expect("trivial subgroup exists");
    let log_ratio = ratio.log_value(&datum.c);
    let log_value = (1.0 - params.p) / params.p * log_ratio;
    Ok(AdjointSubgroupConstant { value: log_value.exp(), log_value, ratio, ratio_value: log_ratio.exp(), argmax: subs[j].elements() })
}

/// `(B)_* f (y) = sum_{Bx = y} f(x)`.
pub fn group_pushforward(f: &[f64], m: &GroupHom) -> Vec<f64> {
    let mut out = vec![0.0; m.target.order()];
    for (e, &v) in f.iter().enumerate() {
        out[m.apply(e)] += v;
    }
    out
}

pub fn lp_counting(f: &[f64], p: f64) -> f64 {
    let s: f64 = f.iter().filter(|&&v| v > 0.0).map(|&v| v.powf(p)).sum();
    s.powf(1.0 / p)
}

/// `||f||_p` against `bl^{1/p-1} prod ||(B_i)_* f||_{p_i}^{theta_i}` with counting measure.
pub fn discrete_adjoint_margin(f: &[f64], datum: &DiscreteDatum, params: &AdjointParams, bl_value: f64) -> Result<InequalityMargin> {
    if f.len() != datum.group.order() {
        return Err(Error::InvalidParams(format!("{} values for a group of order {}", f.len(), datum.group.order())));
    }
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParams("function values must be finite and non-negative".into()));
    }
    let lhs = lp_counting(f, params.p);
    let mut log_rhs = (1.0 / params.p - 1.0) * bl_value.ln();
    for ((m, &t), &pi) in datum.maps.iter().zip(&params.theta).zip(&params.p_i) {
        log_rhs += t * lp_counting(&group_pushforward(f, m), pi).ln();
    }
    let rhs = log_rhs.exp();
    Ok(InequalityMargin::from_sides(lhs, rhs, params.mode, ROUNDOFF * lhs.max(rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z(factors: &[u64]) -> FiniteAbelianGroup {
        FiniteAbelianGroup::new(factors.to_vec()).unwrap()
    }

    fn params(theta: &[f64], c: &[f64], p: f64) -> AdjointParams {
        let p_i = theta.iter().zip(c).map(|(t, ci)| 1.0 / (1.0 + ci / t * (1.0 / p - 1.0))).collect();
        AdjointParams { theta: theta.to_vec(), p, p_i, mode: Mode::Forward }
    }

    /// Subsets of the group closed under addition, by brute force over all `2^n` masks.
    fn brute_force_count(g: &FiniteAbelianGroup) -> usize {
        let n = g.order();
        (0u32..1 << n)
            .filter(|&m| {
                m & 1 == 1
                    && (0..n).all(|a| {
                        m >> a & 1 == 0 || (0..n).all(|b| m >> b & 1 == 0 || m >> g.add(a, b) & 1 == 1)
                    })
            })
            .count()
    }

    #[test]
    fn subgroup_counts() {
        for (f, expect) in [(vec![2], 2), (vec![2, 2], 5), (vec![4], 3), (vec![6], 4), (vec![2, 4], 8), (vec![3, 3], 6)] {
            let g = z(&f);
            let subs = enumerate_subgroups(&g, DEFAULT_ORDER_CAP).unwrap();
            assert_eq!(subs.len(), expect, "{f:?}");
            assert_eq!(subs.len(), brute_force_count(&g), "{f:?}");
        }
        // p-rank 2 count for Z_p^2 is p + 3
        assert_eq!(enumerate_subgroups(&z(&[5, 5]), DEFAULT_ORDER_CAP).unwrap().len(), 8);
    }

    #[test]
    fn cap_and_hom_validation() {
        assert!(matches!(enumerate_subgroups(&z(&[64, 65]), 4096), Err(Error::CapExceeded { .. })));
        // x -> x from Z_4 to Z_2 is fine, Z_2 to Z_4 is not
        assert!(GroupHom::new(vec![vec![1]], z(&[4]), z(&[2])).is_ok());
        assert!(GroupHom::new(vec![vec![1]], z(&[2]), z(&[4])).is_err());
        assert!(GroupHom::new(vec![vec![2]], z(&[2]), z(&[4])).is_ok());
    }

    #[test]
    fn small_constants() {
        let g = z(&[2, 2]);
        let maps = vec![GroupHom::coordinate(&g, &[0]).unwrap(), GroupHom::coordinate(&g, &[1]).unwrap()];
        let lw = DiscreteDatum::with_exact_exponents(g.clone(), maps, vec![Ratio::from(1); 2]).unwrap();
        assert_eq!(bls_constant(&lw, DEFAULT_ORDER_CAP).unwrap().value, 1.0);
        let ap = params(&[0.5, 0.5], &[1.0, 1.0], 0.5);
        assert_eq!(abls_constant(&lw, &ap, DEFAULT_ORDER_CAP).unwrap().value, 1.0);

        let zn = z(&[6]);
        let id = DiscreteDatum::new(zn.clone(), vec![GroupHom::coordinate(&zn, &[0]).unwrap()], vec![1.0]).unwrap();
        assert_relative_eq!(bls_constant(&id, DEFAULT_ORDER_CAP).unwrap().value, 1.0, epsilon = 1e-15);

        let z2 = z(&[2]);
        let two = DiscreteDatum::new(z2.clone(), vec![GroupHom::coordinate(&z2, &[0]).unwrap(); 2], vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(bls_constant(&two, DEFAULT_ORDER_CAP).unwrap().value, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_projection_blows_up_with_kernel() {
        // Z_3 x Z_3 onto the first factor with c = 1: the kernel gives ratio 3
        let g = z(&[3, 3]);
        let d = DiscreteDatum::new(g.clone(), vec![GroupHom::coordinate(&g, &[0]).unwrap()], vec![1.0]).unwrap();
        let b = bls_constant(&d, DEFAULT_ORDER_CAP).unwrap();
        assert_relative_eq!(b.value, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn indicator_of_maximizer_is_an_equality() {
        let g = z(&[4, 2]);
        let maps = vec![GroupHom::coordinate(&g, &[0]).unwrap(), GroupHom::new(vec![vec![2, 1]], g.clone(), z(&[2])).unwrap()];
        let d = DiscreteDatum::with_exact_exponents(g.clone(), maps, vec![Ratio::new(1, 2), Ratio::new(3, 2)]).unwrap();
        let ap = params(&[0.4, 0.6], &d.c, 0.6);
        let bl = bls_constant(&d, DEFAULT_ORDER_CAP).unwrap();
        let abl = abls_constant(&d, &ap, DEFAULT_ORDER_CAP).unwrap();
        let f: Vec<f64> = (0..g.order()).map(|e| if abl.argmax.contains(&e) { 1.0 } else { 0.0 }).collect();
        let m = discrete_adjoint_margin(&f, &d, &ap, bl.value).unwrap();
        assert!(m.margin.abs() < 1e-12 * m.lhs, "{m:?}");
        let delta: Vec<f64> = (0..g.order()).map(|e| f64::from(e == 0)).collect();
        let m0 = discrete_adjoint_margin(&delta, &d, &ap, bl.value).unwrap();
        assert!(m0.holds());
    }

    #[test]
    fn exact_comparison_agrees_with_floats() {
        let c = [Ratio::new(1, 2), Ratio::new(3, 2)];
        let cf = [0.5, 1.5];
        // 4 / (4^{1/2} 2^{3/2}) = 2 / (1 * 2^{3/2})
        let a = SizeRatio { numerator: 4, denominators: vec![4, 2] };
        let b = SizeRatio { numerator: 2, denominators: vec![1, 2] };
        assert_eq!(a.compare(&b, &cf, Some(&c)), Ordering::Equal);
        assert_relative_eq!(a.value(&cf), b.value(&cf), epsilon = 1e-15);
        let big = SizeRatio { numerator: 8, denominators: vec![4, 2] };
        assert_eq!(big.compare(&a, &cf, Some(&c)), Ordering::Greater);
        assert_eq!(big.compare(&a, &cf, None), Ordering::Greater);
    }
}

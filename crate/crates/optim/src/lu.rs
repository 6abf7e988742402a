//! Sparse LU factorisation of simplex bases (left-looking, threshold partial
//! pivoting) with a product-form eta file for basis updates.

use crate::Scalar;

const NONE: usize = usize::MAX;

/// Basis matrix in compressed-column form, one column per basis position.
pub(crate) struct BasisMatrix<T> {
    pub start: Vec<usize>,
    pub rows: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> BasisMatrix<T> {
    pub fn with_capacity(m: usize, nnz: usize) -> Self {
        let mut start = Vec::with_capacity(m + 1);
        start.push(0);
        Self {
            start,
            rows: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    pub fn push_col(&mut self, rows: &[usize], vals: &[T]) {
        self.rows.extend_from_slice(rows);
        self.vals.extend_from_slice(vals);
        self.start.push(self.rows.len());
    }

    fn col(&self, j: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.start[j], self.start[j + 1]);
        (&self.rows[a..b], &self.vals[a..b])
    }

    fn ncols(&self) -> usize {
        self.start.len() - 1
    }
}

/// Basis positions whose columns were linearly dependent, and rows left
/// without a pivot. Both lists have equal length.
#[derive(Debug)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

pub(crate) struct LuFactors<T> {
    m: usize,
    step_pos: Vec<usize>,
    step_row: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
    u_diag: Vec<T>,
    step_buf: Vec<T>,
}

impl<T: Scalar> LuFactors<T> {
    /// Factorises `b`. Dependent columns are reported through [`Singular`]; the
    /// returned factors are then only usable after the caller repairs the basis.
    pub fn factorize(b: &BasisMatrix<T>) -> Result<Self, Singular> {
        let m = b.ncols();
        let pivot_threshold = T::lit(0.1);
        let singular_tol = T::lit(1e-11);
        let drop_tol = T::lit(1e-14);

        let mut row_count = vec![0usize; m];
        for &r in &b.rows {
            row_count[r] += 1;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&j| (b.start[j + 1] - b.start[j], j));

        let mut f = LuFactors {
            m,
            step_pos: Vec::with_capacity(m),
            step_row: Vec::with_capacity(m),
            l_start: vec![0],
            l_idx: Vec::new(),
            l_val: Vec::new(),
            u_start: vec![0],
            u_idx: Vec::new(),
            u_val: Vec::new(),
            u_diag: Vec::with_capacity(m),
            step_buf: vec![T::zero(); m],
        };
        let mut row_step = vec![NONE; m];
        let mut work = vec![T::zero(); m];
        let mut mark = vec![0u32; m];
        let mut generation = 0u32;
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut singular_positions = Vec::new();

        for &pos in &order {
            generation += 1;
            let (rows, vals) = b.col(pos);
            for (&r, &v) in rows.iter().zip(vals) {
                work[r] = v;
            }
            // Nonzero pattern of L^{-1} b in topological order.
            topo.clear();
            for &r0 in rows {
                if mark[r0] == generation {
                    continue;
                }
                mark[r0] = generation;
                stack.push((r0, 0));
                while let Some(&mut (r, ref mut next)) = stack.last_mut() {
                    let s = row_step[r];
                    let mut pushed = false;
                    if s != NONE {
                        let (a, e) = (f.l_start[s], f.l_start[s + 1]);
                        while a + *next < e {
                            let i = f.l_idx[a + *next];
                            *next += 1;
                            if mark[i] != generation {
                                mark[i] = generation;
                                stack.push((i, 0));
                                pushed = true;
                                break;
                            }
                        }
                    }
                    if !pushed {
                        stack.pop();
                        topo.push(r);
                    }
                }
            }
            for &r in topo.iter().rev() {
                let s = row_step[r];
                if s == NONE {
                    continue;
                }
                let v = work[r];
                if v == T::zero() {
                    continue;
                }
                for k in f.l_start[s]..f.l_start[s + 1] {
                    work[f.l_idx[k]] -= f.l_val[k] * v;
                }
            }

            let mut max_abs = T::zero();
            for &r in &topo {
                if row_step[r] == NONE {
                    max_abs = max_abs.max(work[r].abs());
                }
            }
            if max_abs <= singular_tol {
                singular_positions.push(pos);
                for &r in &topo {
                    work[r] = T::zero();
                }
                continue;
            }
            let mut pivot_row = NONE;
            for &r in &topo {
                if row_step[r] != NONE || work[r].abs() < pivot_threshold * max_abs {
                    continue;
                }
                let better = pivot_row == NONE
                    || row_count[r] < row_count[pivot_row]
                    || (row_count[r] == row_count[pivot_row]
                        && (work[r].abs() > work[pivot_row].abs()
                            || (work[r].abs() == work[pivot_row].abs() && r < pivot_row)));
                if better {
                    pivot_row = r;
                }
            }
            let step = f.step_pos.len();
            let pivot = work[pivot_row];
            for &r in &topo {
                let v = work[r];
                work[r] = T::zero();
                if r == pivot_row || v.abs() <= drop_tol {
                    continue;
                }
                let s = row_step[r];
                if s != NONE {
                    f.u_idx.push(s);
                    f.u_val.push(v);
                } else {
                    f.l_idx.push(r);
                    f.l_val.push(v / pivot);
                }
            }
            f.u_start.push(f.u_idx.len());
            f.l_start.push(f.l_idx.len());
            f.u_diag.push(pivot);
            f.step_pos.push(pos);
            f.step_row.push(pivot_row);
            row_step[pivot_row] = step;
        }

        if singular_positions.is_empty() {
            Ok(f)
        } else {
            let rows = (0..m).filter(|&r| row_step[r] == NONE).collect();
            Err(Singular {
                positions: singular_positions,
                rows,
            })
        }
    }

    /// Solves `B w = a`; `a` is indexed by row on entry and holds `w` indexed by
    /// basis position on exit.
    pub fn ftran(&mut self, a: &mut [T]) {
        for k in 0..self.m {
            let v = a[self.step_row[k]];
            if v == T::zero() {
                continue;
            }
            for i in self.l_start[k]..self.l_start[k + 1] {
                a[self.l_idx[i]] -= self.l_val[i] * v;
            }
        }
        let y = &mut self.step_buf;
        for k in 0..self.m {
            y[k] = a[self.step_row[k]];
        }
        for k in (0..self.m).rev() {
            let z = y[k] / self.u_diag[k];
            y[k] = z;
            if z == T::zero() {
                continue;
            }
            for i in self.u_start[k]..self.u_start[k + 1] {
                y[self.u_idx[i]] -= self.u_val[i] * z;
            }
        }
        for k in 0..self.m {
            a[self.step_pos[k]] = y[k];
        }
    }

    /// Solves `Bᵀ π = c`; `c` is indexed by basis position on entry and holds
    /// `π` indexed by row on exit.
    pub fn btran(&mut self, c: &mut [T]) {
        let z = &mut self.step_buf;
        for k in 0..self.m {
            let mut v = c[self.step_pos[k]];
            for i in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[i] * z[self.u_idx[i]];
            }
            z[k] = v / self.u_diag[k];
        }
        for k in (0..self.m).rev() {
            let mut v = z[k];
            for i in self.l_start[k]..self.l_start[k + 1] {
                v -= self.l_val[i] * c[self.l_idx[i]];
            }
            c[self.step_row[k]] = v;
        }
    }
}

struct Eta<T> {
    pos: usize,
    pivot: T,
    idx: Vec<usize>,
    val: Vec<T>,
}

/// LU factors plus the eta file accumulated since the last refactorisation.
pub(crate) struct BasisFactor<T> {
    lu: LuFactors<T>,
    etas: Vec<Eta<T>>,
}

impl<T: Scalar> BasisFactor<T> {
    pub fn new(lu: LuFactors<T>) -> Self {
        Self {
            lu,
            etas: Vec::new(),
        }
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn ftran(&mut self, a: &mut [T]) {
        self.lu.ftran(a);
        for eta in &self.etas {
            let wr = a[eta.pos] / eta.pivot;
            a[eta.pos] = wr;
            if wr == T::zero() {
                continue;
            }
            for (&i, &v) in eta.idx.iter().zip(&eta.val) {
                a[i] -= v * wr;
            }
        }
    }

    pub fn btran(&mut self, c: &mut [T]) {
        for eta in self.etas.iter().rev() {
            let mut v = c[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                v -= a * c[i];
            }
            c[eta.pos] = v / eta.pivot;
        }
        self.lu.btran(c);
    }

    /// Records the replacement of the column at `pos` by a column whose FTRAN
    /// image is `alpha`.
    pub fn update(&mut self, pos: usize, alpha: &[T]) {
        let drop_tol = T::lit(1e-13);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a.abs() > drop_tol {
                idx.push(i);
                val.push(a);
            }
        }
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            idx,
            val,
        });
    }
}

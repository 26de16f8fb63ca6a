/// Compressed sparse rows of sorted `u32` values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Csr {
    offsets: Vec<usize>,
    values: Vec<u32>,
}

impl Default for Csr {
    fn default() -> Self {
        Self {
            offsets: vec![0],
            values: Vec::new(),
        }
    }
}

impl Csr {
    pub(crate) fn from_parts(offsets: Vec<usize>, values: Vec<u32>) -> Self {
        debug_assert_eq!(offsets.first().copied(), Some(0));
        debug_assert_eq!(offsets.last().copied(), Some(values.len()));
        Self { offsets, values }
    }

    pub(crate) fn from_rows<I, R>(rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[u32]>,
    {
        let mut offsets = vec![0];
        let mut values = Vec::new();
        for row in rows {
            values.extend_from_slice(row.as_ref());
            offsets.push(values.len());
        }
        Self { offsets, values }
    }

    #[inline]
    pub(crate) fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub(crate) fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[u32] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.offsets.windows(2).map(move |w| &self.values[w[0]..w[1]])
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub(crate) fn values(&self) -> &[u32] {
        &self.values
    }

    /// Row `r` of the result lists the rows of `self` containing value `r`.
    /// Output rows are sorted because rows are visited in order.
    pub(crate) fn transpose(&self, columns: usize) -> Csr {
        let mut counts = vec![0usize; columns + 1];
        for &v in &self.values {
            counts[v as usize + 1] += 1;
        }
        for i in 0..columns {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut values = vec![0u32; self.values.len()];
        for (r, row) in self.iter().enumerate() {
            for &v in row {
                let slot = &mut cursor[v as usize];
                values[*slot] = r as u32;
                *slot += 1;
            }
        }
        Csr { offsets, values }
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Csr {
        Csr::from_rows(rows.iter().map(|&r| self.row(r)))
    }
}

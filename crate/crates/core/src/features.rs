//! Node feature matrices and the embedding store formats.
//!
//! Binary layout: `N` and `d` as little-endian `u64`, then `N*d` little-endian
//! `f64` values in row-major order. The text layout is a `N d` line followed by
//! one whitespace-separated row per line; lines starting with `#` are comments.

use std::io::{BufRead, Read, Write};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `N x d` node features with all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Features<S = f64>(Array2<S>);

impl<S: Scalar> Features<S> {
    pub fn try_new(values: Array2<S>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let cols = values.ncols().max(1);
            return Err(Error::NonFinite(format!(
                "feature matrix at row {} column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Features(values))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, S> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<S> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<S> {
        self.0
    }

    pub fn cast<T: Scalar>(&self) -> Features<T> {
        Features(self.0.mapv(|v| T::of(v.as_f64())))
    }

    /// Rows reordered so that row `i` of the result is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Features<S> {
        Features(self.0.select(ndarray::Axis(0), order))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.cols() as u64).to_le_bytes())?;
        for v in self.0.iter() {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated embedding store: {e}")))?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let total = n
            .checked_mul(d)
            .ok_or_else(|| Error::Format("embedding store shape overflows".into()))?;
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            data.push(S::of(f64::from_le_bytes(next(&mut r)?)));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| Error::Format(e.to_string()))?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in embedding store", rest.len())));
        }
        let arr = Array2::from_shape_vec((n, d), data).map_err(|e| Error::Shape(e.to_string()))?;
        Features::try_new(arr)
    }

    pub fn write_text<W: Write>(&self, mut w: W, header: &[String]) -> std::io::Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{} {}", self.rows(), self.cols())?;
        for row in self.0.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                write!(w, "{:?}", v.as_f64())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut shape: Option<(usize, usize)> = None;
        let mut data = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::Format(format!("embedding text line {}: {m}", lineno + 1));
            let nums: Vec<&str> = line.split_whitespace().collect();
            match shape {
                None => {
                    if nums.len() != 2 {
                        return Err(bad("expected `N d` header".into()));
                    }
                    let n = nums[0].parse().map_err(|e| bad(format!("{e}")))?;
                    let d = nums[1].parse().map_err(|e| bad(format!("{e}")))?;
                    shape = Some((n, d));
                }
                Some((_, d)) => {
                    if nums.len() != d {
                        return Err(bad(format!("expected {d} values, found {}", nums.len())));
                    }
                    for t in nums {
                        let v: f64 = t.parse().map_err(|e| bad(format!("{t:?}: {e}")))?;
                        data.push(S::of(v));
                    }
                }
            }
        }
        let (n, d) = shape.ok_or_else(|| Error::Format("empty embedding text".into()))?;
        if data.len() != n * d {
            return Err(Error::Format(format!("expected {n} rows, found {}", data.len() / d.max(1))));
        }
        let arr = Array2::from_shape_vec((n, d), data).map_err(|e| Error::Shape(e.to_string()))?;
        Features::try_new(arr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite() {
        let a = ndarray::arr2(&[[1.0, f64::NAN]]);
        assert!(Features::try_new(a).is_err());
    }

    #[test]
    fn binary_layout_is_header_then_row_major() {
        let f = Features::try_new(ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(&buf[0..8], &3u64.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16 + 8..16 + 16], &2.0f64.to_le_bytes());
        assert!(Features::<f64>::read_binary(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn both_store_formats_roundtrip(n in 1usize..5, d in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((n, d), |_| rng.random_range(-1e3..1e3));
            let f = Features::try_new(a).unwrap();
            let mut bin = Vec::new();
            f.write_binary(&mut bin).unwrap();
            prop_assert_eq!(&Features::<f64>::read_binary(bin.as_slice()).unwrap(), &f);
            let mut txt = Vec::new();
            f.write_text(&mut txt, &["hdr".to_string()]).unwrap();
            prop_assert_eq!(&Features::<f64>::read_text(txt.as_slice()).unwrap(), &f);
        }
    }
}

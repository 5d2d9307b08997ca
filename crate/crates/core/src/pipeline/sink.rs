use std::collections::BTreeMap;
use std::io::{self, Write};

/// Writes lines in index order no matter in which order they arrive.
/// `None` marks an index that produced nothing.
pub struct OrderedSink<W: Write> {
    out: W,
    next: usize,
    pending: BTreeMap<usize, Option<String>>,
}

impl<W: Write> OrderedSink<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            next: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, index: usize, line: Option<String>) -> io::Result<()> {
        self.pending.insert(index, line);
        while let Some(line) = self.pending.remove(&self.next) {
            if let Some(l) = line {
                writeln!(self.out, "{l}")?;
            }
            self.next += 1;
        }
        Ok(())
    }

    /// Flush and return the writer. Indices never pushed leave a gap that
    /// stops later lines from being written, so this fails on gaps.
    pub fn finish(mut self) -> io::Result<W> {
        if !self.pending.is_empty() {
            return Err(io::Error::other(format!(
                "index {} never arrived",
                self.next
            )));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_order_arrivals_are_written_in_order() {
        let mut s = OrderedSink::new(Vec::new());
        s.push(2, Some("c".into())).unwrap();
        s.push(1, None).unwrap();
        s.push(0, Some("a".into())).unwrap();
        assert_eq!(String::from_utf8(s.finish().unwrap()).unwrap(), "a\nc\n");
    }

    #[test]
    fn gaps_are_reported() {
        let mut s = OrderedSink::new(Vec::new());
        s.push(1, Some("b".into())).unwrap();
        assert!(s.finish().is_err());
    }
}

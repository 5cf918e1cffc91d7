use std::collections::BTreeMap;

use super::frame::StreamChunk;
use crate::ranges::RangeSet;

/// Sending half of a stream. Bytes are modeled by offsets only.
#[derive(Clone, Debug, Default)]
pub struct SendStream {
    written: u64,
    /// Bulk source that never runs dry.
    infinite: bool,
    fin: bool,
    fin_sent: bool,
    fin_lost: bool,
    fin_acked: bool,
    next_new: u64,
    acked: RangeSet,
    retransmit: RangeSet,
    marks: BTreeMap<u64, u64>,
}

impl SendStream {
    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn is_finished(&self) -> bool {
        self.fin
    }

    pub fn write(&mut self, len: u64) {
        debug_assert!(!self.fin);
        self.written += len;
    }

    pub fn set_infinite(&mut self) {
        self.infinite = true;
    }

    /// Tags the message ending at the current write offset.
    pub fn mark(&mut self, tag: u64) {
        self.marks.insert(self.written, tag);
    }

    pub fn finish(&mut self) {
        self.fin = true;
    }

    pub fn has_retransmit(&self) -> bool {
        !self.retransmit.is_empty() || self.fin_lost
    }

    pub fn has_new(&self) -> bool {
        self.infinite || self.next_new < self.written || (self.fin && !self.fin_sent)
    }

    /// Bytes written but never transmitted.
    pub fn unsent(&self) -> u64 {
        if self.infinite {
            return 0;
        }
        self.written - self.next_new
    }

    pub fn is_done(&self) -> bool {
        self.fin && self.fin_acked && self.acked.covers(0..self.written)
    }

    fn chunk(&self, offset: u64, len: u64) -> StreamChunk {
        let end = offset + len;
        let fin = self.fin && !self.infinite && end == self.written;
        let marks = self
            .marks
            .range(offset + 1..=end)
            .map(|(&e, &t)| (e, t))
            .collect();
        StreamChunk {
            stream: 0,
            offset,
            len: len as u32,
            fin,
            marks,
        }
    }

    /// Next chunk of previously lost data, at most `max_len` bytes.
    pub fn next_retransmit(&mut self, max_len: u64) -> Option<StreamChunk> {
        while let Some(r) = self.retransmit.pop_front(max_len) {
            if let Some(gap) = self.acked.gaps_within(r.clone()).into_iter().next() {
                // anything past the first gap goes back for the next call
                if gap.end < r.end {
                    self.retransmit.insert(gap.end..r.end);
                }
                let c = self.chunk(gap.start, gap.end - gap.start);
                if c.fin {
                    self.fin_lost = false;
                }
                return Some(c);
            }
        }
        if self.fin_lost {
            self.fin_lost = false;
            return Some(self.chunk(self.written, 0));
        }
        None
    }

    /// Next chunk of never-sent data, at most `max_len` bytes.
    pub fn next_new(&mut self, max_len: u64) -> Option<StreamChunk> {
        let available = if self.infinite {
            max_len
        } else {
            (self.written - self.next_new).min(max_len)
        };
        if available == 0 && !(self.fin && !self.fin_sent && !self.infinite) {
            return None;
        }
        let c = self.chunk(self.next_new, available);
        self.next_new += available;
        if c.fin {
            self.fin_sent = true;
        }
        Some(c)
    }

    pub fn on_acked(&mut self, chunk: &StreamChunk) {
        self.acked.insert(chunk.offset..chunk.end());
        if chunk.fin {
            self.fin_acked = true;
            self.fin_lost = false;
        }
    }

    pub fn on_lost(&mut self, chunk: &StreamChunk) {
        for gap in self.acked.gaps_within(chunk.offset..chunk.end()) {
            self.retransmit.insert(gap);
        }
        if chunk.fin && !self.fin_acked {
            self.fin_lost = true;
        }
    }

    pub fn acked_bytes(&self) -> u64 {
        self.acked.contiguous_end(0)
    }
}

/// What one received chunk made deliverable.
#[derive(Debug, Default, PartialEq)]
pub struct Delivery {
    pub new_bytes: u64,
    pub completed: Vec<u64>,
    pub fin: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RecvStream {
    received: RangeSet,
    delivered: u64,
    fin_at: Option<u64>,
    fin_delivered: bool,
    marks: BTreeMap<u64, u64>,
}

impl RecvStream {
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn is_finished(&self) -> bool {
        self.fin_delivered
    }

    pub fn on_chunk(&mut self, chunk: &StreamChunk) -> Delivery {
        self.received.insert(chunk.offset..chunk.end());
        for &(end, tag) in &chunk.marks {
            if end > self.delivered {
                self.marks.insert(end, tag);
            }
        }
        if chunk.fin {
            self.fin_at = Some(chunk.end());
        }
        let new_end = self.received.contiguous_end(self.delivered);
        let mut out = Delivery {
            new_bytes: new_end - self.delivered,
            ..Delivery::default()
        };
        self.delivered = new_end;
        while let Some(entry) = self.marks.first_entry() {
            if *entry.key() > self.delivered {
                break;
            }
            out.completed.push(entry.remove());
        }
        if !self.fin_delivered && self.fin_at.is_some_and(|f| f <= self.delivered) {
            self.fin_delivered = true;
            out.fin = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_carry_marks_and_fin() {
        let mut s = SendStream::default();
        s.write(1000);
        s.mark(7);
        s.write(1500);
        s.mark(8);
        s.finish();
        let a = s.next_new(1200).unwrap();
        assert_eq!((a.offset, a.len, a.fin), (0, 1200, false));
        assert_eq!(a.marks, vec![(1000, 7)]);
        let b = s.next_new(1200).unwrap();
        let c = s.next_new(1200).unwrap();
        assert_eq!((c.offset, c.len, c.fin), (2400, 100, true));
        assert_eq!(c.marks, vec![(2500, 8)]);
        assert!(s.next_new(1200).is_none());

        let mut r = RecvStream::default();
        let d = r.on_chunk(&b);
        assert_eq!(d.new_bytes, 0);
        let d = r.on_chunk(&a);
        assert_eq!(d.new_bytes, 2400);
        assert_eq!(d.completed, vec![7]);
        let d = r.on_chunk(&c);
        assert_eq!(d, Delivery { new_bytes: 100, completed: vec![8], fin: true });
    }

    #[test]
    fn lost_ranges_are_resent_once_acked_parts_trimmed() {
        let mut s = SendStream::default();
        s.write(3600);
        let a = s.next_new(1200).unwrap();
        let b = s.next_new(1200).unwrap();
        let _c = s.next_new(1200).unwrap();
        s.on_lost(&a);
        s.on_lost(&b);
        // a later copy of b got through after all
        s.on_acked(&b);
        let r = s.next_retransmit(1200).unwrap();
        assert_eq!((r.offset, r.len), (0, 1200));
        assert!(s.next_retransmit(1200).is_none());
    }

    #[test]
    fn lone_fin_is_retransmitted() {
        let mut s = SendStream::default();
        s.write(100);
        let a = s.next_new(1200).unwrap();
        assert!(!a.fin);
        s.finish();
        let f = s.next_new(1200).unwrap();
        assert_eq!((f.len, f.fin), (0, true));
        assert!(!s.has_new());
        s.on_lost(&f);
        assert!(s.has_retransmit());
        let f2 = s.next_retransmit(1200).unwrap();
        assert!(f2.fin);
        s.on_acked(&a);
        s.on_acked(&f2);
        assert!(s.is_done());
    }
}

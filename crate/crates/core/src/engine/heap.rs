/// Four-ary min-heap over slot indices `0..n`, one entry per slot, with keys
/// updated in place.
const ARITY: usize = 4;

#[derive(Clone, Debug)]
pub(crate) struct SlotHeap {
    heap: Vec<(f64, u32)>,
    pos: Vec<u32>,
}

#[inline]
fn less(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl SlotHeap {
    pub fn new(keys: Vec<f64>) -> Self {
        let n = keys.len();
        let mut h = Self {
            heap: keys.into_iter().zip(0..n as u32).collect(),
            pos: (0..n as u32).collect(),
        };
        for i in (0..n.div_ceil(ARITY)).rev() {
            h.sift_down(i);
        }
        h
    }

    #[inline]
    fn place(&mut self, i: usize, e: (f64, u32)) {
        self.heap[i] = e;
        self.pos[e.1 as usize] = i as u32;
    }

    fn sift_up(&mut self, mut i: usize) {
        let e = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / ARITY;
            let p = self.heap[parent];
            if !less(e, p) {
                break;
            }
            self.place(i, p);
            i = parent;
        }
        self.place(i, e);
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        let e = self.heap[i];
        loop {
            let first = ARITY * i + 1;
            if first >= n {
                break;
            }
            let mut c = first;
            let mut best = self.heap[first];
            for j in first + 1..(first + ARITY).min(n) {
                let h = self.heap[j];
                if less(h, best) {
                    c = j;
                    best = h;
                }
            }
            if !less(best, e) {
                break;
            }
            self.place(i, best);
            i = c;
        }
        self.place(i, e);
    }

    /// Smallest key and its slot.
    #[inline]
    pub fn top(&self) -> (usize, f64) {
        let (k, s) = self.heap[0];
        (s as usize, k)
    }

    pub fn update(&mut self, slot: usize, key: f64) {
        let i = self.pos[slot] as usize;
        let old = self.heap[i].0;
        self.heap[i].0 = key;
        if key < old {
            self.sift_up(i);
        } else if key > old {
            self.sift_down(i);
        }
    }
}

/// Calendar queue of per-slot expiry times. Entries are bucketed by time;
/// an entry is live while it matches the slot's registered time.
#[derive(Clone, Debug)]
pub(crate) struct ExpiryWheel {
    width: f64,
    mask: u64,
    buckets: Vec<Vec<(u32, f64)>>,
    due: Vec<f64>,
    cursor: u64,
    kept: Vec<(u32, f64)>,
}

impl ExpiryWheel {
    /// `width` is the bucket width and `span` the longest distance between
    /// the present and a registered time.
    pub fn new(due: Vec<f64>, start: f64, width: f64, span: f64) -> Self {
        let count = ((span / width).ceil() as u64 + 2).next_power_of_two();
        let mut w = Self {
            width,
            mask: count - 1,
            buckets: vec![Vec::new(); count as usize],
            due: vec![f64::NAN; due.len()],
            cursor: (start / width).floor() as u64,
            kept: Vec::new(),
        };
        for (s, t) in due.into_iter().enumerate() {
            w.set(s, t);
        }
        w
    }

    #[inline]
    fn bucket(&self, t: f64) -> u64 {
        (t / self.width).floor() as u64
    }

    pub fn set(&mut self, slot: usize, t: f64) {
        if self.due[slot].to_bits() == t.to_bits() {
            return;
        }
        self.due[slot] = t;
        let b = self.bucket(t).max(self.cursor);
        self.buckets[(b & self.mask) as usize].push((slot as u32, t));
    }

    /// Removes and returns the slots whose registered time is before `now`.
    pub fn drain_before(&mut self, now: f64, out: &mut Vec<usize>) {
        out.clear();
        let last = self.bucket(now).max(self.cursor);
        let steps = (last - self.cursor).min(self.mask);
        let mut b = last - steps;
        let mut kept = std::mem::take(&mut self.kept);
        loop {
            let idx = (b & self.mask) as usize;
            let entries = std::mem::take(&mut self.buckets[idx]);
            for &(s, t) in &entries {
                if self.due[s as usize].to_bits() != t.to_bits() {
                    continue;
                }
                if t < now {
                    self.due[s as usize] = f64::NAN;
                    out.push(s as usize);
                } else {
                    kept.push((s, t));
                }
            }
            let mut entries = entries;
            entries.clear();
            entries.append(&mut kept);
            self.buckets[idx] = entries;
            if b == last {
                break;
            }
            b += 1;
        }
        self.kept = kept;
        self.cursor = last;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::RngStream;

    #[test]
    fn tracks_minimum_under_updates() {
        let mut rng = RngStream::new(1, 0);
        let n = 57;
        let mut keys: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut h = SlotHeap::new(keys.clone());
        for _ in 0..5000 {
            let s = rng.index(n);
            let k = if rng.coin() { rng.normal() } else { keys[s] };
            keys[s] = k;
            h.update(s, k);
            let (slot, key) = h.top();
            let best = keys
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            assert_eq!((slot, key), (best.0, *best.1));
        }
    }

    #[test]
    fn wheel_returns_exactly_the_expired_slots() {
        let mut rng = RngStream::new(2, 0);
        let n = 40;
        let mut due: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut w = ExpiryWheel::new(due.clone(), 0.0, 0.01, 1.0);
        let mut now = 0.0;
        let mut out = Vec::new();
        for _ in 0..3000 {
            now += 0.013 * rng.uniform();
            w.drain_before(now, &mut out);
            out.sort_unstable();
            let mut want: Vec<usize> = (0..n).filter(|&s| due[s] < now).collect();
            want.sort_unstable();
            assert_eq!(out, want);
            for &s in &want {
                due[s] = now + rng.uniform();
                w.set(s, due[s]);
            }
            let s = rng.index(n);
            due[s] = now + rng.uniform();
            w.set(s, due[s]);
        }
    }
}
